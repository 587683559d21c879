#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace nodags {

// Directed graph over d nodes. edges(i, j) == 1 means j -> i (j is a parent
// of i). Cycles are allowed; self-loops are not.
struct CausalGraph {
    int d = 0;
    Eigen::MatrixXi edges;

    CausalGraph() = default;
    CausalGraph(int d_, Eigen::MatrixXi edges_);

    static CausalGraph empty(int d);

    [[nodiscard]] int edge_count() const;
    [[nodiscard]] bool has_edge(int from, int to) const { return edges(to, from) != 0; }
};

// Kahn's algorithm. Returns a topological order (parents before children)
// or nullopt when the graph contains a cycle.
[[nodiscard]] std::optional<std::vector<int>> topological_sort(const CausalGraph& graph);

[[nodiscard]] bool is_acyclic(const CausalGraph& graph);

}  // namespace nodags
