#include "nodags/graph.hpp"

#include <stdexcept>

namespace nodags {

CausalGraph::CausalGraph(int d_, Eigen::MatrixXi edges_) : d(d_), edges(std::move(edges_)) {
    if (d <= 0) {
        throw std::invalid_argument("graph node count must be positive");
    }
    if (edges.rows() != d || edges.cols() != d) {
        throw std::invalid_argument("edge matrix shape does not match node count");
    }
    for (int i = 0; i < d; ++i) {
        if (edges(i, i) != 0) {
            throw std::invalid_argument("self-loops are not allowed");
        }
        for (int j = 0; j < d; ++j) {
            if (edges(i, j) != 0 && edges(i, j) != 1) {
                throw std::invalid_argument("edge entries must be 0 or 1");
            }
        }
    }
}

CausalGraph CausalGraph::empty(int d) {
    return CausalGraph(d, Eigen::MatrixXi::Zero(d, d));
}

int CausalGraph::edge_count() const { return edges.sum(); }

std::optional<std::vector<int>> topological_sort(const CausalGraph& graph) {
    const int d = graph.d;
    std::vector<int> in_degree(d, 0);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (graph.edges(i, j) != 0) {
                ++in_degree[i];
            }
        }
    }
    std::vector<int> order;
    order.reserve(d);
    std::vector<int> frontier;
    for (int i = 0; i < d; ++i) {
        if (in_degree[i] == 0) {
            frontier.push_back(i);
        }
    }
    while (!frontier.empty()) {
        const int node = frontier.back();
        frontier.pop_back();
        order.push_back(node);
        for (int i = 0; i < d; ++i) {
            if (graph.edges(i, node) != 0 && --in_degree[i] == 0) {
                frontier.push_back(i);
            }
        }
    }
    if (static_cast<int>(order.size()) != d) {
        return std::nullopt;
    }
    return order;
}

bool is_acyclic(const CausalGraph& graph) { return topological_sort(graph).has_value(); }

}  // namespace nodags
