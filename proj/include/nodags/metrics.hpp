#pragma once

#include <Eigen/Dense>

#include "nodags/graph.hpp"
#include "nodags/mechanism.hpp"
#include "nodags/sem.hpp"

namespace nodags {

struct MetricsReport {
    bool has_structural = false;
    int shd = 0;
    int true_pos = 0;
    int total_edges = 0;
    double auprc = 0.0;
    double i_nll = 0.0;  // mean negative log-likelihood per sample, nats
    double i_mae = 0.0;
};

[[nodiscard]] CausalGraph threshold_graph(const Eigen::MatrixXd& edge_probs, double t);

// Node pairs whose edge configuration differs; a pure reversal counts as one
// error, extra/missing edges count one each.
[[nodiscard]] int shd(const CausalGraph& pred, const CausalGraph& truth);

// (directed true positives, predicted edge count)
[[nodiscard]] std::pair<int, int> true_pos_total(const CausalGraph& pred,
                                                 const CausalGraph& truth);

// Average precision over the d(d-1) off-diagonal candidates, scores sorted
// descending with stable index tie-break.
[[nodiscard]] double auprc(const Eigen::MatrixXd& edge_probs, const CausalGraph& truth);

// Holdout mean NLL of the passively observed coordinates, exact log-det,
// hard 0.5-threshold mask. Experiments with every node intervened contribute
// no observed coordinates and are excluded from the mean.
[[nodiscard]] double interventional_nll(const MechanismParams& params, const Dataset& holdout);

// mean ||f(x) - x||_1 / d over every holdout sample (hard mask).
[[nodiscard]] double i_mae(const MechanismParams& params, const Dataset& holdout);

[[nodiscard]] MetricsReport evaluate(const MechanismParams& params, const Dataset& holdout,
                                     const CausalGraph* truth, double threshold = 0.5);

}  // namespace nodags
