#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "nodags/graph.hpp"
#include "nodags/sem.hpp"

namespace nodags {

enum class ModelKind { mlp, linear_direct };

[[nodiscard]] ModelKind model_kind_from_string(const std::string& name);
[[nodiscard]] std::string model_kind_to_string(ModelKind kind);

struct Layer {
    Eigen::MatrixXd w;  // out x in
    Eigen::VectorXd b;
};

// Gumbel-Softmax mask draw. hard is the 0.5-threshold of soft; both have a
// zero diagonal.
struct MaskSample {
    Eigen::MatrixXd hard;
    Eigen::MatrixXd soft;
};

// Learnable causal mechanism: masked MLP g with diagonal preconditioning,
//   f(x)_i = [g(M'_{i,*} .* (Lambda x))]_i / Lambda_i.
struct MechanismParams {
    int d = 0;
    ModelKind kind = ModelKind::mlp;
    Activation activation = Activation::tanh;
    std::vector<Layer> layers;
    Eigen::MatrixXd mask_logits;     // diagonal frozen (ignored)
    Eigen::VectorXd log_lambda;
    Eigen::VectorXd noise_means;
    Eigen::VectorXd noise_log_scales;
    double poisson_intensity = 2.0;
    double lipschitz_target = 0.9;

    // Power-iteration vectors, persisted across lipschitz_rescale calls.
    // Runtime state only; not serialized.
    std::vector<Eigen::VectorXd> power_left;
    std::vector<Eigen::VectorXd> power_right;

    [[nodiscard]] int n_layers() const { return static_cast<int>(layers.size()); }
    void validate() const;
};

[[nodiscard]] MaskSample sample_mask(const Eigen::MatrixXd& mask_logits, double temperature,
                                     std::uint64_t seed);

// All-ones off-diagonal mask (used by the linear-direct kind and evaluation
// paths that bypass mask sampling).
[[nodiscard]] MaskSample full_mask(int d);

// Hard 0.5-threshold readout of the edge probabilities, as used at
// evaluation time.
[[nodiscard]] MaskSample threshold_mask(const MechanismParams& params);

// sigmoid(logits) off-diagonal, zero diagonal. Doubles as AUPRC scores and
// as the closed-form E||M'||_1 source.
[[nodiscard]] Eigen::MatrixXd edge_probabilities(const Eigen::MatrixXd& mask_logits);

// Edge scores in [0, 1] for a fitted model. For the mlp kind this is
// edge_probabilities(mask_logits); for linear-direct it is a monotone squash
// of |W_ij| with 0.5 at |W_ij| = 0.1.
[[nodiscard]] Eigen::MatrixXd model_edge_scores(const MechanismParams& params);

[[nodiscard]] double expected_l1_penalty(const Eigen::MatrixXd& mask_logits);

// Runs the masked network on the d per-node input rows of one sample.
[[nodiscard]] Eigen::VectorXd mechanism_forward(const MechanismParams& params,
                                                const MaskSample& mask, const Eigen::VectorXd& x);

// Batched variant: one row of x per sample, returns f(x) rows.
[[nodiscard]] Eigen::MatrixXd mechanism_forward_batch(const MechanismParams& params,
                                                      const MaskSample& mask,
                                                      const Eigen::MatrixXd& x);

// Plain MLP pass on arbitrary row inputs (already masked/scaled). Hidden
// layers carry the activation; the output layer is linear unless the network
// has a single layer, in which case the activation applies to it.
[[nodiscard]] Eigen::MatrixXd mlp_forward(const MechanismParams& params, const Eigen::MatrixXd& rows);

// Power-iteration estimate of each layer's spectral norm; if the product of
// the estimates exceeds target_L, every layer is scaled by
// (target_L / product)^(1/#layers).
void lipschitz_rescale(MechanismParams& params, int n_l, double target_l, std::uint64_t seed);

// Exact spectral norm, small-matrix oracle.
[[nodiscard]] double spectral_norm_exact(const Eigen::MatrixXd& m);

// Diagonal preconditioner for an acyclic graph: along the topological order,
// the last node gets 1 and each earlier node gets (d^2 L / c) times the
// largest value among its successors in the order. Conjugating an L-Lipschitz
// DAG mechanism by the result makes it c-contractive.
[[nodiscard]] Eigen::VectorXd construct_lambda_dag(double lipschitz, double contraction,
                                                   const CausalGraph& graph);

}  // namespace nodags
