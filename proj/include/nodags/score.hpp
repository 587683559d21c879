#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "nodags/logdet.hpp"
#include "nodags/mechanism.hpp"
#include "nodags/sem.hpp"

namespace nodags {

struct TrainConfig {
    double lambda_sparse = 0.01;
    double lr = 1e-2;
    double lr_decay = 1.0;  // per-epoch multiplier in (0, 1]
    int epochs = 200;
    int batch_size = 512;
    int n_hidden_layers = 0;  // 0..3
    int n_l = 10;
    double lipschitz_target = 0.9;
    double poisson_intensity_init = 2.0;
    double gumbel_temperature = 1.0;
    std::uint64_t seed = 0;
    LogDetMode logdet_mode = LogDetMode::exact;
    // Model choices beyond the core hyperparameters.
    ModelKind kind = ModelKind::mlp;
    Activation activation = Activation::tanh;
    int n_probes = 1;
    int n_terms = 8;

    void validate() const;
    [[nodiscard]] LogDetConfig logdet_config() const;
};

// One partial derivative per continuous entry of MechanismParams.
struct GradientVector {
    std::vector<Layer> layers;
    Eigen::MatrixXd mask_logits;
    Eigen::VectorXd log_lambda;
    Eigen::VectorXd noise_means;
    Eigen::VectorXd noise_log_scales;

    static GradientVector zeros_like(const MechanismParams& params);
    [[nodiscard]] bool all_finite() const;
    void check_finite() const;  // throws naming the offending block
    void scale(double s);
    void add(const GradientVector& other, double s = 1.0);
};

// Forward treatment of the sampled mask: hard values with the
// straight-through gradient, or the soft relaxation (used by the
// finite-difference checks, where the realized objective must be
// differentiable in the logits).
enum class MaskMode { hard_straight_through, soft };

// Realized estimator randomness for one batch: one truncation order and one
// set of probe vectors per sample. Empty in exact mode.
struct BatchRandomness {
    std::vector<int> n_per_sample;
    std::vector<std::vector<Eigen::VectorXd>> probes;
};

[[nodiscard]] BatchRandomness draw_batch_randomness(const LogDetConfig& cfg, int b, int d,
                                                    std::uint64_t seed);

// Pins everything stochastic in one gradient evaluation.
struct FixedRandomness {
    MaskSample mask;
    MaskMode mask_mode = MaskMode::hard_straight_through;
    double temperature = 1.0;
    BatchRandomness batch;
};

[[nodiscard]] FixedRandomness make_fixed_randomness(const MechanismParams& params,
                                                    const TrainConfig& cfg, int batch_size,
                                                    std::uint64_t seed);

struct ScoreStats {
    double score = 0.0;        // summed over samples (Eq. of the interventional log-likelihood)
    double mean_logdet = 0.0;  // per-sample mean of the log-det term
};

// Interventional log-likelihood of one batch under the realized mask and
// estimator randomness. If grad is non-null, accumulates d(score)/d(params)
// scaled by grad_scale.
ScoreStats score_batch(const MechanismParams& params, const Eigen::MatrixXd& batch,
                       const InterventionSpec& spec, const LogDetConfig& ld_cfg,
                       const FixedRandomness& rnd, GradientVector* grad = nullptr,
                       double grad_scale = 1.0);

// Spec surface: samples the mask and estimator randomness from `seed`.
[[nodiscard]] double score(const MechanismParams& params, const MaskSample& mask,
                           const Eigen::MatrixXd& batch, const InterventionSpec& spec,
                           const LogDetConfig& ld_cfg, std::uint64_t seed);

// Sparsity penalty of the penalized objective: closed-form E||M'||_1 for the
// mlp kind, direct l1 on the weights for linear-direct.
[[nodiscard]] double sparsity_penalty(const MechanismParams& params);
void add_sparsity_penalty_gradient(const MechanismParams& params, double lambda_scaled,
                                   GradientVector& grad);

// Full-dataset penalized objective (sum of per-experiment scores minus
// lambda times the expected-l1 penalty).
[[nodiscard]] double objective(const MechanismParams& params, const Dataset& dataset,
                               const TrainConfig& cfg, std::uint64_t seed);

// Exact reverse-mode gradient of the realized penalized objective on one
// batch.
[[nodiscard]] GradientVector gradient(const MechanismParams& params, const Eigen::MatrixXd& batch,
                                      const InterventionSpec& spec, const TrainConfig& cfg,
                                      const FixedRandomness& rnd);

[[nodiscard]] MechanismParams init_params(const TrainConfig& cfg, int d);

struct EpochStats {
    int epoch = 0;
    double objective = 0.0;
    double penalty = 0.0;
    double mean_logdet = 0.0;
};

struct TrainResult {
    MechanismParams params;
    std::vector<EpochStats> history;
};

// Invoked after each epoch with the current parameters (post-rescale).
using EpochCallback = std::function<void(const MechanismParams&, const EpochStats&)>;

[[nodiscard]] TrainResult train(const Dataset& dataset, const TrainConfig& cfg,
                                const EpochCallback& on_epoch = {});

}  // namespace nodags
