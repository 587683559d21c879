#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "nodags/graph.hpp"

namespace nodags {

enum class Activation { linear, relu, selu, tanh };

[[nodiscard]] Activation activation_from_string(const std::string& name);
[[nodiscard]] std::string activation_to_string(Activation act);
[[nodiscard]] double activation_lipschitz(Activation act);

// Elementwise application and derivative.
[[nodiscard]] Eigen::ArrayXXd apply_activation(Activation act, const Eigen::ArrayXXd& z);
[[nodiscard]] Eigen::ArrayXXd activation_derivative(Activation act, const Eigen::ArrayXXd& z);

// Intervened nodes are pinned either to a fixed vector (one value per target)
// or to an i.i.d. standard-normal draw per sample.
struct StandardNormalRule {};
struct FixedValueRule {
    Eigen::VectorXd values;  // one entry per target, in target order
};
using InterventionValueRule = std::variant<StandardNormalRule, FixedValueRule>;

struct InterventionSpec {
    std::vector<int> targets;  // sorted, unique
    InterventionValueRule rule = StandardNormalRule{};

    [[nodiscard]] bool observational() const { return targets.empty(); }
    void validate(int d) const;
};

struct ExperimentData {
    InterventionSpec spec;
    Eigen::MatrixXd samples;  // N_k x d, row per observation

    [[nodiscard]] int n() const { return static_cast<int>(samples.rows()); }
};

struct Dataset {
    int d = 0;
    std::vector<ExperimentData> experiments;

    [[nodiscard]] long total_samples() const;
};

struct GroundTruthSEM {
    CausalGraph graph;
    Eigen::MatrixXd weights;  // weights(i, j): coefficient of parent j in equation for i
    Activation activation = Activation::linear;
    Eigen::VectorXd noise_scales;

    void validate(double lipschitz_bound = 1.0) const;
    // f(x) = act(W x)
    [[nodiscard]] Eigen::VectorXd mechanism(const Eigen::VectorXd& x) const;
};

class nonconvergence_error : public std::runtime_error {
   public:
    nonconvergence_error(double residual, int iterations)
        : std::runtime_error("fixed-point iteration failed to converge (residual " +
                             std::to_string(residual) + " after " + std::to_string(iterations) +
                             " iterations); mechanism may not be contractive"),
          residual_(residual),
          iterations_(iterations) {}
    [[nodiscard]] double residual() const { return residual_; }
    [[nodiscard]] int iterations() const { return iterations_; }

   private:
    double residual_;
    int iterations_;
};

// Diagonal of the passive-observation mask: entry i is 1 iff node i is not a
// target of the intervention.
[[nodiscard]] Eigen::VectorXd mask_diagonal(const InterventionSpec& spec, int d);
[[nodiscard]] Eigen::MatrixXd mask_matrix(const InterventionSpec& spec, int d);

struct FixedPointOptions {
    double tol = 1e-9;
    int max_iter = 1000;
};

// Solves x = U f(x) + U eps + c by iteration from x0 = U eps + c, where c
// carries the realized intervention values on the targeted coordinates.
[[nodiscard]] Eigen::VectorXd fixed_point_solve(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& eps,
    const InterventionSpec& spec, const Eigen::VectorXd& intervention_values,
    const FixedPointOptions& opts = {});

[[nodiscard]] ExperimentData simulate_experiment(const GroundTruthSEM& sem,
                                                 const InterventionSpec& spec, int n,
                                                 std::uint64_t seed,
                                                 const FixedPointOptions& opts = {});

}  // namespace nodags
