#include "nodags/sem.hpp"

#include <algorithm>
#include <cmath>

#include "nodags/rng.hpp"

namespace nodags {

namespace {
constexpr double kSeluAlpha = 1.6732632423543772;
constexpr double kSeluScale = 1.0507009873554805;
}  // namespace

Activation activation_from_string(const std::string& name) {
    if (name == "linear") return Activation::linear;
    if (name == "relu") return Activation::relu;
    if (name == "selu") return Activation::selu;
    if (name == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation: " + name);
}

std::string activation_to_string(Activation act) {
    switch (act) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::selu: return "selu";
        case Activation::tanh: return "tanh";
    }
    throw std::logic_error("unreachable");
}

double activation_lipschitz(Activation act) {
    switch (act) {
        case Activation::linear:
        case Activation::relu:
        case Activation::tanh: return 1.0;
        case Activation::selu: return kSeluScale * kSeluAlpha;
    }
    throw std::logic_error("unreachable");
}

Eigen::ArrayXXd apply_activation(Activation act, const Eigen::ArrayXXd& z) {
    switch (act) {
        case Activation::linear: return z;
        case Activation::relu: return z.max(0.0);
        case Activation::tanh: return z.tanh();
        case Activation::selu:
            return (z > 0.0).select(kSeluScale * z, kSeluScale * kSeluAlpha * (z.exp() - 1.0));
    }
    throw std::logic_error("unreachable");
}

Eigen::ArrayXXd activation_derivative(Activation act, const Eigen::ArrayXXd& z) {
    switch (act) {
        case Activation::linear: return Eigen::ArrayXXd::Ones(z.rows(), z.cols());
        case Activation::relu: return (z > 0.0).cast<double>();
        case Activation::tanh: return 1.0 - z.tanh().square();
        case Activation::selu:
            return (z > 0.0).select(Eigen::ArrayXXd::Constant(z.rows(), z.cols(), kSeluScale),
                                    kSeluScale * kSeluAlpha * z.exp());
    }
    throw std::logic_error("unreachable");
}

void InterventionSpec::validate(int d) const {
    int prev = -1;
    for (int t : targets) {
        if (t < 0 || t >= d) {
            throw std::out_of_range("intervention target index out of range: " + std::to_string(t));
        }
        if (t <= prev) {
            throw std::invalid_argument("intervention targets must be sorted and unique");
        }
        prev = t;
    }
    if (const auto* fixed = std::get_if<FixedValueRule>(&rule)) {
        if (fixed->values.size() != static_cast<Eigen::Index>(targets.size())) {
            throw std::invalid_argument("fixed intervention values must match target count");
        }
    }
}

long Dataset::total_samples() const {
    long total = 0;
    for (const auto& exp : experiments) {
        total += exp.n();
    }
    return total;
}

void GroundTruthSEM::validate(double lipschitz_bound) const {
    const int d = graph.d;
    if (weights.rows() != d || weights.cols() != d) {
        throw std::invalid_argument("weight matrix shape does not match graph");
    }
    if (noise_scales.size() != d || (noise_scales.array() <= 0.0).any()) {
        throw std::invalid_argument("noise scales must be positive and match node count");
    }
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (weights(i, j) != 0.0 && graph.edges(i, j) == 0) {
                throw std::invalid_argument("nonzero weight outside graph support");
            }
        }
    }
    if (activation == Activation::selu) {
        if (!is_acyclic(graph)) {
            throw std::domain_error("selu mechanisms require an acyclic graph");
        }
    } else {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(weights);
        const double op_norm = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
        if (op_norm * activation_lipschitz(activation) > lipschitz_bound + 1e-9) {
            throw std::domain_error("cyclic mechanism exceeds declared Lipschitz bound");
        }
    }
}

Eigen::VectorXd GroundTruthSEM::mechanism(const Eigen::VectorXd& x) const {
    const Eigen::ArrayXXd z = (weights * x).array();
    return apply_activation(activation, z).matrix();
}

Eigen::VectorXd mask_diagonal(const InterventionSpec& spec, int d) {
    spec.validate(d);
    Eigen::VectorXd u = Eigen::VectorXd::Ones(d);
    for (int t : spec.targets) {
        u(t) = 0.0;
    }
    return u;
}

Eigen::MatrixXd mask_matrix(const InterventionSpec& spec, int d) {
    return mask_diagonal(spec, d).asDiagonal();
}

Eigen::VectorXd fixed_point_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& eps, const InterventionSpec& spec,
                                  const Eigen::VectorXd& intervention_values,
                                  const FixedPointOptions& opts) {
    const int d = static_cast<int>(eps.size());
    if (opts.tol <= 0.0) {
        throw std::invalid_argument("fixed-point tolerance must be positive");
    }
    const Eigen::VectorXd u = mask_diagonal(spec, d);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
    for (int t : spec.targets) {
        c(t) = intervention_values(t);
    }
    Eigen::VectorXd x = u.cwiseProduct(eps) + c;
    double residual = 0.0;
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        Eigen::VectorXd next = u.cwiseProduct(f(x)) + u.cwiseProduct(eps) + c;
        residual = (next - x).norm();
        x = next;
        if (residual <= opts.tol) {
            return x;
        }
    }
    throw nonconvergence_error(residual, opts.max_iter);
}

ExperimentData simulate_experiment(const GroundTruthSEM& sem, const InterventionSpec& spec, int n,
                                   std::uint64_t seed, const FixedPointOptions& opts) {
    if (n < 1) {
        throw std::invalid_argument("sample count must be at least 1");
    }
    const int d = sem.graph.d;
    spec.validate(d);
    ExperimentData data;
    data.spec = spec;
    data.samples.resize(n, d);
    auto f = [&sem](const Eigen::VectorXd& x) { return sem.mechanism(x); };
    for (int i = 0; i < n; ++i) {
        auto rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::VectorXd eps(d);
        for (int j = 0; j < d; ++j) {
            eps(j) = normal(rng) * sem.noise_scales(j);
        }
        Eigen::VectorXd values = Eigen::VectorXd::Zero(d);
        if (const auto* fixed = std::get_if<FixedValueRule>(&spec.rule)) {
            for (std::size_t k = 0; k < spec.targets.size(); ++k) {
                values(spec.targets[k]) = fixed->values(static_cast<Eigen::Index>(k));
            }
        } else {
            for (int t : spec.targets) {
                values(t) = normal(rng);
            }
        }
        data.samples.row(i) = fixed_point_solve(f, eps, spec, values, opts).transpose();
    }
    return data;
}

}  // namespace nodags
