#include "nodags/mechanism.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nodags/rng.hpp"

namespace nodags {

namespace {
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
}  // namespace

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "mlp") return ModelKind::mlp;
    if (name == "linear-direct") return ModelKind::linear_direct;
    throw std::invalid_argument("unknown model kind: " + name);
}

std::string model_kind_to_string(ModelKind kind) {
    return kind == ModelKind::mlp ? "mlp" : "linear-direct";
}

void MechanismParams::validate() const {
    if (d <= 0) {
        throw std::invalid_argument("mechanism dimension must be positive");
    }
    if (layers.empty()) {
        throw std::invalid_argument("mechanism needs at least one layer");
    }
    for (const auto& layer : layers) {
        if (layer.w.rows() != d || layer.w.cols() != d || layer.b.size() != d) {
            throw std::invalid_argument("all layer widths must equal the node count");
        }
    }
    if (kind == ModelKind::linear_direct && layers.size() != 1) {
        throw std::invalid_argument("linear-direct kind uses exactly one layer");
    }
    if (mask_logits.rows() != d || mask_logits.cols() != d) {
        throw std::invalid_argument("mask logits shape mismatch");
    }
    if (log_lambda.size() != d || noise_means.size() != d || noise_log_scales.size() != d) {
        throw std::invalid_argument("per-node parameter length mismatch");
    }
    if (poisson_intensity <= 0.0) {
        throw std::invalid_argument("poisson intensity must be positive");
    }
}

MaskSample sample_mask(const Eigen::MatrixXd& mask_logits, double temperature, std::uint64_t seed) {
    if (temperature <= 0.0) {
        throw std::invalid_argument("gumbel temperature must be positive");
    }
    const int d = static_cast<int>(mask_logits.rows());
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(1e-12, 1.0 - 1e-12);
    MaskSample out;
    out.soft = Eigen::MatrixXd::Zero(d, d);
    out.hard = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (i == j) continue;
            const double u = unif(rng);
            const double logistic = std::log(u) - std::log1p(-u);
            const double s = sigmoid((mask_logits(i, j) + logistic) / temperature);
            out.soft(i, j) = s;
            out.hard(i, j) = s >= 0.5 ? 1.0 : 0.0;
        }
    }
    return out;
}

MaskSample full_mask(int d) {
    MaskSample out;
    out.hard = Eigen::MatrixXd::Ones(d, d);
    out.hard.diagonal().setZero();
    out.soft = out.hard;
    return out;
}

MaskSample threshold_mask(const MechanismParams& params) {
    if (params.kind == ModelKind::linear_direct) {
        return full_mask(params.d);
    }
    const Eigen::MatrixXd probs = edge_probabilities(params.mask_logits);
    MaskSample out;
    out.soft = probs;
    out.hard = (probs.array() >= 0.5).cast<double>();
    out.hard.diagonal().setZero();
    return out;
}

Eigen::MatrixXd edge_probabilities(const Eigen::MatrixXd& mask_logits) {
    Eigen::MatrixXd probs = mask_logits.unaryExpr([](double z) { return sigmoid(z); });
    probs.diagonal().setZero();
    return probs;
}

Eigen::MatrixXd model_edge_scores(const MechanismParams& params) {
    if (params.kind == ModelKind::mlp) {
        return edge_probabilities(params.mask_logits);
    }
    Eigen::MatrixXd scores =
        params.layers.front().w.unaryExpr([](double w) { return std::abs(w) / (std::abs(w) + 0.1); });
    scores.diagonal().setZero();
    return scores;
}

double expected_l1_penalty(const Eigen::MatrixXd& mask_logits) {
    return edge_probabilities(mask_logits).sum();
}

Eigen::MatrixXd mlp_forward(const MechanismParams& params, const Eigen::MatrixXd& rows) {
    const int n_layers = params.n_layers();
    Eigen::MatrixXd a = rows;
    for (int l = 0; l < n_layers; ++l) {
        Eigen::MatrixXd z =
            (a * params.layers[l].w.transpose()).rowwise() + params.layers[l].b.transpose();
        const bool apply_act = (l < n_layers - 1) || (n_layers == 1);
        a = apply_act ? apply_activation(params.activation, z.array()).matrix() : z;
    }
    return a;
}

Eigen::MatrixXd mechanism_forward_batch(const MechanismParams& params, const MaskSample& mask,
                                        const Eigen::MatrixXd& x) {
    const int d = params.d;
    const int n = static_cast<int>(x.rows());
    const Eigen::VectorXd lambda = params.log_lambda.array().exp().matrix();
    const Eigen::VectorXd inv_lambda = (-params.log_lambda.array()).exp().matrix();
    Eigen::MatrixXd effective_mask = mask.hard;
    if (params.kind == ModelKind::linear_direct) {
        effective_mask = full_mask(d).hard;
    }
    // Row (s*d + i) holds M'_{i,*} .* (Lambda x_s).
    Eigen::MatrixXd rows(n * d, d);
    for (int s = 0; s < n; ++s) {
        const Eigen::RowVectorXd xs = x.row(s).cwiseProduct(lambda.transpose());
        for (int i = 0; i < d; ++i) {
            rows.row(s * d + i) = effective_mask.row(i).cwiseProduct(xs);
        }
    }
    const Eigen::MatrixXd g = mlp_forward(params, rows);
    Eigen::MatrixXd out(n, d);
    for (int s = 0; s < n; ++s) {
        for (int i = 0; i < d; ++i) {
            out(s, i) = g(s * d + i, i) * inv_lambda(i);
        }
    }
    return out;
}

Eigen::VectorXd mechanism_forward(const MechanismParams& params, const MaskSample& mask,
                                  const Eigen::VectorXd& x) {
    return mechanism_forward_batch(params, mask, x.transpose()).row(0).transpose();
}

double spectral_norm_exact(const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
}

void lipschitz_rescale(MechanismParams& params, int n_l, double target_l, std::uint64_t seed) {
    if (n_l < 1) {
        throw std::invalid_argument("power iteration count must be at least 1");
    }
    if (target_l <= 0.0 || target_l >= 1.0) {
        throw std::invalid_argument("lipschitz target must lie in (0, 1)");
    }
    const int n_layers = params.n_layers();
    if (params.power_right.size() != static_cast<std::size_t>(n_layers)) {
        params.power_left.assign(n_layers, Eigen::VectorXd());
        params.power_right.assign(n_layers, Eigen::VectorXd());
        auto rng = make_rng(derive_seed(seed, 0x70776572ULL));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int l = 0; l < n_layers; ++l) {
            Eigen::VectorXd v(params.d);
            for (int j = 0; j < params.d; ++j) {
                v(j) = normal(rng);
            }
            params.power_right[l] = v.normalized();
            params.power_left[l] = Eigen::VectorXd::Zero(params.d);
        }
    }
    double product = 1.0;
    for (int l = 0; l < n_layers; ++l) {
        const Eigen::MatrixXd& w = params.layers[l].w;
        Eigen::VectorXd v = params.power_right[l];
        Eigen::VectorXd u = Eigen::VectorXd::Zero(params.d);
        for (int it = 0; it < n_l; ++it) {
            u = (w * v).normalized();
            v = (w.transpose() * u).normalized();
        }
        params.power_right[l] = v;
        params.power_left[l] = u;
        const double sigma = u.dot(w * v);
        // Activation Lipschitz constants are all 1 for the learned kinds.
        product *= std::max(sigma, 0.0);
    }
    if (product > target_l) {
        const double factor = std::pow(target_l / product, 1.0 / n_layers);
        for (auto& layer : params.layers) {
            layer.w *= factor;
        }
    }
}

Eigen::VectorXd construct_lambda_dag(double lipschitz, double contraction,
                                     const CausalGraph& graph) {
    if (contraction <= 0.0 || contraction >= 1.0) {
        throw std::invalid_argument("contraction constant must lie in (0, 1)");
    }
    if (lipschitz < 1.0) {
        throw std::invalid_argument("lipschitz constant must be at least 1");
    }
    const auto order = topological_sort(graph);
    if (!order) {
        throw std::domain_error("lambda preconditioner requires an acyclic graph");
    }
    const int d = graph.d;
    const double factor = static_cast<double>(d) * d * lipschitz / contraction;
    Eigen::VectorXd lambda(d);
    double value = 1.0;
    for (int pos = d - 1; pos >= 0; --pos) {
        lambda((*order)[pos]) = value;
        value *= factor;
    }
    return lambda;
}

}  // namespace nodags
