#include "nodags/logdet.hpp"

#include <cmath>

#include "nodags/rng.hpp"

namespace nodags {

LogDetMode logdet_mode_from_string(const std::string& name) {
    if (name == "exact") return LogDetMode::exact;
    if (name == "truncated") return LogDetMode::truncated;
    if (name == "unbiased") return LogDetMode::unbiased;
    throw std::invalid_argument("unknown logdet mode: " + name);
}

std::string logdet_mode_to_string(LogDetMode mode) {
    switch (mode) {
        case LogDetMode::exact: return "exact";
        case LogDetMode::truncated: return "truncated";
        case LogDetMode::unbiased: return "unbiased";
    }
    throw std::logic_error("unreachable");
}

void LogDetConfig::validate() const {
    if (n_terms < 1) throw std::invalid_argument("n_terms must be at least 1");
    if (n_probes < 1) throw std::invalid_argument("n_probes must be at least 1");
    if (poisson_intensity <= 0.0) throw std::invalid_argument("poisson intensity must be positive");
}

Eigen::MatrixXd jacobian_dense(const MechanismParams& params, const MaskSample& mask,
                               const Eigen::VectorXd& u_diag, const Eigen::VectorXd& x) {
    const int d = params.d;
    const int n_layers = params.n_layers();
    const Eigen::VectorXd lambda = params.log_lambda.array().exp().matrix();
    const Eigen::VectorXd inv_lambda = (-params.log_lambda.array()).exp().matrix();
    Eigen::MatrixXd effective_mask =
        params.kind == ModelKind::linear_direct ? full_mask(d).hard : mask.hard;

    // Forward pass on the d per-node masked rows, keeping pre-activations.
    const Eigen::RowVectorXd xs = x.transpose().cwiseProduct(lambda.transpose());
    Eigen::MatrixXd a(d, d);
    for (int i = 0; i < d; ++i) {
        a.row(i) = effective_mask.row(i).cwiseProduct(xs);
    }
    std::vector<Eigen::MatrixXd> pre(n_layers);
    for (int l = 0; l < n_layers; ++l) {
        pre[l] = (a * params.layers[l].w.transpose()).rowwise() + params.layers[l].b.transpose();
        const bool apply_act = (l < n_layers - 1) || (n_layers == 1);
        a = apply_act ? apply_activation(params.activation, pre[l].array()).matrix() : pre[l];
    }

    // Row gradient of g_i at its own input row, chained backwards.
    Eigen::MatrixXd jac(d, d);
    if (n_layers == 1) {
        const Eigen::MatrixXd deriv = activation_derivative(params.activation, pre[0].array());
        for (int i = 0; i < d; ++i) {
            jac.row(i) = deriv(i, i) * params.layers[0].w.row(i);
        }
    } else {
        for (int i = 0; i < d; ++i) {
            Eigen::RowVectorXd v = params.layers[n_layers - 1].w.row(i);
            for (int l = n_layers - 2; l >= 0; --l) {
                const Eigen::RowVectorXd deriv =
                    activation_derivative(params.activation, pre[l].row(i).array()).row(0);
                v = v.cwiseProduct(deriv) * params.layers[l].w;
            }
            jac.row(i) = v;
        }
    }
    // d f_i / d x_j = u_i * mask_ij * (lambda_j / lambda_i) * dg_i/du_j
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            jac(i, j) *= u_diag(i) * effective_mask(i, j) * lambda(j) * inv_lambda(i);
        }
    }
    return jac;
}

double logdet_exact_from_jacobian(const Eigen::MatrixXd& jac_uf) {
    const Eigen::Index d = jac_uf.rows();
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(d, d) - jac_uf;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        const double pivot = std::abs(lu.matrixLU()(i, i));
        if (pivot < 1e-300) {
            throw degenerate_jacobian_error("residual map Jacobian is numerically singular");
        }
        logdet += std::log(pivot);
    }
    if (!std::isfinite(logdet)) {
        throw degenerate_jacobian_error("non-finite log-determinant");
    }
    return logdet;
}

double logdet_exact(const MechanismParams& params, const MaskSample& mask,
                    const Eigen::VectorXd& u_diag, const Eigen::VectorXd& x) {
    return logdet_exact_from_jacobian(jacobian_dense(params, mask, u_diag, x));
}

double trace_power_probe(const MechanismParams& params, const MaskSample& mask,
                         const Eigen::VectorXd& u_diag, const Eigen::VectorXd& x, int k,
                         const Eigen::VectorXd& w) {
    if (k < 1) throw std::invalid_argument("power order must be at least 1");
    const Eigen::MatrixXd jac = jacobian_dense(params, mask, u_diag, x);
    Eigen::VectorXd v = w;
    for (int i = 0; i < k; ++i) {
        v = jac * v;
    }
    return w.dot(v);
}

double poisson_tail(double intensity, int k) {
    // P(N >= k) = 1 - sum_{j<k} pmf(j)
    long double cdf = 0.0L;
    long double pmf = std::exp(static_cast<long double>(-intensity));
    for (int j = 0; j < k; ++j) {
        cdf += pmf;
        pmf *= static_cast<long double>(intensity) / static_cast<long double>(j + 1);
    }
    const double tail = static_cast<double>(1.0L - cdf);
    if (tail < 1e-12) {
        throw std::runtime_error(
            "poisson tail underflow at k=" + std::to_string(k) +
            "; intensity is far too small for the drawn truncation order");
    }
    return tail;
}

Eigen::VectorXd draw_probe(ProbeDist dist, int d, std::mt19937_64& rng) {
    Eigen::VectorXd w(d);
    if (dist == ProbeDist::rademacher) {
        std::bernoulli_distribution coin(0.5);
        for (int i = 0; i < d; ++i) {
            w(i) = coin(rng) ? 1.0 : -1.0;
        }
    } else {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int i = 0; i < d; ++i) {
            w(i) = normal(rng);
        }
    }
    return w;
}

namespace {

double probe_series(const Eigen::MatrixXd& jac, int n, bool reweight, double intensity,
                    const LogDetConfig& cfg, std::mt19937_64& rng) {
    const int d = static_cast<int>(jac.rows());
    double acc = 0.0;
    for (int probe = 0; probe < cfg.n_probes; ++probe) {
        const Eigen::VectorXd w = draw_probe(cfg.probe_dist, d, rng);
        Eigen::VectorXd v = w;
        double series = 0.0;
        for (int k = 1; k <= n; ++k) {
            v = jac * v;
            const double denom = reweight ? k * poisson_tail(intensity, k) : static_cast<double>(k);
            series += w.dot(v) / denom;
        }
        acc += series;
    }
    return -acc / cfg.n_probes;
}

}  // namespace

double logdet_unbiased(const MechanismParams& params, const MaskSample& mask,
                       const Eigen::VectorXd& u_diag, const Eigen::VectorXd& x,
                       const LogDetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    auto rng = make_rng(seed);
    std::poisson_distribution<int> poisson(cfg.poisson_intensity);
    const int n = poisson(rng);
    if (n == 0) {
        return 0.0;  // empty sum; the 1/P(N>=k) reweighting keeps the estimator unbiased
    }
    const Eigen::MatrixXd jac = jacobian_dense(params, mask, u_diag, x);
    return probe_series(jac, n, true, cfg.poisson_intensity, cfg, rng);
}

double logdet_truncated(const MechanismParams& params, const MaskSample& mask,
                        const Eigen::VectorXd& u_diag, const Eigen::VectorXd& x,
                        const LogDetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    auto rng = make_rng(seed);
    const Eigen::MatrixXd jac = jacobian_dense(params, mask, u_diag, x);
    return probe_series(jac, cfg.n_terms, false, 0.0, cfg, rng);
}

}  // namespace nodags
