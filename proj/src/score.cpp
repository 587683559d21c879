#include "nodags/score.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

#include "nodags/autodiff.hpp"
#include "nodags/rng.hpp"

namespace nodags {

void TrainConfig::validate() const {
    if (lambda_sparse < 0.0) throw std::invalid_argument("lambda_sparse must be nonnegative");
    if (lr <= 0.0) throw std::invalid_argument("lr must be positive");
    if (lr_decay <= 0.0 || lr_decay > 1.0) {
        throw std::invalid_argument("lr_decay must lie in (0, 1]");
    }
    if (epochs < 0) throw std::invalid_argument("epochs must be nonnegative");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    if (n_hidden_layers < 0 || n_hidden_layers > 3) {
        throw std::invalid_argument("n_hidden_layers must lie in {0..3}");
    }
    if (n_l < 1) throw std::invalid_argument("n_l must be at least 1");
    if (lipschitz_target <= 0.0 || lipschitz_target >= 1.0) {
        throw std::invalid_argument("lipschitz_target must lie in (0, 1)");
    }
    if (poisson_intensity_init <= 0.0) {
        throw std::invalid_argument("poisson_intensity_init must be positive");
    }
    if (gumbel_temperature <= 0.0) {
        throw std::invalid_argument("gumbel_temperature must be positive");
    }
    if (n_probes < 1) throw std::invalid_argument("n_probes must be at least 1");
    if (n_terms < 1) throw std::invalid_argument("n_terms must be at least 1");
    if (kind == ModelKind::linear_direct && n_hidden_layers != 0) {
        throw std::invalid_argument("linear-direct kind has no hidden layers");
    }
    if (activation == Activation::selu) {
        throw std::invalid_argument("selu is not supported as a learned-model activation");
    }
}

LogDetConfig TrainConfig::logdet_config() const {
    LogDetConfig cfg;
    cfg.mode = logdet_mode;
    cfg.n_terms = n_terms;
    cfg.poisson_intensity = poisson_intensity_init;
    cfg.n_probes = n_probes;
    return cfg;
}

GradientVector GradientVector::zeros_like(const MechanismParams& params) {
    GradientVector g;
    for (const auto& layer : params.layers) {
        g.layers.push_back({Eigen::MatrixXd::Zero(layer.w.rows(), layer.w.cols()),
                            Eigen::VectorXd::Zero(layer.b.size())});
    }
    g.mask_logits = Eigen::MatrixXd::Zero(params.d, params.d);
    g.log_lambda = Eigen::VectorXd::Zero(params.d);
    g.noise_means = Eigen::VectorXd::Zero(params.d);
    g.noise_log_scales = Eigen::VectorXd::Zero(params.d);
    return g;
}

bool GradientVector::all_finite() const {
    auto finite = [](const Eigen::MatrixXd& m) { return m.allFinite(); };
    for (const auto& layer : layers) {
        if (!finite(layer.w) || !finite(layer.b)) return false;
    }
    return finite(mask_logits) && finite(log_lambda) && finite(noise_means) &&
           finite(noise_log_scales);
}

void GradientVector::check_finite() const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (!layers[l].w.allFinite()) {
            throw std::runtime_error("non-finite gradient in layer " + std::to_string(l) +
                                     " weights");
        }
        if (!layers[l].b.allFinite()) {
            throw std::runtime_error("non-finite gradient in layer " + std::to_string(l) + " bias");
        }
    }
    if (!mask_logits.allFinite()) throw std::runtime_error("non-finite gradient in mask_logits");
    if (!log_lambda.allFinite()) throw std::runtime_error("non-finite gradient in log_lambda");
    if (!noise_means.allFinite()) throw std::runtime_error("non-finite gradient in noise_means");
    if (!noise_log_scales.allFinite()) {
        throw std::runtime_error("non-finite gradient in noise_log_scales");
    }
}

void GradientVector::scale(double s) {
    for (auto& layer : layers) {
        layer.w *= s;
        layer.b *= s;
    }
    mask_logits *= s;
    log_lambda *= s;
    noise_means *= s;
    noise_log_scales *= s;
}

void GradientVector::add(const GradientVector& other, double s) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].w += s * other.layers[l].w;
        layers[l].b += s * other.layers[l].b;
    }
    mask_logits += s * other.mask_logits;
    log_lambda += s * other.log_lambda;
    noise_means += s * other.noise_means;
    noise_log_scales += s * other.noise_log_scales;
}

BatchRandomness draw_batch_randomness(const LogDetConfig& cfg, int b, int d, std::uint64_t seed) {
    BatchRandomness rnd;
    if (cfg.mode == LogDetMode::exact) {
        return rnd;
    }
    rnd.n_per_sample.resize(b);
    rnd.probes.resize(b);
    for (int s = 0; s < b; ++s) {
        auto rng = make_rng(derive_seed(seed, 0x70726f62ULL, static_cast<std::uint64_t>(s)));
        if (cfg.mode == LogDetMode::unbiased) {
            std::poisson_distribution<int> poisson(cfg.poisson_intensity);
            rnd.n_per_sample[s] = poisson(rng);
        } else {
            rnd.n_per_sample[s] = cfg.n_terms;
        }
        rnd.probes[s].reserve(cfg.n_probes);
        for (int p = 0; p < cfg.n_probes; ++p) {
            rnd.probes[s].push_back(draw_probe(cfg.probe_dist, d, rng));
        }
    }
    return rnd;
}

FixedRandomness make_fixed_randomness(const MechanismParams& params, const TrainConfig& cfg,
                                      int batch_size, std::uint64_t seed) {
    FixedRandomness rnd;
    rnd.mask = params.kind == ModelKind::linear_direct
                   ? full_mask(params.d)
                   : sample_mask(params.mask_logits, cfg.gumbel_temperature,
                                 derive_seed(seed, 0x6d61736bULL));
    rnd.temperature = cfg.gumbel_temperature;
    rnd.batch = draw_batch_randomness(cfg.logdet_config(), batch_size, params.d,
                                      derive_seed(seed, 0x6c646574ULL));
    return rnd;
}

namespace {

// Per-sample log|det(I - U J_s)| over the stacked Jacobian rows; returns a
// (b x 1) node.
ad::Var batched_logdet_exact(ad::Tape& tape, ad::Var jrows, const Eigen::VectorXd& u, int b,
                             int d) {
    const Eigen::MatrixXd& jac = tape.value(jrows);
    Eigen::MatrixXd out(b, 1);
    auto inverses = std::make_shared<std::vector<Eigen::MatrixXd>>();
    inverses->reserve(b);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
    for (int s = 0; s < b; ++s) {
        Eigen::MatrixXd a = eye - u.asDiagonal() * jac.middleRows(s * d, d);
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
        double logdet = 0.0;
        for (int i = 0; i < d; ++i) {
            const double pivot = std::abs(lu.matrixLU()(i, i));
            if (pivot < 1e-300) {
                throw degenerate_jacobian_error("residual map Jacobian is numerically singular");
            }
            logdet += std::log(pivot);
        }
        out(s, 0) = logdet;
        inverses->push_back(lu.inverse());
    }
    return tape.custom({jrows}, std::move(out),
                       [jrows, inverses, u, b, d](ad::Tape& t, const Eigen::MatrixXd& up) {
                           Eigen::MatrixXd g(static_cast<Eigen::Index>(b) * d, d);
                           for (int s = 0; s < b; ++s) {
                               g.middleRows(s * d, d) =
                                   -up(s, 0) * (u.asDiagonal() * (*inverses)[s].transpose());
                           }
                           t.accumulate_grad(jrows, g);
                       });
}

// Per-sample probe-averaged power series
//   -sum_{k=1..n_s} coeff_{s,k} * mean_p w_p^T (U J_s)^k w_p,
// returning a (b x 1) node. coeffs[s] holds coeff for k = 1..n_s.
ad::Var batched_power_series(ad::Tape& tape, ad::Var jrows, const Eigen::VectorXd& u, int b, int d,
                             std::shared_ptr<std::vector<std::vector<double>>> coeffs,
                             std::shared_ptr<std::vector<std::vector<Eigen::VectorXd>>> probes) {
    const Eigen::MatrixXd& jac = tape.value(jrows);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(b, 1);
    for (int s = 0; s < b; ++s) {
        const int n = static_cast<int>((*coeffs)[s].size());
        if (n == 0) continue;
        const Eigen::MatrixXd a = u.asDiagonal() * jac.middleRows(s * d, d);
        double acc = 0.0;
        for (const Eigen::VectorXd& w : (*probes)[s]) {
            Eigen::VectorXd v = w;
            for (int k = 1; k <= n; ++k) {
                v = a * v;
                acc += (*coeffs)[s][k - 1] * w.dot(v);
            }
        }
        out(s, 0) = -acc / static_cast<double>((*probes)[s].size());
    }
    return tape.custom(
        {jrows}, std::move(out),
        [jrows, coeffs, probes, u, b, d](ad::Tape& t, const Eigen::MatrixXd& up) {
            const Eigen::MatrixXd& jac = t.value(jrows);
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(b) * d, d);
            for (int s = 0; s < b; ++s) {
                const int n = static_cast<int>((*coeffs)[s].size());
                if (n == 0 || up(s, 0) == 0.0) continue;
                const Eigen::MatrixXd a = u.asDiagonal() * jac.middleRows(s * d, d);
                Eigen::MatrixXd grad_a = Eigen::MatrixXd::Zero(d, d);
                for (const Eigen::VectorXd& w : (*probes)[s]) {
                    // right[m] = A^m w, left[m] = (A^T)^m w
                    std::vector<Eigen::VectorXd> right(n + 1), left(n);
                    right[0] = w;
                    for (int m = 1; m <= n; ++m) right[m] = a * right[m - 1];
                    left[0] = w;
                    for (int m = 1; m < n; ++m) left[m] = a.transpose() * left[m - 1];
                    for (int k = 1; k <= n; ++k) {
                        const double c = (*coeffs)[s][k - 1];
                        for (int m = 0; m < k; ++m) {
                            grad_a.noalias() += c * left[m] * right[k - 1 - m].transpose();
                        }
                    }
                }
                grad_a *= -up(s, 0) / static_cast<double>((*probes)[s].size());
                g.middleRows(s * d, d) = u.asDiagonal() * grad_a;
            }
            t.accumulate_grad(jrows, g);
        });
}

struct TapeLeaves {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
    ad::Var mask;
    ad::Var log_lambda;
    ad::Var noise_means;
    ad::Var noise_log_scales;
};

}  // namespace

ScoreStats score_batch(const MechanismParams& params, const Eigen::MatrixXd& batch,
                       const InterventionSpec& spec, const LogDetConfig& ld_cfg,
                       const FixedRandomness& rnd, GradientVector* grad, double grad_scale) {
    params.validate();
    if (batch.rows() == 0) {
        throw std::invalid_argument("score batch must be nonempty");
    }
    const int d = params.d;
    const int b = static_cast<int>(batch.rows());
    const int n_layers = params.n_layers();
    const Eigen::VectorXd u = mask_diagonal(spec, d);
    const double n_obs = u.sum();

    ad::Tape tape;
    TapeLeaves leaves;
    auto leaf_or_const = [&](const Eigen::MatrixXd& m) {
        return grad != nullptr ? tape.leaf(m) : tape.constant(m);
    };
    for (const auto& layer : params.layers) {
        leaves.weights.push_back(leaf_or_const(layer.w));
        leaves.biases.push_back(leaf_or_const(layer.b.transpose()));
    }
    Eigen::MatrixXd mask_value = rnd.mask_mode == MaskMode::soft ? rnd.mask.soft : rnd.mask.hard;
    if (params.kind == ModelKind::linear_direct) {
        mask_value = full_mask(d).hard;
        leaves.mask = tape.constant(mask_value);
    } else {
        leaves.mask = leaf_or_const(mask_value);
    }
    leaves.log_lambda = leaf_or_const(params.log_lambda.transpose());
    leaves.noise_means = leaf_or_const(params.noise_means.transpose());
    leaves.noise_log_scales = leaf_or_const(params.noise_log_scales.transpose());

    const ad::Var x_const = tape.constant(batch);
    const ad::Var lambda = tape.exp(leaves.log_lambda);
    const ad::Var inv_lambda = tape.exp(tape.neg(leaves.log_lambda));

    // Row (s*d + i) = M'_{i,*} .* (Lambda x_s)
    const ad::Var x_scaled = tape.mul_rowvec(x_const, lambda);
    const ad::Var x_rep = tape.repeat_rows(x_scaled, d);
    const ad::Var mask_tile = tape.tile_rows(leaves.mask, b);
    ad::Var a = tape.cwise_mul(x_rep, mask_tile);

    std::vector<ad::Var> pre(n_layers);
    for (int l = 0; l < n_layers; ++l) {
        pre[l] = tape.add_rowvec(tape.matmul_nt(a, leaves.weights[l]), leaves.biases[l]);
        const bool apply_act = (l < n_layers - 1) || (n_layers == 1);
        a = apply_act ? tape.activation(pre[l], params.activation) : pre[l];
    }

    const ad::Var f_raw = tape.take_block_diag(a, b, d);
    const ad::Var f_out = tape.mul_rowvec(f_raw, inv_lambda);

    // Gaussian log-likelihood of the passively observed residual coordinates.
    const ad::Var resid = tape.sub(x_const, f_out);
    const ad::Var centered = tape.add_rowvec(resid, tape.neg(leaves.noise_means));
    const ad::Var inv_sigma = tape.exp(tape.neg(leaves.noise_log_scales));
    const ad::Var z = tape.mul_rowvec(centered, inv_sigma);
    const Eigen::MatrixXd obs_weights = Eigen::VectorXd::Ones(b) * u.transpose();
    const ad::Var quad = tape.weighted_sum(tape.square(z), obs_weights);
    const ad::Var log_sigma_sum = tape.weighted_sum(leaves.noise_log_scales, u.transpose());
    ad::Var loglik = tape.add(tape.scale(quad, -0.5), tape.scale(log_sigma_sum, -b));
    loglik = tape.add_scalar(loglik, -0.5 * std::log(2.0 * std::numbers::pi) * b * n_obs);

    // Jacobian rows of x |-> f(x), stacked per sample.
    ad::Var jac_g;  // (b*d x d): row (s,i) = dg_i/du at the i-th masked input
    if (n_layers == 1) {
        const ad::Var deriv = tape.activation_prime(pre[0], params.activation);
        const ad::Var deriv_diag = tape.take_block_diag(deriv, b, d);
        jac_g = tape.scale_rows(tape.tile_rows(leaves.weights[0], b),
                                tape.flatten_rowmajor(deriv_diag));
    } else {
        jac_g = tape.tile_rows(leaves.weights[n_layers - 1], b);
        for (int l = n_layers - 2; l >= 0; --l) {
            jac_g = tape.matmul(tape.cwise_mul(jac_g, tape.activation_prime(pre[l], params.activation)),
                                leaves.weights[l]);
        }
    }
    ad::Var jrows = tape.cwise_mul(jac_g, mask_tile);
    jrows = tape.mul_rowvec(jrows, lambda);
    jrows = tape.scale_rows(jrows, tape.flatten_rowmajor(tape.tile_rows(inv_lambda, b)));

    ad::Var logdets;
    if (ld_cfg.mode == LogDetMode::exact) {
        logdets = batched_logdet_exact(tape, jrows, u, b, d);
    } else {
        if (static_cast<int>(rnd.batch.n_per_sample.size()) != b) {
            throw std::invalid_argument("batch randomness does not match batch size");
        }
        auto coeffs = std::make_shared<std::vector<std::vector<double>>>(b);
        for (int s = 0; s < b; ++s) {
            const int n = rnd.batch.n_per_sample[s];
            (*coeffs)[s].resize(n);
            for (int k = 1; k <= n; ++k) {
                (*coeffs)[s][k - 1] = ld_cfg.mode == LogDetMode::unbiased
                                          ? 1.0 / (k * poisson_tail(ld_cfg.poisson_intensity, k))
                                          : 1.0 / k;
            }
        }
        auto probes =
            std::make_shared<std::vector<std::vector<Eigen::VectorXd>>>(rnd.batch.probes);
        logdets = batched_power_series(tape, jrows, u, b, d, coeffs, probes);
    }

    const ad::Var total = tape.add(loglik, tape.sum(logdets));

    ScoreStats stats;
    stats.score = tape.scalar(total);
    stats.mean_logdet = tape.value(logdets).sum() / b;

    if (grad != nullptr) {
        tape.backward(total);
        for (int l = 0; l < n_layers; ++l) {
            grad->layers[l].w += grad_scale * tape.grad(leaves.weights[l]);
            grad->layers[l].b += grad_scale * tape.grad(leaves.biases[l]).transpose();
        }
        grad->log_lambda += grad_scale * tape.grad(leaves.log_lambda).transpose();
        grad->noise_means += grad_scale * tape.grad(leaves.noise_means).transpose();
        grad->noise_log_scales += grad_scale * tape.grad(leaves.noise_log_scales).transpose();
        if (params.kind == ModelKind::mlp) {
            // Chain through the realized Gumbel-Softmax sample: hard forward
            // substitutes the soft sample's derivative (straight-through).
            const Eigen::MatrixXd& mask_grad = tape.grad(leaves.mask);
            Eigen::MatrixXd soft_deriv =
                rnd.mask.soft.array() * (1.0 - rnd.mask.soft.array()) / rnd.temperature;
            soft_deriv.diagonal().setZero();
            grad->mask_logits += grad_scale * mask_grad.cwiseProduct(soft_deriv);
        }
    }
    return stats;
}

double score(const MechanismParams& params, const MaskSample& mask, const Eigen::MatrixXd& batch,
             const InterventionSpec& spec, const LogDetConfig& ld_cfg, std::uint64_t seed) {
    FixedRandomness rnd;
    rnd.mask = mask;
    rnd.mask_mode = MaskMode::hard_straight_through;
    rnd.batch =
        draw_batch_randomness(ld_cfg, static_cast<int>(batch.rows()), params.d, seed);
    return score_batch(params, batch, spec, ld_cfg, rnd).score;
}

double sparsity_penalty(const MechanismParams& params) {
    if (params.kind == ModelKind::linear_direct) {
        Eigen::MatrixXd w = params.layers.front().w;
        w.diagonal().setZero();
        return w.array().abs().sum();
    }
    return expected_l1_penalty(params.mask_logits);
}

void add_sparsity_penalty_gradient(const MechanismParams& params, double lambda_scaled,
                                   GradientVector& grad) {
    if (lambda_scaled == 0.0) return;
    if (params.kind == ModelKind::linear_direct) {
        Eigen::MatrixXd sign = params.layers.front().w.array().sign();
        sign.diagonal().setZero();
        grad.layers.front().w -= lambda_scaled * sign;
        return;
    }
    const Eigen::MatrixXd p = edge_probabilities(params.mask_logits);
    Eigen::MatrixXd deriv = p.array() * (1.0 - p.array());
    deriv.diagonal().setZero();
    grad.mask_logits -= lambda_scaled * deriv;
}

double objective(const MechanismParams& params, const Dataset& dataset, const TrainConfig& cfg,
                 std::uint64_t seed) {
    cfg.validate();
    const LogDetConfig ld_cfg = cfg.logdet_config();
    const MaskSample mask =
        params.kind == ModelKind::linear_direct
            ? full_mask(params.d)
            : sample_mask(params.mask_logits, cfg.gumbel_temperature, derive_seed(seed, 1));
    double total = 0.0;
    constexpr int kChunk = 2048;
    for (std::size_t k = 0; k < dataset.experiments.size(); ++k) {
        const ExperimentData& exp = dataset.experiments[k];
        for (int start = 0; start < exp.n(); start += kChunk) {
            const int rows = std::min(kChunk, exp.n() - start);
            total += score(params, mask, exp.samples.middleRows(start, rows), exp.spec, ld_cfg,
                           derive_seed(seed, k + 2, static_cast<std::uint64_t>(start)));
        }
    }
    return total - cfg.lambda_sparse * sparsity_penalty(params);
}

GradientVector gradient(const MechanismParams& params, const Eigen::MatrixXd& batch,
                        const InterventionSpec& spec, const TrainConfig& cfg,
                        const FixedRandomness& rnd) {
    cfg.validate();
    GradientVector grad = GradientVector::zeros_like(params);
    score_batch(params, batch, spec, cfg.logdet_config(), rnd, &grad);
    add_sparsity_penalty_gradient(params, cfg.lambda_sparse, grad);
    grad.check_finite();
    return grad;
}

MechanismParams init_params(const TrainConfig& cfg, int d) {
    cfg.validate();
    MechanismParams params;
    params.d = d;
    params.kind = cfg.kind;
    params.activation = cfg.activation;
    const int n_layers = cfg.kind == ModelKind::linear_direct ? 1 : cfg.n_hidden_layers + 1;
    auto rng = make_rng(derive_seed(cfg.seed, 0x696e6974ULL));
    std::uniform_real_distribution<double> unif(-0.1, 0.1);
    for (int l = 0; l < n_layers; ++l) {
        Layer layer;
        layer.w.resize(d, d);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                layer.w(i, j) = unif(rng);
            }
        }
        layer.b = Eigen::VectorXd::Zero(d);
        params.layers.push_back(std::move(layer));
    }
    if (params.kind == ModelKind::linear_direct) {
        params.layers.front().w.diagonal().setZero();
    }
    params.mask_logits = Eigen::MatrixXd::Zero(d, d);
    params.log_lambda = Eigen::VectorXd::Zero(d);
    params.noise_means = Eigen::VectorXd::Zero(d);
    params.noise_log_scales = Eigen::VectorXd::Zero(d);
    params.poisson_intensity = cfg.poisson_intensity_init;
    params.lipschitz_target = cfg.lipschitz_target;
    lipschitz_rescale(params, cfg.n_l, cfg.lipschitz_target, cfg.seed);
    return params;
}

namespace {

struct AdamState {
    GradientVector m;
    GradientVector v;
    long t = 0;
};

void adam_ascent(MechanismParams& params, const GradientVector& grad, AdamState& state,
                 double lr) {
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    ++state.t;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
    auto update = [&](Eigen::Ref<Eigen::MatrixXd> theta, Eigen::Ref<Eigen::MatrixXd> m,
                      Eigen::Ref<Eigen::MatrixXd> v, const Eigen::MatrixXd& g) {
        m = kBeta1 * m + (1.0 - kBeta1) * g;
        v = kBeta2 * v.array().matrix() + (1.0 - kBeta2) * g.array().square().matrix();
        theta.array() += lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kEps);
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        update(params.layers[l].w, state.m.layers[l].w, state.v.layers[l].w, grad.layers[l].w);
        update(params.layers[l].b, state.m.layers[l].b, state.v.layers[l].b, grad.layers[l].b);
    }
    update(params.mask_logits, state.m.mask_logits, state.v.mask_logits, grad.mask_logits);
    update(params.log_lambda, state.m.log_lambda, state.v.log_lambda, grad.log_lambda);
    update(params.noise_means, state.m.noise_means, state.v.noise_means, grad.noise_means);
    update(params.noise_log_scales, state.m.noise_log_scales, state.v.noise_log_scales,
           grad.noise_log_scales);
}

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (dataset.experiments.empty()) {
        throw std::invalid_argument("training dataset must be nonempty");
    }
    const int d = dataset.d;
    const long n_total = dataset.total_samples();
    TrainResult result;
    result.params = init_params(cfg, d);
    MechanismParams& params = result.params;

    AdamState adam{GradientVector::zeros_like(params), GradientVector::zeros_like(params), 0};
    const LogDetConfig ld_cfg = cfg.logdet_config();
    const int n_exp = static_cast<int>(dataset.experiments.size());
    const int steps_per_epoch =
        std::max<int>(1, static_cast<int>((n_total + cfg.batch_size - 1) / cfg.batch_size));

    long global_step = 0;
    double lr = cfg.lr;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_obj = 0.0;
        double epoch_logdet = 0.0;
        for (int step = 0; step < steps_per_epoch; ++step, ++global_step) {
            const ExperimentData& exp =
                dataset.experiments[static_cast<std::size_t>(global_step % n_exp)];
            const int b = std::min<int>(cfg.batch_size, exp.n());
            auto rng = make_rng(derive_seed(cfg.seed, 0x62617463ULL,
                                            static_cast<std::uint64_t>(global_step)));
            std::uniform_int_distribution<int> pick(0, exp.n() - 1);
            Eigen::MatrixXd batch(b, d);
            for (int i = 0; i < b; ++i) {
                batch.row(i) = exp.samples.row(pick(rng));
            }
            const FixedRandomness rnd = make_fixed_randomness(
                params, cfg, b, derive_seed(cfg.seed, 0x73746570ULL,
                                            static_cast<std::uint64_t>(global_step)));
            GradientVector grad = GradientVector::zeros_like(params);
            // Step objective: per-sample mean score minus lambda times the
            // penalty, so lambda trades off against one sample's likelihood
            // regardless of dataset size.
            const ScoreStats stats =
                score_batch(params, batch, exp.spec, ld_cfg, rnd, &grad, 1.0 / b);
            const double lambda_step = cfg.lambda_sparse;
            add_sparsity_penalty_gradient(params, lambda_step, grad);
            grad.check_finite();
            adam_ascent(params, grad, adam, lr);
            if (params.kind == ModelKind::linear_direct) {
                params.layers.front().w.diagonal().setZero();
            }
            params.mask_logits.diagonal().setZero();
            lipschitz_rescale(params, cfg.n_l, cfg.lipschitz_target, cfg.seed);
            epoch_obj += stats.score / b - lambda_step * sparsity_penalty(params);
            epoch_logdet += stats.mean_logdet;
        }
        EpochStats es;
        es.epoch = epoch;
        es.objective = epoch_obj / steps_per_epoch;
        es.penalty = sparsity_penalty(params);
        es.mean_logdet = epoch_logdet / steps_per_epoch;
        result.history.push_back(es);
        if (on_epoch) on_epoch(params, es);
        lr *= cfg.lr_decay;
    }
    return result;
}

}  // namespace nodags
