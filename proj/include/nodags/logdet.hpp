#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include "nodags/mechanism.hpp"
#include "nodags/sem.hpp"

namespace nodags {

enum class LogDetMode { exact, truncated, unbiased };

[[nodiscard]] LogDetMode logdet_mode_from_string(const std::string& name);
[[nodiscard]] std::string logdet_mode_to_string(LogDetMode mode);

enum class ProbeDist { rademacher, gaussian };

struct LogDetConfig {
    LogDetMode mode = LogDetMode::exact;
    int n_terms = 8;               // truncated mode
    double poisson_intensity = 2;  // unbiased mode
    int n_probes = 1;
    ProbeDist probe_dist = ProbeDist::rademacher;

    void validate() const;
};

class degenerate_jacobian_error : public std::runtime_error {
   public:
    explicit degenerate_jacobian_error(const std::string& what) : std::runtime_error(what) {}
};

// Exact Jacobian of x |-> U f(x) for the masked mechanism, assembled row by
// row through the chain rule.
[[nodiscard]] Eigen::MatrixXd jacobian_dense(const MechanismParams& params, const MaskSample& mask,
                                             const Eigen::VectorXd& u_diag,
                                             const Eigen::VectorXd& x);

// log|det(I - J_{Uf}(x))| via LU with partial pivoting.
[[nodiscard]] double logdet_exact(const MechanismParams& params, const MaskSample& mask,
                                  const Eigen::VectorXd& u_diag, const Eigen::VectorXd& x);

[[nodiscard]] double logdet_exact_from_jacobian(const Eigen::MatrixXd& jac_uf);

// w^T (J_{Uf})^k w by repeated Jacobian-vector products.
[[nodiscard]] double trace_power_probe(const MechanismParams& params, const MaskSample& mask,
                                       const Eigen::VectorXd& u_diag, const Eigen::VectorXd& x,
                                       int k, const Eigen::VectorXd& w);

// P(N >= k) for N ~ Poisson(intensity), computed from the CDF in extended
// precision.
[[nodiscard]] double poisson_tail(double intensity, int k);

[[nodiscard]] Eigen::VectorXd draw_probe(ProbeDist dist, int d, std::mt19937_64& rng);

// Russian-roulette estimator: n ~ Poisson(intensity), terms reweighted by
// 1/(k P(N >= k)); n = 0 contributes an empty sum. Unbiased.
[[nodiscard]] double logdet_unbiased(const MechanismParams& params, const MaskSample& mask,
                                     const Eigen::VectorXd& u_diag, const Eigen::VectorXd& x,
                                     const LogDetConfig& cfg, std::uint64_t seed);

// Fixed n_terms power-series truncation; biased, with bias O(L^{n+1}/(n+1)).
[[nodiscard]] double logdet_truncated(const MechanismParams& params, const MaskSample& mask,
                                      const Eigen::VectorXd& u_diag, const Eigen::VectorXd& x,
                                      const LogDetConfig& cfg, std::uint64_t seed);

}  // namespace nodags
