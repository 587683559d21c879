#include "nodags/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "nodags/score.hpp"

namespace nodags {

CausalGraph threshold_graph(const Eigen::MatrixXd& edge_probs, double t) {
    if (t <= 0.0 || t >= 1.0) {
        throw std::invalid_argument("edge threshold must lie in (0, 1)");
    }
    const int d = static_cast<int>(edge_probs.rows());
    Eigen::MatrixXi edges = Eigen::MatrixXi::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (i != j && edge_probs(i, j) >= t) {
                edges(i, j) = 1;
            }
        }
    }
    return CausalGraph(d, std::move(edges));
}

int shd(const CausalGraph& pred, const CausalGraph& truth) {
    if (pred.d != truth.d) {
        throw std::invalid_argument("graphs must share the node count");
    }
    int errors = 0;
    for (int i = 0; i < pred.d; ++i) {
        for (int j = i + 1; j < pred.d; ++j) {
            const int t_ij = truth.edges(j, i), t_ji = truth.edges(i, j);
            const int p_ij = pred.edges(j, i), p_ji = pred.edges(i, j);
            if (t_ij == p_ij && t_ji == p_ji) {
                continue;
            }
            const bool reversal = (t_ij != t_ji) && (p_ij == t_ji) && (p_ji == t_ij);
            errors += reversal ? 1 : std::abs(t_ij - p_ij) + std::abs(t_ji - p_ji);
        }
    }
    return errors;
}

std::pair<int, int> true_pos_total(const CausalGraph& pred, const CausalGraph& truth) {
    if (pred.d != truth.d) {
        throw std::invalid_argument("graphs must share the node count");
    }
    int tp = 0;
    for (int i = 0; i < pred.d; ++i) {
        for (int j = 0; j < pred.d; ++j) {
            if (pred.edges(i, j) != 0 && truth.edges(i, j) != 0) {
                ++tp;
            }
        }
    }
    return {tp, pred.edge_count()};
}

double auprc(const Eigen::MatrixXd& edge_probs, const CausalGraph& truth) {
    const int d = truth.d;
    if (truth.edge_count() == 0) {
        throw std::domain_error("AUPRC is undefined for a truth graph with no edges");
    }
    struct Candidate {
        double score;
        bool positive;
        int index;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(static_cast<std::size_t>(d) * (d - 1));
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (i == j) continue;
            candidates.push_back({edge_probs(i, j), truth.edges(i, j) != 0, i * d + j});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.index < b.index;
    });
    int positives_seen = 0;
    double ap = 0.0;
    for (std::size_t rank = 0; rank < candidates.size(); ++rank) {
        if (candidates[rank].positive) {
            ++positives_seen;
            ap += static_cast<double>(positives_seen) / static_cast<double>(rank + 1);
        }
    }
    return ap / truth.edge_count();
}

double interventional_nll(const MechanismParams& params, const Dataset& holdout) {
    const MaskSample mask = threshold_mask(params);
    LogDetConfig ld_cfg;
    ld_cfg.mode = LogDetMode::exact;
    double total_loglik = 0.0;
    long n_samples = 0;
    constexpr int kChunk = 2048;
    for (const ExperimentData& exp : holdout.experiments) {
        if (mask_diagonal(exp.spec, holdout.d).sum() == 0.0) {
            continue;  // nothing passively observed
        }
        for (int start = 0; start < exp.n(); start += kChunk) {
            const int rows = std::min(kChunk, exp.n() - start);
            FixedRandomness rnd;
            rnd.mask = mask;
            total_loglik +=
                score_batch(params, exp.samples.middleRows(start, rows), exp.spec, ld_cfg, rnd)
                    .score;
        }
        n_samples += exp.n();
    }
    if (n_samples == 0) {
        throw std::invalid_argument("holdout has no passively observed samples");
    }
    return -total_loglik / static_cast<double>(n_samples);
}

double i_mae(const MechanismParams& params, const Dataset& holdout) {
    const MaskSample mask = threshold_mask(params);
    double total = 0.0;
    long n_samples = 0;
    for (const ExperimentData& exp : holdout.experiments) {
        const Eigen::MatrixXd f = mechanism_forward_batch(params, mask, exp.samples);
        total += (f - exp.samples).array().abs().sum() / holdout.d;
        n_samples += exp.n();
    }
    if (n_samples == 0) {
        return 0.0;
    }
    return total / static_cast<double>(n_samples);
}

MetricsReport evaluate(const MechanismParams& params, const Dataset& holdout,
                       const CausalGraph* truth, double threshold) {
    MetricsReport report;
    report.i_nll = interventional_nll(params, holdout);
    report.i_mae = i_mae(params, holdout);
    if (truth != nullptr) {
        const Eigen::MatrixXd scores = model_edge_scores(params);
        const CausalGraph pred = threshold_graph(scores, threshold);
        report.has_structural = true;
        report.shd = shd(pred, *truth);
        std::tie(report.true_pos, report.total_edges) = true_pos_total(pred, *truth);
        report.auprc = auprc(scores, *truth);
    }
    return report;
}

}  // namespace nodags
