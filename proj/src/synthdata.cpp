#include "nodags/synthdata.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "nodags/mechanism.hpp"
#include "nodags/rng.hpp"

namespace nodags {

SettingName setting_from_string(const std::string& name) {
    if (name == "int-dag-lin") return SettingName::int_dag_lin;
    if (name == "int-dag-nonlin") return SettingName::int_dag_nonlin;
    if (name == "int-cyc-lin") return SettingName::int_cyc_lin;
    if (name == "int-cyc-nonlin") return SettingName::int_cyc_nonlin;
    if (name == "obs-lin") return SettingName::obs_lin;
    if (name == "obs-nonlin") return SettingName::obs_nonlin;
    throw std::invalid_argument("unknown setting '" + name + "'; valid settings: " +
                                valid_setting_names());
}

std::string setting_to_string(SettingName name) {
    switch (name) {
        case SettingName::int_dag_lin: return "int-dag-lin";
        case SettingName::int_dag_nonlin: return "int-dag-nonlin";
        case SettingName::int_cyc_lin: return "int-cyc-lin";
        case SettingName::int_cyc_nonlin: return "int-cyc-nonlin";
        case SettingName::obs_lin: return "obs-lin";
        case SettingName::obs_nonlin: return "obs-nonlin";
    }
    throw std::logic_error("unreachable");
}

std::string valid_setting_names() {
    return "int-dag-lin, int-dag-nonlin, int-cyc-lin, int-cyc-nonlin, obs-lin, obs-nonlin";
}

bool SettingSpec::interventional() const {
    return name == SettingName::int_dag_lin || name == SettingName::int_dag_nonlin ||
           name == SettingName::int_cyc_lin || name == SettingName::int_cyc_nonlin;
}

bool SettingSpec::cyclic() const {
    return name == SettingName::int_cyc_lin || name == SettingName::int_cyc_nonlin;
}

Activation SettingSpec::sem_activation() const {
    switch (name) {
        case SettingName::int_dag_lin:
        case SettingName::obs_lin: return Activation::linear;
        case SettingName::int_dag_nonlin: return Activation::selu;
        case SettingName::int_cyc_lin: return Activation::linear;
        case SettingName::int_cyc_nonlin:
        case SettingName::obs_nonlin: return Activation::relu;
    }
    throw std::logic_error("unreachable");
}

bool SettingSpec::contractive() const { return name != SettingName::int_dag_nonlin; }

CausalGraph generate_er_graph(int d, double density, bool cyclic, std::uint64_t seed) {
    if (density <= 0.0 || density >= d) {
        throw std::invalid_argument("edge density must lie in (0, d)");
    }
    const double p = density / (d - 1);
    auto rng = make_rng(derive_seed(seed, 0x67726170ULL));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXi edges = Eigen::MatrixXi::Zero(d, d);
    if (cyclic) {
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                if (i != j && unif(rng) < p) {
                    edges(i, j) = 1;
                }
            }
        }
    } else {
        std::vector<int> order(d);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (int a = 0; a < d; ++a) {
            for (int b = a + 1; b < d; ++b) {
                // parent order[a] -> child order[b]
                if (unif(rng) < p) {
                    edges(order[b], order[a]) = 1;
                }
            }
        }
    }
    return CausalGraph(d, std::move(edges));
}

GroundTruthSEM sample_weights(const CausalGraph& graph, Activation activation, bool contractive,
                              double target_l, std::uint64_t seed) {
    if (!contractive && !(activation == Activation::selu && is_acyclic(graph))) {
        throw std::domain_error(
            "non-contractive weights are only allowed for acyclic selu mechanisms");
    }
    const int d = graph.d;
    auto rng = make_rng(derive_seed(seed, 0x77656967ULL));
    std::uniform_real_distribution<double> magnitude(0.25, 1.0);
    std::bernoulli_distribution sign(0.5);
    GroundTruthSEM sem;
    sem.graph = graph;
    sem.activation = activation;
    sem.noise_scales = Eigen::VectorXd::Ones(d);
    sem.weights = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (graph.edges(i, j) != 0) {
                sem.weights(i, j) = (sign(rng) ? 1.0 : -1.0) * magnitude(rng);
            }
        }
    }
    if (contractive && graph.edge_count() > 0) {
        const double norm = spectral_norm_exact(sem.weights);
        if (norm > 0.0) {
            sem.weights *= target_l / norm;
        }
    }
    return sem;
}

namespace {

InterventionSpec single_node_intervention(int target) {
    InterventionSpec spec;
    spec.targets = {target};
    spec.rule = StandardNormalRule{};
    return spec;
}

Dataset make_test_split(const GroundTruthSEM& sem, const SettingSpec& spec) {
    Dataset test;
    test.d = spec.d;
    auto rng = make_rng(derive_seed(spec.seed, 0x74657374ULL));
    std::bernoulli_distribution pick_three(0.5);
    for (int e = 0; e < spec.n_test_experiments; ++e) {
        const int n_targets = pick_three(rng) ? 3 : 2;
        std::vector<int> nodes(spec.d);
        std::iota(nodes.begin(), nodes.end(), 0);
        std::shuffle(nodes.begin(), nodes.end(), rng);
        InterventionSpec ispec;
        ispec.targets.assign(nodes.begin(), nodes.begin() + n_targets);
        std::sort(ispec.targets.begin(), ispec.targets.end());
        ispec.rule = StandardNormalRule{};
        test.experiments.push_back(
            simulate_experiment(sem, ispec, spec.n_test_samples,
                                derive_seed(spec.seed, 0x74657374ULL, e + 1)));
    }
    return test;
}

GroundTruthSEM make_sem(const SettingSpec& spec) {
    const CausalGraph graph =
        generate_er_graph(spec.d, spec.density, spec.cyclic(), spec.seed);
    return sample_weights(graph, spec.sem_activation(), spec.contractive(), 0.9, spec.seed);
}

}  // namespace

SettingData build_setting(const SettingSpec& spec) {
    SettingData out;
    out.sem = make_sem(spec);
    out.train.d = spec.d;
    if (spec.interventional()) {
        for (int node = 0; node < spec.d; ++node) {
            out.train.experiments.push_back(
                simulate_experiment(out.sem, single_node_intervention(node),
                                    spec.n_per_intervention,
                                    derive_seed(spec.seed, 0x74726e00ULL, node)));
        }
    } else {
        out.train.experiments.push_back(simulate_experiment(
            out.sem, InterventionSpec{}, spec.n_observational, derive_seed(spec.seed, 0x6f627300ULL)));
    }
    out.test = make_test_split(out.sem, spec);
    return out;
}

SettingData intervention_subset(const SettingSpec& spec, int k_interventions) {
    if (k_interventions < 0 || k_interventions > spec.d) {
        throw std::invalid_argument("intervention subset size must lie in [0, d]");
    }
    SettingData out;
    out.sem = make_sem(spec);
    out.train.d = spec.d;
    out.train.experiments.push_back(simulate_experiment(
        out.sem, InterventionSpec{}, spec.n_observational, derive_seed(spec.seed, 0x6f627300ULL)));
    std::vector<int> nodes(spec.d);
    std::iota(nodes.begin(), nodes.end(), 0);
    auto rng = make_rng(derive_seed(spec.seed, 0x73756273ULL));
    std::shuffle(nodes.begin(), nodes.end(), rng);
    nodes.resize(k_interventions);
    std::sort(nodes.begin(), nodes.end());
    for (int node : nodes) {
        out.train.experiments.push_back(
            simulate_experiment(out.sem, single_node_intervention(node), spec.n_per_intervention,
                                derive_seed(spec.seed, 0x74726e00ULL, node)));
    }
    out.test = make_test_split(out.sem, spec);
    return out;
}

}  // namespace nodags
