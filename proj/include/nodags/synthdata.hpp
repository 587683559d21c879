#pragma once

#include <cstdint>
#include <string>

#include "nodags/graph.hpp"
#include "nodags/sem.hpp"

namespace nodags {

// The six synthetic benchmark settings: interventional/observational x
// linear/nonlinear x cyclic/acyclic.
enum class SettingName {
    int_dag_lin,
    int_dag_nonlin,
    int_cyc_lin,
    int_cyc_nonlin,
    obs_lin,
    obs_nonlin,
};

[[nodiscard]] SettingName setting_from_string(const std::string& name);
[[nodiscard]] std::string setting_to_string(SettingName name);
[[nodiscard]] std::string valid_setting_names();

struct SettingSpec {
    SettingName name = SettingName::int_cyc_lin;
    int d = 20;
    double density = 2.0;  // expected edges per node
    int n_per_intervention = 5000;
    int n_observational = 20000;
    int n_test_experiments = 10;
    int n_test_samples = 1000;
    std::uint64_t seed = 0;

    [[nodiscard]] bool interventional() const;
    [[nodiscard]] bool cyclic() const;
    [[nodiscard]] Activation sem_activation() const;
    [[nodiscard]] bool contractive() const;
};

// Erdos-Renyi graph: each admissible off-diagonal ordered pair is an edge
// with probability density/(d-1). The acyclic variant draws a uniformly
// random causal order and only admits order-respecting pairs.
[[nodiscard]] CausalGraph generate_er_graph(int d, double density, bool cyclic,
                                            std::uint64_t seed);

// Nonzero weights uniform on +-[0.25, 1.0]; when contractive, the whole
// matrix is rescaled to exact operator norm target_l.
[[nodiscard]] GroundTruthSEM sample_weights(const CausalGraph& graph, Activation activation,
                                            bool contractive, double target_l,
                                            std::uint64_t seed);

struct SettingData {
    GroundTruthSEM sem;
    Dataset train;
    Dataset test;
};

// Full benchmark instance: single-node interventions across all nodes (or
// one observational experiment), plus a multi-node-intervention test split.
[[nodiscard]] SettingData build_setting(const SettingSpec& spec);

// Variant for the intervention-scaling study: observational experiment plus
// a uniformly random size-k subset of the single-node interventions.
[[nodiscard]] SettingData intervention_subset(const SettingSpec& spec, int k_interventions);

}  // namespace nodags
