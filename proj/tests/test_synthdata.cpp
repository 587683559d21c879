#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <set>

#include "nodags/mechanism.hpp"
#include "nodags/synthdata.hpp"

using namespace nodags;
using Catch::Approx;

TEST_CASE("setting names round-trip and encode Table-style properties") {
    for (const std::string name : {"int-dag-lin", "int-dag-nonlin", "int-cyc-lin",
                                   "int-cyc-nonlin", "obs-lin", "obs-nonlin"}) {
        CHECK(setting_to_string(setting_from_string(name)) == name);
    }
    CHECK_THROWS_AS(setting_from_string("bogus"), std::invalid_argument);

    SettingSpec spec;
    spec.name = SettingName::int_dag_nonlin;
    CHECK(spec.interventional());
    CHECK_FALSE(spec.cyclic());
    CHECK(spec.sem_activation() == Activation::selu);
    CHECK_FALSE(spec.contractive());

    spec.name = SettingName::int_cyc_nonlin;
    CHECK(spec.cyclic());
    CHECK(spec.sem_activation() == Activation::relu);
    CHECK(spec.contractive());

    spec.name = SettingName::obs_lin;
    CHECK_FALSE(spec.interventional());
    CHECK(spec.sem_activation() == Activation::linear);

    spec.name = SettingName::obs_nonlin;
    CHECK(spec.sem_activation() == Activation::relu);

    spec.name = SettingName::int_cyc_lin;
    CHECK(spec.cyclic());
    CHECK(spec.sem_activation() == Activation::linear);
    spec.name = SettingName::int_dag_lin;
    CHECK_FALSE(spec.cyclic());
    CHECK(spec.contractive());
}

TEST_CASE("generate_er_graph basics") {
    SECTION("zero density gives an empty graph") {
        CHECK(generate_er_graph(10, 1e-12, true, 1).edge_count() == 0);
    }
    SECTION("acyclic generation always admits a topological sort") {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            const CausalGraph g = generate_er_graph(8, 2.0, false, seed);
            CHECK(is_acyclic(g));
            CHECK(g.edges.diagonal().isZero());
        }
    }
    SECTION("cyclic graphs eventually contain a cycle") {
        int cyclic_seen = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const CausalGraph g = generate_er_graph(8, 2.0, true, seed);
            CHECK(g.edges.diagonal().isZero());
            if (!is_acyclic(g)) ++cyclic_seen;
        }
        CHECK(cyclic_seen > 0);
    }
    SECTION("mean edge count tracks d * density") {
        const int trials = 500;
        double total = 0.0;
        for (int t = 0; t < trials; ++t) {
            total += generate_er_graph(20, 2.0, true, 1000 + t).edge_count();
        }
        const double mean = total / trials;
        // Binomial(380, 2/19): sd of the mean over 500 graphs.
        const double p = 2.0 / 19.0;
        const double se = std::sqrt(380 * p * (1 - p) / trials);
        CHECK(std::abs(mean - 40.0) < 3 * se);
    }
    SECTION("determinism") {
        const CausalGraph a = generate_er_graph(12, 2.0, true, 5);
        const CausalGraph b = generate_er_graph(12, 2.0, true, 5);
        CHECK(a.edges == b.edges);
    }
}

TEST_CASE("sample_weights") {
    SECTION("empty graph gives zero weights") {
        const GroundTruthSEM sem =
            sample_weights(CausalGraph::empty(4), Activation::linear, true, 0.9, 1);
        CHECK(sem.weights.isZero(0.0));
    }
    SECTION("contractive rescaling hits the operator norm exactly") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const CausalGraph g = generate_er_graph(8, 2.0, true, seed);
            if (g.edge_count() == 0) continue;
            const GroundTruthSEM sem = sample_weights(g, Activation::linear, true, 0.9, seed);
            CHECK(spectral_norm_exact(sem.weights) == Approx(0.9).margin(1e-9));
        }
    }
    SECTION("non-contractive selu weights are left unscaled") {
        const CausalGraph g = generate_er_graph(6, 2.0, false, 3);
        const GroundTruthSEM sem = sample_weights(g, Activation::selu, false, 0.9, 3);
        // Magnitudes stay inside the raw +-[0.25, 1] band.
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 6; ++j) {
                if (g.edges(i, j) != 0) {
                    const double m = std::abs(sem.weights(i, j));
                    CHECK(m >= 0.25);
                    CHECK(m <= 1.0);
                }
            }
        }
        CHECK(sem.activation == Activation::selu);
    }
    SECTION("non-contractive cyclic request is rejected") {
        const CausalGraph g = generate_er_graph(6, 2.0, true, 12);
        REQUIRE_FALSE(is_acyclic(g));
        CHECK_THROWS_AS(sample_weights(g, Activation::selu, false, 0.9, 1), std::domain_error);
    }
    SECTION("noise scales are all one") {
        const CausalGraph g = generate_er_graph(5, 2.0, true, 7);
        const GroundTruthSEM sem = sample_weights(g, Activation::linear, true, 0.9, 7);
        CHECK(sem.noise_scales.isApprox(Eigen::VectorXd::Ones(5)));
    }
}

TEST_CASE("build_setting shapes") {
    SettingSpec spec;
    spec.d = 6;
    spec.n_per_intervention = 50;
    spec.n_observational = 200;
    spec.n_test_experiments = 5;
    spec.n_test_samples = 20;
    spec.seed = 4;

    SECTION("interventional settings get one experiment per node") {
        spec.name = SettingName::int_cyc_lin;
        const SettingData data = build_setting(spec);
        REQUIRE(data.train.experiments.size() == 6);
        std::set<int> targets;
        for (const ExperimentData& exp : data.train.experiments) {
            REQUIRE(exp.spec.targets.size() == 1);
            targets.insert(exp.spec.targets[0]);
            CHECK(exp.n() == 50);
        }
        CHECK(targets.size() == 6);
    }
    SECTION("observational settings get one pooled experiment") {
        spec.name = SettingName::obs_lin;
        const SettingData data = build_setting(spec);
        REQUIRE(data.train.experiments.size() == 1);
        CHECK(data.train.experiments[0].spec.observational());
        CHECK(data.train.experiments[0].n() == 200);
    }
    SECTION("test split targets 2 or 3 nodes") {
        spec.name = SettingName::int_cyc_lin;
        const SettingData data = build_setting(spec);
        REQUIRE(data.test.experiments.size() == 5);
        for (const ExperimentData& exp : data.test.experiments) {
            const std::size_t k = exp.spec.targets.size();
            CHECK((k == 2 || k == 3));
            CHECK(exp.n() == 20);
        }
    }
    SECTION("selu setting produces an acyclic graph and selu activation") {
        spec.name = SettingName::int_dag_nonlin;
        const SettingData data = build_setting(spec);
        CHECK(data.sem.activation == Activation::selu);
        CHECK(is_acyclic(data.sem.graph));
    }
    SECTION("datasets are bit-identical across builds") {
        spec.name = SettingName::int_cyc_lin;
        const SettingData a = build_setting(spec);
        const SettingData b = build_setting(spec);
        REQUIRE(a.train.experiments.size() == b.train.experiments.size());
        for (std::size_t i = 0; i < a.train.experiments.size(); ++i) {
            CHECK(a.train.experiments[i].samples == b.train.experiments[i].samples);
        }
        CHECK(a.sem.weights == b.sem.weights);
    }
}

TEST_CASE("intervention_subset") {
    SettingSpec spec;
    spec.name = SettingName::int_cyc_lin;
    spec.d = 10;
    spec.n_per_intervention = 30;
    spec.n_observational = 60;
    spec.seed = 9;

    SECTION("k = 0 keeps only the observational experiment") {
        const SettingData data = intervention_subset(spec, 0);
        REQUIRE(data.train.experiments.size() == 1);
        CHECK(data.train.experiments[0].spec.observational());
    }
    SECTION("k = 4 keeps four distinct single-node targets") {
        const SettingData data = intervention_subset(spec, 4);
        REQUIRE(data.train.experiments.size() == 5);
        std::set<int> targets;
        for (std::size_t i = 1; i < data.train.experiments.size(); ++i) {
            REQUIRE(data.train.experiments[i].spec.targets.size() == 1);
            targets.insert(data.train.experiments[i].spec.targets[0]);
        }
        CHECK(targets.size() == 4);
    }
    SECTION("k = d keeps the full suite") {
        const SettingData data = intervention_subset(spec, 10);
        CHECK(data.train.experiments.size() == 11);
    }
    SECTION("k out of range is rejected") {
        CHECK_THROWS_AS(intervention_subset(spec, 11), std::invalid_argument);
        CHECK_THROWS_AS(intervention_subset(spec, -1), std::invalid_argument);
    }
}
