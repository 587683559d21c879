#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "nodags/io.hpp"
#include "nodags/score.hpp"
#include "nodags/synthdata.hpp"

using namespace nodags;
namespace fs = std::filesystem;
using Catch::Approx;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("nodags-io-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

Dataset sample_dataset() {
    SettingSpec spec;
    spec.name = SettingName::int_cyc_lin;
    spec.d = 3;
    spec.n_per_intervention = 10;
    spec.n_test_experiments = 2;
    spec.n_test_samples = 4;
    spec.seed = 7;
    return build_setting(spec).train;
}

}  // namespace

TEST_CASE("dataset JSON round-trip") {
    const Dataset original = sample_dataset();
    const auto j = io::dataset_to_json(original);
    const Dataset restored = io::dataset_from_json(j);
    REQUIRE(restored.d == original.d);
    REQUIRE(restored.experiments.size() == original.experiments.size());
    for (std::size_t k = 0; k < original.experiments.size(); ++k) {
        CHECK(restored.experiments[k].spec.targets == original.experiments[k].spec.targets);
        CHECK(restored.experiments[k].samples == original.experiments[k].samples);
    }
    SECTION("serialization is byte-stable") {
        CHECK(j.dump(2) == io::dataset_to_json(restored).dump(2));
    }
    SECTION("fixed value rules survive the trip") {
        Dataset ds = original;
        ds.experiments[0].spec.rule = FixedValueRule{Eigen::VectorXd::Constant(1, 1.5)};
        const Dataset back = io::dataset_from_json(io::dataset_to_json(ds));
        const auto* rule = std::get_if<FixedValueRule>(&back.experiments[0].spec.rule);
        REQUIRE(rule != nullptr);
        CHECK(rule->values(0) == 1.5);
    }
}

TEST_CASE("dataset schema violations raise schema_error") {
    auto j = io::dataset_to_json(sample_dataset());
    SECTION("missing d") {
        j.erase("d");
        CHECK_THROWS_AS(io::dataset_from_json(j), io::schema_error);
    }
    SECTION("sample width mismatch") {
        j["experiments"][0]["samples"][0].push_back(1.0);
        CHECK_THROWS_AS(io::dataset_from_json(j), io::schema_error);
    }
    SECTION("unknown value rule") {
        j["experiments"][0]["value_rule"] = "cauchy";
        CHECK_THROWS_AS(io::dataset_from_json(j), io::schema_error);
    }
}

TEST_CASE("ground truth JSON round-trip") {
    const CausalGraph g = generate_er_graph(4, 2.0, true, 3);
    const GroundTruthSEM sem = sample_weights(g, Activation::linear, true, 0.9, 3);
    const GroundTruthSEM back = io::ground_truth_from_json(io::ground_truth_to_json(sem));
    CHECK(back.graph.edges == sem.graph.edges);
    CHECK(back.weights == sem.weights);
    CHECK(back.activation == sem.activation);
    CHECK(back.noise_scales == sem.noise_scales);
}

TEST_CASE("model JSON round-trip") {
    TrainConfig cfg;
    cfg.n_hidden_layers = 2;
    cfg.seed = 11;
    MechanismParams p = init_params(cfg, 3);
    p.mask_logits(0, 1) = 1.25;
    p.log_lambda(2) = -0.5;
    const MechanismParams back = io::model_from_json(io::model_to_json(p));
    CHECK(back.d == p.d);
    CHECK(back.kind == p.kind);
    CHECK(back.activation == p.activation);
    REQUIRE(back.layers.size() == p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        CHECK(back.layers[l].w == p.layers[l].w);
        CHECK(back.layers[l].b == p.layers[l].b);
    }
    CHECK(back.mask_logits == p.mask_logits);
    CHECK(back.log_lambda == p.log_lambda);
    CHECK(back.noise_means == p.noise_means);
    CHECK(back.noise_log_scales == p.noise_log_scales);
    CHECK(back.poisson_intensity == p.poisson_intensity);
    CHECK(back.lipschitz_target == p.lipschitz_target);
}

TEST_CASE("config files") {
    TempDir tmp;
    SECTION("key=value text") {
        const fs::path p = tmp.path / "cfg.txt";
        write_file(p, "# comment\nepochs=12\nlr=0.005\nlogdet_mode=unbiased\nactivation=relu\n"
                      "kind=linear-direct\nseed=42\n");
        const TrainConfig cfg = io::config_from_file(p);
        CHECK(cfg.epochs == 12);
        CHECK(cfg.lr == Approx(0.005));
        CHECK(cfg.logdet_mode == LogDetMode::unbiased);
        CHECK(cfg.activation == Activation::relu);
        CHECK(cfg.kind == ModelKind::linear_direct);
        CHECK(cfg.seed == 42);
    }
    SECTION("JSON object") {
        const fs::path p = tmp.path / "cfg.json";
        write_file(p, R"({"epochs": 3, "lambda_sparse": 0.25, "n_hidden_layers": 2})");
        const TrainConfig cfg = io::config_from_file(p);
        CHECK(cfg.epochs == 3);
        CHECK(cfg.lambda_sparse == Approx(0.25));
        CHECK(cfg.n_hidden_layers == 2);
    }
    SECTION("unknown keys are rejected") {
        const fs::path p = tmp.path / "bad.txt";
        write_file(p, "learning_rate=0.1\n");
        CHECK_THROWS_AS(io::config_from_file(p), io::schema_error);
    }
    SECTION("config round-trips through its JSON form") {
        TrainConfig cfg;
        cfg.epochs = 7;
        cfg.logdet_mode = LogDetMode::truncated;
        cfg.n_terms = 12;
        const fs::path p = tmp.path / "round.json";
        io::save_json(p, io::config_to_json(cfg));
        const TrainConfig back = io::config_from_file(p);
        CHECK(back.epochs == 7);
        CHECK(back.logdet_mode == LogDetMode::truncated);
        CHECK(back.n_terms == 12);
    }
}

TEST_CASE("metrics JSON field presence") {
    MetricsReport r;
    r.i_nll = 1.5;
    r.i_mae = 0.25;
    SECTION("without structural metrics") {
        const auto j = io::metrics_to_json(r);
        CHECK_FALSE(j.contains("shd"));
        CHECK_FALSE(j.contains("auprc"));
        CHECK(j["i_nll"] == 1.5);
        CHECK(j["i_mae"] == 0.25);
    }
    SECTION("with structural metrics") {
        r.has_structural = true;
        r.shd = 2;
        r.auprc = 0.75;
        const auto j = io::metrics_to_json(r);
        CHECK(j["shd"] == 2);
        CHECK(j["auprc"] == 0.75);
    }
}

TEST_CASE("history CSV layout") {
    TempDir tmp;
    std::vector<EpochStats> history;
    history.push_back({0, -1.5, 3.0, -0.25});
    history.push_back({1, -1.25, 2.5, -0.2});
    const fs::path p = tmp.path / "history.csv";
    io::write_history_csv(p, history);
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,objective,penalty,mean_logdet");
    std::getline(in, line);
    CHECK(line.rfind("0,-1.5", 0) == 0);
    std::getline(in, line);
    CHECK(line.rfind("1,-1.25", 0) == 0);
}

TEST_CASE("csv ingestion") {
    TempDir tmp;
    SECTION("rows group by target set") {
        const fs::path p = tmp.path / "data.csv";
        write_file(p,
                   "v1,v2,v3,perturbed\n"
                   "0.1,0.2,0.3,\n"
                   "0.4,0.5,0.6,v1\n"
                   "0.7,0.8,0.9,\n"
                   "1.0,1.1,1.2,v1\n");
        std::vector<std::string> names;
        const Dataset ds = io::ingest_csv(p, "perturbed", &names);
        CHECK(names == std::vector<std::string>{"v1", "v2", "v3"});
        REQUIRE(ds.experiments.size() == 2);
        CHECK(ds.experiments[0].spec.observational());
        CHECK(ds.experiments[0].n() == 2);
        CHECK(ds.experiments[1].spec.targets == std::vector<int>{0});
        CHECK(ds.experiments[1].samples(1, 2) == Approx(1.2));
    }
    SECTION("multi-target cells use quoted comma lists") {
        const fs::path p = tmp.path / "multi.csv";
        write_file(p,
                   "v1,v2,v3,targets\n"
                   "1,2,3,\"v1, v3\"\n"
                   "4,5,6,\"v3,v1\"\n");
        const Dataset ds = io::ingest_csv(p, "targets");
        REQUIRE(ds.experiments.size() == 1);
        CHECK(ds.experiments[0].spec.targets == std::vector<int>{0, 2});
        CHECK(ds.experiments[0].n() == 2);
    }
    SECTION("unknown variable names are rejected with the row number") {
        const fs::path p = tmp.path / "bad.csv";
        write_file(p, "v1,v2,targets\n1,2,v9\n");
        try {
            (void)io::ingest_csv(p, "targets");
            FAIL("expected schema_error");
        } catch (const io::schema_error& ex) {
            CHECK(std::string(ex.what()).find('2') != std::string::npos);
            CHECK(std::string(ex.what()).find("v9") != std::string::npos);
        }
    }
    SECTION("missing targets column") {
        const fs::path p = tmp.path / "nocol.csv";
        write_file(p, "v1,v2\n1,2\n");
        CHECK_THROWS_AS(io::ingest_csv(p, "targets"), io::schema_error);
    }
    SECTION("many single-target groups become many experiments") {
        const fs::path p = tmp.path / "many.csv";
        std::string text = "a,b,c,d,e,targets\n";
        const std::vector<std::string> vars = {"a", "b", "c", "d", "e"};
        for (int rep = 0; rep < 2; ++rep) {
            for (const auto& v : vars) {
                text += "1,2,3,4,5," + v + "\n";
            }
        }
        write_file(p, text);
        const Dataset ds = io::ingest_csv(p, "targets");
        CHECK(ds.experiments.size() == 5);
        for (const auto& exp : ds.experiments) CHECK(exp.n() == 2);
    }
}

TEST_CASE("load_json reports unreadable files as schema errors") {
    CHECK_THROWS_AS(io::load_json("/nonexistent/nodags.json"), io::schema_error);
    TempDir tmp;
    const fs::path p = tmp.path / "broken.json";
    write_file(p, "{not json");
    CHECK_THROWS_AS(io::load_json(p), io::schema_error);
}
