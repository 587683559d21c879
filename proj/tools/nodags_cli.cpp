#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "nodags/io.hpp"
#include "nodags/logdet.hpp"
#include "nodags/metrics.hpp"
#include "nodags/score.hpp"
#include "nodags/sem.hpp"
#include "nodags/synthdata.hpp"

namespace fs = std::filesystem;
using nodags::io::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct ManifestWriter {
    std::string command;
    ordered_json config = ordered_json::object();
    ordered_json inputs = ordered_json::object();
    ordered_json outputs = ordered_json::object();
    std::uint64_t seed = 0;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write(const fs::path& path) const {
        ordered_json m;
        m["command"] = command;
        m["config"] = config;
        m["inputs"] = inputs;
        m["outputs"] = outputs;
        m["seed"] = seed;
        m["duration_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        m["version"] = kVersion;
        nodags::io::save_json(path, m);
    }
};

void apply_thread_cap() {
    if (const char* env = std::getenv("NODAGS_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) {
            Eigen::setNbThreads(n);
        }
    }
}

[[nodiscard]] fs::path sibling(const fs::path& out, const std::string& name) {
    fs::path dir = out.parent_path();
    if (dir.empty()) dir = ".";
    return dir / name;
}

void ensure_parent(const fs::path& out) {
    const fs::path dir = out.parent_path();
    if (!dir.empty()) {
        fs::create_directories(dir);
    }
}

int cmd_generate(const std::string& setting_name, int nodes, std::uint64_t seed,
                 const std::string& out_dir, double density, int samples) {
    nodags::SettingSpec spec;
    spec.name = nodags::setting_from_string(setting_name);
    spec.d = nodes;
    spec.density = density;
    spec.seed = seed;
    if (samples > 0) {
        spec.n_per_intervention = samples;
        spec.n_observational = samples;
    }

    ManifestWriter manifest;
    manifest.command = "generate";
    manifest.seed = seed;
    manifest.config["setting"] = setting_name;
    manifest.config["nodes"] = nodes;
    manifest.config["density"] = density;
    if (samples > 0) manifest.config["samples"] = samples;

    const nodags::SettingData data = nodags::build_setting(spec);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    nodags::io::save_json(dir / "dataset.json", nodags::io::dataset_to_json(data.train));
    nodags::io::save_json(dir / "test.json", nodags::io::dataset_to_json(data.test));
    nodags::io::save_json(dir / "truth.json", nodags::io::ground_truth_to_json(data.sem));
    manifest.outputs["dataset"] = (dir / "dataset.json").string();
    manifest.outputs["test"] = (dir / "test.json").string();
    manifest.outputs["truth"] = (dir / "truth.json").string();
    manifest.write(dir / "manifest.json");

    std::cout << "wrote " << data.train.experiments.size() << " experiments ("
              << data.train.total_samples() << " samples) to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& data_path, const std::string& config_path,
              const std::string& out_path, const std::string& history_path) {
    nodags::TrainConfig cfg;
    if (!config_path.empty()) {
        cfg = nodags::io::config_from_file(config_path);
    }
    const nodags::Dataset dataset = nodags::io::dataset_from_json(nodags::io::load_json(data_path));

    ManifestWriter manifest;
    manifest.command = "train";
    manifest.seed = cfg.seed;
    manifest.config = nodags::io::config_to_json(cfg);
    manifest.inputs["data"] = data_path;
    if (!config_path.empty()) manifest.inputs["config"] = config_path;

    const nodags::TrainResult result = nodags::train(dataset, cfg);

    ensure_parent(out_path);
    nodags::io::save_json(out_path, nodags::io::model_to_json(result.params));
    manifest.outputs["model"] = out_path;
    if (!history_path.empty()) {
        ensure_parent(history_path);
        nodags::io::write_history_csv(history_path, result.history);
        manifest.outputs["history"] = history_path;
    }
    manifest.write(sibling(out_path, "manifest.json"));

    if (!result.history.empty()) {
        std::cout << "final objective " << result.history.back().objective << "\n";
    }
    std::cout << "wrote model to " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& truth_path, const std::string& out_path, double threshold) {
    const nodags::MechanismParams params =
        nodags::io::model_from_json(nodags::io::load_json(model_path));
    const nodags::Dataset holdout =
        nodags::io::dataset_from_json(nodags::io::load_json(data_path));

    std::optional<nodags::CausalGraph> truth;
    if (!truth_path.empty()) {
        truth = nodags::io::ground_truth_from_json(nodags::io::load_json(truth_path)).graph;
    }

    ManifestWriter manifest;
    manifest.command = "eval";
    manifest.config["threshold"] = threshold;
    manifest.inputs["model"] = model_path;
    manifest.inputs["data"] = data_path;
    if (!truth_path.empty()) manifest.inputs["truth"] = truth_path;

    const nodags::MetricsReport report =
        nodags::evaluate(params, holdout, truth ? &*truth : nullptr, threshold);

    ensure_parent(out_path);
    nodags::io::save_json(out_path, nodags::io::metrics_to_json(report));
    manifest.outputs["metrics"] = out_path;
    manifest.write(sibling(out_path, "manifest.json"));

    std::cout << nodags::io::metrics_to_json(report).dump(2) << "\n";
    return 0;
}

int cmd_ingest_csv(const std::string& csv_path, const std::string& targets_column,
                   const std::string& out_path) {
    ManifestWriter manifest;
    manifest.command = "ingest-csv";
    manifest.config["targets_column"] = targets_column;
    manifest.inputs["csv"] = csv_path;

    std::vector<std::string> names;
    const nodags::Dataset dataset = nodags::io::ingest_csv(csv_path, targets_column, &names);

    ensure_parent(out_path);
    ordered_json j = nodags::io::dataset_to_json(dataset);
    j["variable_names"] = names;
    nodags::io::save_json(out_path, j);
    manifest.outputs["dataset"] = out_path;
    manifest.write(sibling(out_path, "manifest.json"));

    std::cout << "ingested " << dataset.experiments.size() << " experiments ("
              << dataset.total_samples() << " rows) into " << out_path << "\n";
    return 0;
}

int cmd_sweep_interventions(const std::string& setting_name, int nodes,
                            const std::string& k_list_str, const std::string& out_dir,
                            std::uint64_t seed, const std::string& config_path, int samples) {
    std::vector<int> k_values;
    {
        std::stringstream ss(k_list_str);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            std::size_t pos = 0;
            const int k = std::stoi(item, &pos);
            if (pos != item.size() || k < 0) {
                throw CLI::ValidationError("--k-list", "entries must be non-negative integers");
            }
            k_values.push_back(k);
        }
    }
    if (k_values.empty()) {
        throw CLI::ValidationError("--k-list", "needs at least one value");
    }
    for (const int k : k_values) {
        if (k > nodes) {
            throw CLI::ValidationError("--k-list",
                                       "k = " + std::to_string(k) + " exceeds --nodes");
        }
    }

    nodags::SettingSpec spec;
    spec.name = nodags::setting_from_string(setting_name);
    spec.d = nodes;
    spec.seed = seed;
    if (samples > 0) {
        spec.n_per_intervention = samples;
        spec.n_observational = samples;
    }

    nodags::TrainConfig cfg;
    if (!config_path.empty()) {
        cfg = nodags::io::config_from_file(config_path);
    }

    ManifestWriter manifest;
    manifest.command = "sweep-interventions";
    manifest.seed = seed;
    manifest.config["setting"] = setting_name;
    manifest.config["nodes"] = nodes;
    manifest.config["k_list"] = k_values;
    manifest.config["train"] = nodags::io::config_to_json(cfg);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    for (const int k : k_values) {
        const nodags::SettingData data = nodags::intervention_subset(spec, k);
        const nodags::TrainResult result = nodags::train(data.train, cfg);
        const nodags::MetricsReport report =
            nodags::evaluate(result.params, data.test, &data.sem.graph);
        const fs::path metrics_path = dir / ("metrics-k" + std::to_string(k) + ".json");
        nodags::io::save_json(metrics_path, nodags::io::metrics_to_json(report));
        manifest.outputs["k" + std::to_string(k)] = metrics_path.string();
        std::cout << "k=" << k << " auprc=" << report.auprc << " shd=" << report.shd << "\n";
    }
    manifest.write(dir / "manifest.json");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    apply_thread_cap();

    CLI::App app{"Learns cyclic causal graphs from observational and interventional data"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // generate
    std::string gen_setting, gen_out;
    int gen_nodes = 20, gen_samples = 0;
    double gen_density = 2.0;
    std::uint64_t gen_seed = 0;
    auto* gen = app.add_subcommand("generate", "Sample a synthetic benchmark setting");
    gen->add_option("--setting", gen_setting, "One of " + nodags::valid_setting_names())
        ->required();
    gen->add_option("--nodes", gen_nodes, "Number of variables");
    gen->add_option("--seed", gen_seed, "Random seed");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--density", gen_density, "Expected edges per node");
    gen->add_option("--samples", gen_samples, "Samples per experiment");

    // train
    std::string train_data, train_config, train_out, train_history;
    auto* tr = app.add_subcommand("train", "Fit a model to a dataset");
    tr->add_option("--data", train_data, "Dataset JSON")->required();
    tr->add_option("--config", train_config, "Config file (JSON or key=value lines)");
    tr->add_option("--out", train_out, "Model output path")->required();
    tr->add_option("--history", train_history, "Training history CSV path");

    // eval
    std::string eval_model, eval_data, eval_truth, eval_out;
    double eval_threshold = 0.5;
    auto* ev = app.add_subcommand("eval", "Score a fitted model on holdout data");
    ev->add_option("--model", eval_model, "Model JSON")->required();
    ev->add_option("--data", eval_data, "Holdout dataset JSON")->required();
    ev->add_option("--truth", eval_truth, "Ground-truth JSON (enables structural metrics)");
    ev->add_option("--out", eval_out, "Metrics output path")->required();
    ev->add_option("--threshold", eval_threshold, "Edge probability threshold");

    // ingest-csv
    std::string csv_path, csv_targets, csv_out;
    auto* ing = app.add_subcommand("ingest-csv", "Convert a perturbation CSV to a dataset");
    ing->add_option("--csv", csv_path, "Input CSV")->required();
    ing->add_option("--targets-column", csv_targets, "Name of the targets column")->required();
    ing->add_option("--out", csv_out, "Dataset output path")->required();

    // sweep-interventions
    std::string sw_setting, sw_klist, sw_out, sw_config;
    int sw_nodes = 10, sw_samples = 0;
    std::uint64_t sw_seed = 0;
    auto* sw = app.add_subcommand("sweep-interventions",
                                  "Train/eval across intervention-set sizes");
    sw->add_option("--setting", sw_setting, "One of " + nodags::valid_setting_names())
        ->required();
    sw->add_option("--nodes", sw_nodes, "Number of variables");
    sw->add_option("--k-list", sw_klist, "Comma-separated intervention counts")->required();
    sw->add_option("--out", sw_out, "Output directory")->required();
    sw->add_option("--seed", sw_seed, "Random seed");
    sw->add_option("--config", sw_config, "Training config file");
    sw->add_option("--samples", sw_samples, "Samples per experiment");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (gen->parsed()) {
            return cmd_generate(gen_setting, gen_nodes, gen_seed, gen_out, gen_density,
                                gen_samples);
        }
        if (tr->parsed()) {
            return cmd_train(train_data, train_config, train_out, train_history);
        }
        if (ev->parsed()) {
            return cmd_eval(eval_model, eval_data, eval_truth, eval_out, eval_threshold);
        }
        if (ing->parsed()) {
            return cmd_ingest_csv(csv_path, csv_targets, csv_out);
        }
        if (sw->parsed()) {
            return cmd_sweep_interventions(sw_setting, sw_nodes, sw_klist, sw_out, sw_seed,
                                           sw_config, sw_samples);
        }
    } catch (const CLI::ValidationError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const nodags::io::schema_error& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const nodags::nonconvergence_error& ex) {
        std::cerr << "numeric failure: " << ex.what() << "\n";
        return kExitNumeric;
    } catch (const nodags::degenerate_jacobian_error& ex) {
        std::cerr << "numeric failure: " << ex.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& ex) {
        std::cerr << "numeric failure: " << ex.what() << "\n";
        return kExitNumeric;
    }
    return kExitUsage;
}
