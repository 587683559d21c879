#include "nodags/io.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace nodags::io {

namespace {

ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const ordered_json& j, const std::string& field) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        throw schema_error("field '" + field + "' must be a 2d array");
    }
    const auto rows = j.size();
    const auto cols = j[0].size();
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols) {
            throw schema_error("ragged rows in field '" + field + "'");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[i][c].is_number()) {
                throw schema_error("non-numeric entry in field '" + field + "'");
            }
            m(i, c) = j[i][c].get<double>();
        }
    }
    return m;
}

ordered_json vector_to_json(const Eigen::VectorXd& v) {
    ordered_json out = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(v(i));
    }
    return out;
}

Eigen::VectorXd vector_from_json(const ordered_json& j, const std::string& field) {
    if (!j.is_array()) {
        throw schema_error("field '" + field + "' must be an array");
    }
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) {
            throw schema_error("non-numeric entry in field '" + field + "'");
        }
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

const ordered_json& require(const ordered_json& j, const std::string& field) {
    auto it = j.find(field);
    if (it == j.end()) {
        throw schema_error("missing required field '" + field + "'");
    }
    return *it;
}

}  // namespace

ordered_json dataset_to_json(const Dataset& dataset) {
    ordered_json j;
    j["d"] = dataset.d;
    ordered_json experiments = ordered_json::array();
    for (const ExperimentData& exp : dataset.experiments) {
        ordered_json e;
        e["targets"] = exp.spec.targets;
        if (const auto* fixed = std::get_if<FixedValueRule>(&exp.spec.rule)) {
            e["value_rule"] = ordered_json{{"fixed", vector_to_json(fixed->values)}};
        } else {
            e["value_rule"] = "standard_normal";
        }
        e["samples"] = matrix_to_json(exp.samples);
        experiments.push_back(std::move(e));
    }
    j["experiments"] = std::move(experiments);
    return j;
}

Dataset dataset_from_json(const ordered_json& j) {
    Dataset dataset;
    dataset.d = require(j, "d").get<int>();
    if (dataset.d <= 0) {
        throw schema_error("'d' must be positive");
    }
    for (const auto& e : require(j, "experiments")) {
        ExperimentData exp;
        exp.spec.targets = require(e, "targets").get<std::vector<int>>();
        const auto& rule = require(e, "value_rule");
        if (rule.is_string()) {
            if (rule.get<std::string>() != "standard_normal") {
                throw schema_error("unknown value_rule '" + rule.get<std::string>() + "'");
            }
            exp.spec.rule = StandardNormalRule{};
        } else if (rule.is_object() && rule.contains("fixed")) {
            exp.spec.rule = FixedValueRule{vector_from_json(rule["fixed"], "value_rule.fixed")};
        } else {
            throw schema_error("value_rule must be \"standard_normal\" or {\"fixed\": [...]}");
        }
        exp.samples = matrix_from_json(require(e, "samples"), "samples");
        if (exp.samples.cols() != dataset.d) {
            throw schema_error("sample width does not match 'd'");
        }
        try {
            exp.spec.validate(dataset.d);
        } catch (const std::exception& ex) {
            throw schema_error(ex.what());
        }
        dataset.experiments.push_back(std::move(exp));
    }
    return dataset;
}

ordered_json ground_truth_to_json(const GroundTruthSEM& sem) {
    ordered_json j;
    j["d"] = sem.graph.d;
    ordered_json edges = ordered_json::array();
    for (int i = 0; i < sem.graph.d; ++i) {
        ordered_json row = ordered_json::array();
        for (int c = 0; c < sem.graph.d; ++c) {
            row.push_back(sem.graph.edges(i, c));
        }
        edges.push_back(std::move(row));
    }
    j["edges"] = std::move(edges);
    j["weights"] = matrix_to_json(sem.weights);
    j["activation"] = activation_to_string(sem.activation);
    j["noise_scales"] = vector_to_json(sem.noise_scales);
    return j;
}

GroundTruthSEM ground_truth_from_json(const ordered_json& j) {
    GroundTruthSEM sem;
    const int d = require(j, "d").get<int>();
    const Eigen::MatrixXd edges_d = matrix_from_json(require(j, "edges"), "edges");
    Eigen::MatrixXi edges = edges_d.cast<int>();
    try {
        sem.graph = CausalGraph(d, std::move(edges));
        sem.weights = matrix_from_json(require(j, "weights"), "weights");
        sem.activation = activation_from_string(require(j, "activation").get<std::string>());
        sem.noise_scales = vector_from_json(require(j, "noise_scales"), "noise_scales");
        sem.validate();
    } catch (const schema_error&) {
        throw;
    } catch (const std::exception& ex) {
        throw schema_error(ex.what());
    }
    return sem;
}

ordered_json model_to_json(const MechanismParams& params) {
    ordered_json j;
    j["d"] = params.d;
    j["kind"] = model_kind_to_string(params.kind);
    j["activation"] = activation_to_string(params.activation);
    ordered_json layers = ordered_json::array();
    for (const Layer& layer : params.layers) {
        layers.push_back(ordered_json{{"w", matrix_to_json(layer.w)}, {"b", vector_to_json(layer.b)}});
    }
    j["layers"] = std::move(layers);
    j["mask_logits"] = matrix_to_json(params.mask_logits);
    j["log_lambda"] = vector_to_json(params.log_lambda);
    j["noise_means"] = vector_to_json(params.noise_means);
    j["noise_log_scales"] = vector_to_json(params.noise_log_scales);
    j["poisson_intensity"] = params.poisson_intensity;
    j["lipschitz_target"] = params.lipschitz_target;
    return j;
}

MechanismParams model_from_json(const ordered_json& j) {
    MechanismParams params;
    try {
        params.d = require(j, "d").get<int>();
        params.kind = model_kind_from_string(require(j, "kind").get<std::string>());
        params.activation = activation_from_string(require(j, "activation").get<std::string>());
        for (const auto& layer_json : require(j, "layers")) {
            Layer layer;
            layer.w = matrix_from_json(require(layer_json, "w"), "layers.w");
            layer.b = vector_from_json(require(layer_json, "b"), "layers.b");
            params.layers.push_back(std::move(layer));
        }
        params.mask_logits = matrix_from_json(require(j, "mask_logits"), "mask_logits");
        params.log_lambda = vector_from_json(require(j, "log_lambda"), "log_lambda");
        params.noise_means = vector_from_json(require(j, "noise_means"), "noise_means");
        params.noise_log_scales = vector_from_json(require(j, "noise_log_scales"), "noise_log_scales");
        params.poisson_intensity = require(j, "poisson_intensity").get<double>();
        params.lipschitz_target = require(j, "lipschitz_target").get<double>();
        params.validate();
    } catch (const schema_error&) {
        throw;
    } catch (const std::exception& ex) {
        throw schema_error(ex.what());
    }
    return params;
}

ordered_json config_to_json(const TrainConfig& cfg) {
    ordered_json j;
    j["lambda_sparse"] = cfg.lambda_sparse;
    j["lr"] = cfg.lr;
    j["lr_decay"] = cfg.lr_decay;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["n_hidden_layers"] = cfg.n_hidden_layers;
    j["n_l"] = cfg.n_l;
    j["lipschitz_target"] = cfg.lipschitz_target;
    j["poisson_intensity_init"] = cfg.poisson_intensity_init;
    j["gumbel_temperature"] = cfg.gumbel_temperature;
    j["seed"] = cfg.seed;
    j["logdet_mode"] = logdet_mode_to_string(cfg.logdet_mode);
    j["kind"] = model_kind_to_string(cfg.kind);
    j["activation"] = activation_to_string(cfg.activation);
    j["n_probes"] = cfg.n_probes;
    j["n_terms"] = cfg.n_terms;
    return j;
}

namespace {

TrainConfig config_from_pairs(const std::map<std::string, std::string>& pairs) {
    TrainConfig cfg;
    for (const auto& [key, raw] : pairs) {
        try {
            if (key == "lambda_sparse") cfg.lambda_sparse = std::stod(raw);
            else if (key == "lr") cfg.lr = std::stod(raw);
            else if (key == "lr_decay") cfg.lr_decay = std::stod(raw);
            else if (key == "epochs") cfg.epochs = std::stoi(raw);
            else if (key == "batch_size") cfg.batch_size = std::stoi(raw);
            else if (key == "n_hidden_layers") cfg.n_hidden_layers = std::stoi(raw);
            else if (key == "n_l") cfg.n_l = std::stoi(raw);
            else if (key == "lipschitz_target") cfg.lipschitz_target = std::stod(raw);
            else if (key == "poisson_intensity_init") cfg.poisson_intensity_init = std::stod(raw);
            else if (key == "gumbel_temperature") cfg.gumbel_temperature = std::stod(raw);
            else if (key == "seed") cfg.seed = std::stoull(raw);
            else if (key == "logdet_mode") cfg.logdet_mode = logdet_mode_from_string(raw);
            else if (key == "kind") cfg.kind = model_kind_from_string(raw);
            else if (key == "activation") cfg.activation = activation_from_string(raw);
            else if (key == "n_probes") cfg.n_probes = std::stoi(raw);
            else if (key == "n_terms") cfg.n_terms = std::stoi(raw);
            else throw schema_error("unknown config key '" + key + "'");
        } catch (const schema_error&) {
            throw;
        } catch (const std::exception&) {
            throw schema_error("invalid value for config key '" + key + "': " + raw);
        }
    }
    try {
        cfg.validate();
    } catch (const std::exception& ex) {
        throw schema_error(ex.what());
    }
    return cfg;
}

}  // namespace

TrainConfig config_from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw schema_error("cannot open config file: " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    std::map<std::string, std::string> pairs;
    if (first != std::string::npos && text[first] == '{') {
        ordered_json j;
        try {
            j = ordered_json::parse(text);
        } catch (const std::exception& ex) {
            throw schema_error(std::string("config JSON parse error: ") + ex.what());
        }
        for (const auto& [key, value] : j.items()) {
            pairs[key] = value.is_string() ? value.get<std::string>() : value.dump();
        }
    } else {
        std::istringstream lines(text);
        std::string line;
        int line_no = 0;
        while (std::getline(lines, line)) {
            ++line_no;
            const auto start = line.find_first_not_of(" \t\r");
            if (start == std::string::npos || line[start] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw schema_error("config line " + std::to_string(line_no) +
                                   " is not key=value: " + line);
            }
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            pairs[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
    }
    return config_from_pairs(pairs);
}

ordered_json metrics_to_json(const MetricsReport& report) {
    ordered_json j;
    if (report.has_structural) {
        j["shd"] = report.shd;
        j["true_pos"] = report.true_pos;
        j["total_edges"] = report.total_edges;
        j["auprc"] = report.auprc;
    }
    j["i_nll"] = report.i_nll;
    j["i_mae"] = report.i_mae;
    return j;
}

void save_json(const std::filesystem::path& path, const ordered_json& j) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write file: " + path.string());
    }
    out << j.dump(2) << "\n";
}

ordered_json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw schema_error("cannot open file: " + path.string());
    }
    try {
        return ordered_json::parse(in);
    } catch (const std::exception& ex) {
        throw schema_error("JSON parse error in " + path.string() + ": " + ex.what());
    }
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write file: " + path.string());
    }
    out << "epoch,objective,penalty,mean_logdet\n";
    out.precision(17);
    for (const EpochStats& es : history) {
        out << es.epoch << "," << es.objective << "," << es.penalty << "," << es.mean_logdet
            << "\n";
    }
}

Dataset ingest_csv(const std::filesystem::path& csv_path, const std::string& targets_column,
                   std::vector<std::string>* variable_names) {
    std::ifstream in(csv_path);
    if (!in) {
        throw schema_error("cannot open csv file: " + csv_path.string());
    }
    // RFC-4180-style split: double quotes protect separators, "" escapes a
    // quote. The targets field relies on quoting to hold comma-separated
    // variable names.
    auto split = [](const std::string& line) {
        std::vector<std::string> fields;
        std::string field;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char ch = line[i];
            if (quoted) {
                if (ch == '"') {
                    if (i + 1 < line.size() && line[i + 1] == '"') {
                        field.push_back('"');
                        ++i;
                    } else {
                        quoted = false;
                    }
                } else {
                    field.push_back(ch);
                }
            } else if (ch == '"') {
                quoted = true;
            } else if (ch == ',') {
                fields.push_back(std::move(field));
                field.clear();
            } else {
                field.push_back(ch);
            }
        }
        fields.push_back(std::move(field));
        return fields;
    };
    std::string header;
    if (!std::getline(in, header)) {
        throw schema_error("csv file is empty");
    }
    if (!header.empty() && header.back() == '\r') header.pop_back();
    const std::vector<std::string> columns = split(header);
    int targets_idx = -1;
    std::vector<std::string> vars;
    std::map<std::string, int> var_index;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (columns[c] == targets_column) {
            targets_idx = static_cast<int>(c);
        } else {
            var_index[columns[c]] = static_cast<int>(vars.size());
            vars.push_back(columns[c]);
        }
    }
    if (targets_idx < 0) {
        throw schema_error("csv is missing targets column '" + targets_column + "'");
    }
    const int d = static_cast<int>(vars.size());
    if (d == 0) {
        throw schema_error("csv has no variable columns");
    }

    // Group rows by sorted target-index set, preserving first-seen order.
    std::vector<std::vector<int>> group_targets;
    std::vector<std::vector<Eigen::VectorXd>> group_rows;
    std::map<std::vector<int>, int> group_index;
    std::string line;
    int row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split(line);
        if (fields.size() != columns.size()) {
            throw schema_error("csv row " + std::to_string(row_no) + " has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(columns.size()));
        }
        std::vector<int> targets;
        {
            std::istringstream ts(fields[targets_idx]);
            std::string name;
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t");
                const auto e = s.find_last_not_of(" \t");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            while (std::getline(ts, name, ',')) {
                name = trim(name);
                if (!name.empty()) {
                    auto it = var_index.find(name);
                    if (it == var_index.end()) {
                        throw schema_error("csv row " + std::to_string(row_no) +
                                           " names unknown variable '" + name + "' in targets");
                    }
                    targets.push_back(it->second);
                }
            }
        }
        std::sort(targets.begin(), targets.end());
        targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
        Eigen::VectorXd row(d);
        int v = 0;
        for (std::size_t c = 0; c < fields.size(); ++c) {
            if (static_cast<int>(c) == targets_idx) continue;
            try {
                row(v++) = std::stod(fields[c]);
            } catch (const std::exception&) {
                throw schema_error("csv row " + std::to_string(row_no) +
                                   " has a non-numeric value in column '" + columns[c] + "'");
            }
        }
        auto [it, inserted] = group_index.try_emplace(targets, static_cast<int>(group_targets.size()));
        if (inserted) {
            group_targets.push_back(targets);
            group_rows.emplace_back();
        }
        group_rows[it->second].push_back(std::move(row));
    }

    Dataset dataset;
    dataset.d = d;
    for (std::size_t g = 0; g < group_targets.size(); ++g) {
        ExperimentData exp;
        exp.spec.targets = group_targets[g];
        exp.spec.rule = StandardNormalRule{};
        exp.samples.resize(static_cast<Eigen::Index>(group_rows[g].size()), d);
        for (std::size_t r = 0; r < group_rows[g].size(); ++r) {
            exp.samples.row(static_cast<Eigen::Index>(r)) = group_rows[g][r].transpose();
        }
        dataset.experiments.push_back(std::move(exp));
    }
    if (variable_names != nullptr) {
        *variable_names = vars;
    }
    return dataset;
}

}  // namespace nodags::io
