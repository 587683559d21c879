#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nodags/mechanism.hpp"
#include "nodags/metrics.hpp"
#include "nodags/score.hpp"
#include "nodags/sem.hpp"

namespace nodags::io {

using ordered_json = nlohmann::ordered_json;

// Input files that fail to parse or violate a schema raise this; the CLI
// maps it to exit code 2.
class schema_error : public std::runtime_error {
   public:
    explicit schema_error(const std::string& what) : std::runtime_error(what) {}
};

[[nodiscard]] ordered_json dataset_to_json(const Dataset& dataset);
[[nodiscard]] Dataset dataset_from_json(const ordered_json& j);

[[nodiscard]] ordered_json ground_truth_to_json(const GroundTruthSEM& sem);
[[nodiscard]] GroundTruthSEM ground_truth_from_json(const ordered_json& j);

[[nodiscard]] ordered_json model_to_json(const MechanismParams& params);
[[nodiscard]] MechanismParams model_from_json(const ordered_json& j);

// JSON object or key=value lines; keys match the TrainConfig field names.
[[nodiscard]] TrainConfig config_from_file(const std::filesystem::path& path);
[[nodiscard]] ordered_json config_to_json(const TrainConfig& cfg);

[[nodiscard]] ordered_json metrics_to_json(const MetricsReport& report);

void save_json(const std::filesystem::path& path, const ordered_json& j);
[[nodiscard]] ordered_json load_json(const std::filesystem::path& path);

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochStats>& history);

// Perturbation-style CSV: one numeric column per variable plus a targets
// column holding comma-separated variable names (empty = observational).
// Rows are grouped by target set into experiments.
[[nodiscard]] Dataset ingest_csv(const std::filesystem::path& csv_path,
                                 const std::string& targets_column,
                                 std::vector<std::string>* variable_names = nullptr);

}  // namespace nodags::io
