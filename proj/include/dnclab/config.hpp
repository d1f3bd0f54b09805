#pragma once

// Strict JSON (de)serialization of model and experiment configurations.
// Unknown keys and wrongly typed values are rejected with ConfigError.

#include "dnclab/dnc.hpp"
#include "dnclab/tasks.hpp"
#include "dnclab/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dnclab {

using Json = nlohmann::json;

struct ExperimentConfig {
  std::string name;
  TaskKind task = TaskKind::Copy;
  DncConfig dnc;
  TrainConfig training;
  std::vector<std::uint64_t> trial_seeds{0};
  std::string output_dir = "runs";
};

Json to_json(const DncConfig& cfg);
DncConfig dnc_config_from_json(const Json& j);

Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j);

Json to_json(const ExperimentConfig& cfg);
/// `fallback_name` is used when the document has no "name".
ExperimentConfig experiment_config_from_json(const Json& j, const std::string& fallback_name = "experiment");
/// Reads a file; the experiment name defaults to the file stem.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace dnclab
