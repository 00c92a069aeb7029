#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "wgen/model.hpp"
#include "wgen/tasks.hpp"
#include "wgen/training.hpp"

namespace wgen {

// Everything one `train` run needs. Read from a flat "key = value" file.
struct ExperimentConfig {
  TaskSpec task;
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path data_dir;  // empty: generate from `task`
  std::filesystem::path out_dir = "runs/default";
  bool deterministic = true;  // single thread, wall-clock kept out of results.jsonl

  // Fills derived fields (data seed, shared vocab size) and validates.
  void finalize();
  // Every key with its resolved value, in documented order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string to_text() const;
};

// Documented key list, in the order to_text() writes them.
const std::vector<std::string>& config_keys();

// Sets one key; unknown keys and malformed values are ConfigErrors.
void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value);

// Parses "key = value" lines. '#' starts a comment. Duplicate keys are errors.
ExperimentConfig parse_config(std::string_view text, std::string_view origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

// Applies WGEN_SEED from the environment when set.
void apply_env_overrides(ExperimentConfig& config);

}  // namespace wgen
