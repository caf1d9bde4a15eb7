#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sleepeff/dataset.hpp"
#include "sleepeff/experiment.hpp"
#include "sleepeff/synthdata.hpp"

namespace sleepeff::cli {

// Contents of a run config file after defaults, relative paths and command
// line overrides have been resolved.
//
// {
//   "schema": "schema.json",                      optional; built-in preset otherwise
//   "data": {"merged": "data.csv"}                 or {"activity", "sleep", "survey"}
//   "synth": {...},                                used when "data" is absent
//   "split": {"fraction": 0.2, "seed": 42, "participant_level": false},
//   "train": {...},                                defaults for every CNN
//   "models": ["A2", {"id": "A3", "train": {...}}, "RF"],
//   "forest": {"n_trees": 10, ...},
//   "k": 20,
//   "concurrent": true,
//   "output_dir": "out"
// }
struct RunConfig {
  std::optional<std::filesystem::path> schema_path;
  dataset::FeatureSchema schema = dataset::nethealth_schema();
  std::optional<std::filesystem::path> merged;
  std::optional<std::filesystem::path> activity, sleep, survey;
  std::optional<synth::SynthConfig> synth;
  experiment::SuiteConfig suite = experiment::SuiteConfig::defaults();
  nlohmann::json train_defaults = nlohmann::json::object();
  std::size_t k = 20;
  std::filesystem::path output_dir = "out";

  bool has_raw_data() const { return activity.has_value(); }
  // Document that parses back to this configuration; paths are absolute.
  nlohmann::json resolved() const;
};

// Relative paths resolve against base_dir. Throws InvalidConfig on unknown
// keys or malformed values.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

struct Overrides {
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::string>> models;
  std::optional<std::size_t> k;
};

// --seed replaces the split seed, and the synth seed when a synth section is
// present. --models keeps the listed models in the given order.
void apply_overrides(RunConfig& config, const Overrides& overrides);

std::vector<std::string> split_list(const std::string& text);

// Merged table from whichever data source the config names.
dataset::MergedTable load_data(const RunConfig& config);

}  // namespace sleepeff::cli
