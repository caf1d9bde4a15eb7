#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sleepeff/dataset.hpp"

namespace sleepeff::synth {

struct PlantedEffect {
  std::size_t feature_index = 0;
  double coefficient = 0.0;  // effect per standard deviation of the feature

  bool operator==(const PlantedEffect&) const = default;
};

struct SynthConfig {
  std::size_t n_participants = 200;
  std::size_t days_per_participant = 50;
  dataset::FeatureSchema schema = dataset::nethealth_schema();
  std::vector<PlantedEffect> planted;
  double noise_sd = 0.005;
  double base_efficiency = 0.94;
  // Share of an activity feature's variance explained by a per-participant offset.
  double participant_share = 0.3;
  dataset::Date start_date{std::chrono::year{2015}, std::chrono::August, std::chrono::day{16}};
  std::uint64_t seed = 42;

  // Throws InvalidConfig.
  void validate() const;
};

// 200 participants x 50 days on the 93-feature preset with five planted
// effects (four activity measures and one depression score).
SynthConfig default_config();

struct FeatureTruth {
  double mean = 0.0;
  double sd = 1.0;
  double participant_sd = 0.0;  // sd of the per-participant offset, in feature units
};

struct GroundTruth {
  std::vector<PlantedEffect> planted;
  std::vector<FeatureTruth> features;
  double base_efficiency = 0.0;
  double noise_sd = 0.0;
  double participant_share = 0.0;
  std::uint64_t seed = 0;
  std::size_t rows = 0;
  std::size_t clipped_rows = 0;
  std::uint64_t schema_fingerprint = 0;

  double clip_rate() const noexcept {
    return rows == 0 ? 0.0 : static_cast<double>(clipped_rows) / static_cast<double>(rows);
  }
  nlohmann::json to_json(const dataset::FeatureSchema& schema) const;
};

// target = clip(base + sum_j coef_j * (x_j - mean_j) / sd_j + N(0, noise_sd), 0, 1).
// Survey features are constant within a participant; activity features vary
// per day around a participant-level offset. Bit-deterministic per seed.
std::pair<dataset::MergedTable, GroundTruth> generate(const SynthConfig& config);

nlohmann::json config_to_json(const SynthConfig& config);
// Reads the keys written by config_to_json; unknown keys are rejected. The
// schema is not part of the document and is passed in.
SynthConfig config_from_json(const nlohmann::json& doc, dataset::FeatureSchema schema);

}  // namespace sleepeff::synth
