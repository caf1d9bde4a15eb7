#include "sleepeff/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "sleepeff/errors.hpp"
#include "sleepeff/fingerprint.hpp"

namespace sleepeff::synth {

using dataset::Kind;
using dataset::Source;

void SynthConfig::validate() const {
  if (n_participants == 0) throw InvalidConfig("n_participants must be positive");
  if (days_per_participant == 0) throw InvalidConfig("days_per_participant must be positive");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw InvalidConfig("noise_sd must be >= 0");
  if (!(base_efficiency > 0.0 && base_efficiency < 1.0))
    throw InvalidConfig("base_efficiency must lie in (0, 1)");
  if (!(participant_share >= 0.0 && participant_share <= 1.0))
    throw InvalidConfig("participant_share must lie in [0, 1]");
  if (!start_date.ok()) throw InvalidConfig("start_date is not a valid date");
  std::set<std::size_t> seen;
  for (const auto& p : planted) {
    if (p.feature_index >= schema.input_length())
      throw InvalidConfig("planted feature index " + std::to_string(p.feature_index) +
                          " out of range");
    if (!seen.insert(p.feature_index).second)
      throw InvalidConfig("planted feature index " + std::to_string(p.feature_index) +
                          " listed twice");
    if (!std::isfinite(p.coefficient)) throw InvalidConfig("planted coefficient is not finite");
  }
}

SynthConfig default_config() {
  SynthConfig cfg;
  const std::pair<const char*, double> effects[] = {{"meanrate", -0.006},
                                                    {"steps", 0.008},
                                                    {"lightlyactiveminutes", 0.005},
                                                    {"peakmins", -0.004},
                                                    {"CESDOverall_1", -0.005}};
  for (const auto& [name, coef] : effects) cfg.planted.push_back({*cfg.schema.index_of(name), coef});
  return cfg;
}

namespace {

FeatureTruth draw_feature_truth(const dataset::FeatureDescriptor& f, double participant_share,
                                std::mt19937_64& rng) {
  FeatureTruth t;
  if (f.kind == Kind::categorical_ordinal) {
    // Codes are drawn uniformly from the encoding.
    double sum = 0.0, sq = 0.0;
    for (const auto& e : f.encoding) {
      sum += e.code;
      sq += static_cast<double>(e.code) * e.code;
    }
    const double n = static_cast<double>(f.encoding.size());
    t.mean = sum / n;
    t.sd = std::sqrt(std::max(0.0, sq / n - t.mean * t.mean));
    t.participant_sd = t.sd;
    return t;
  }
  std::uniform_real_distribution<double> mean_dist(f.source == Source::wearable_activity ? 10.0 : 1.0,
                                                   f.source == Source::wearable_activity ? 1000.0 : 100.0);
  std::uniform_real_distribution<double> rel_sd(0.05, 0.3);
  t.mean = mean_dist(rng);
  t.sd = t.mean * rel_sd(rng);
  t.participant_sd = f.source == Source::survey ? t.sd : t.sd * std::sqrt(participant_share);
  return t;
}

}  // namespace

std::pair<dataset::MergedTable, GroundTruth> generate(const SynthConfig& config) {
  config.validate();
  const auto& schema = config.schema;
  const std::size_t p = schema.input_length();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  GroundTruth truth;
  truth.planted = config.planted;
  truth.base_efficiency = config.base_efficiency;
  truth.noise_sd = config.noise_sd;
  truth.participant_share = config.participant_share;
  truth.seed = config.seed;
  truth.schema_fingerprint = schema.fingerprint();
  truth.features.reserve(p);
  for (const auto& f : schema.features())
    truth.features.push_back(draw_feature_truth(f, config.participant_share, rng));

  const double within = std::sqrt(1.0 - config.participant_share);
  const double between = std::sqrt(config.participant_share);

  dataset::MergedTable table;
  table.schema = schema;
  table.rows.reserve(config.n_participants * config.days_per_participant);

  std::vector<double> participant_z(p);
  std::vector<double> features(p);
  for (std::size_t pi = 0; pi < config.n_participants; ++pi) {
    char id[32];
    std::snprintf(id, sizeof id, "P%04zu", pi + 1);

    // Participant level: survey values are fixed, activity features get an offset.
    for (std::size_t j = 0; j < p; ++j) {
      const auto& f = schema.at(j);
      if (f.kind == Kind::categorical_ordinal) {
        std::uniform_int_distribution<std::size_t> pick(0, f.encoding.size() - 1);
        features[j] = f.encoding[pick(rng)].code;
      } else {
        participant_z[j] = normal(rng);
        if (f.source == Source::survey)
          features[j] = truth.features[j].mean + truth.features[j].sd * participant_z[j];
      }
    }

    for (std::size_t day = 0; day < config.days_per_participant; ++day) {
      for (std::size_t j = 0; j < p; ++j) {
        const auto& f = schema.at(j);
        if (f.source != Source::wearable_activity || f.kind != Kind::numeric) continue;
        const double z = between * participant_z[j] + within * normal(rng);
        features[j] = truth.features[j].mean + truth.features[j].sd * z;
      }
      double target = config.base_efficiency;
      for (const auto& eff : config.planted) {
        const FeatureTruth& t = truth.features[eff.feature_index];
        const double standardized = t.sd > 0.0 ? (features[eff.feature_index] - t.mean) / t.sd : 0.0;
        target += eff.coefficient * standardized;
      }
      if (config.noise_sd > 0.0) target += config.noise_sd * normal(rng);
      if (target < 0.0 || target > 1.0) ++truth.clipped_rows;
      target = std::clamp(target, 0.0, 1.0);

      dataset::MergedRow row;
      row.participant_id = id;
      row.date = std::chrono::sys_days(config.start_date) + std::chrono::days(day);
      row.features = features;
      row.target = target;
      table.rows.push_back(std::move(row));
    }
  }
  truth.rows = table.rows.size();
  return {std::move(table), std::move(truth)};
}

nlohmann::json GroundTruth::to_json(const dataset::FeatureSchema& schema) const {
  nlohmann::json planted_json = nlohmann::json::array();
  for (const auto& e : planted)
    planted_json.push_back({{"feature_index", e.feature_index},
                            {"feature_name", schema.at(e.feature_index).name},
                            {"coefficient", e.coefficient}});
  nlohmann::json feats = nlohmann::json::array();
  for (std::size_t j = 0; j < features.size(); ++j)
    feats.push_back({{"name", schema.at(j).name},
                     {"mean", features[j].mean},
                     {"sd", features[j].sd},
                     {"participant_sd", features[j].participant_sd}});
  return {{"seed", seed},
          {"base_efficiency", base_efficiency},
          {"noise_sd", noise_sd},
          {"participant_share", participant_share},
          {"rows", rows},
          {"clipped_rows", clipped_rows},
          {"clip_rate", clip_rate()},
          {"schema_fingerprint", to_hex(schema_fingerprint)},
          {"planted", std::move(planted_json)},
          {"features", std::move(feats)}};
}

nlohmann::json config_to_json(const SynthConfig& config) {
  nlohmann::json planted = nlohmann::json::array();
  for (const auto& e : config.planted)
    planted.push_back({{"feature_index", e.feature_index}, {"coefficient", e.coefficient}});
  return {{"n_participants", config.n_participants},
          {"days_per_participant", config.days_per_participant},
          {"planted", std::move(planted)},
          {"noise_sd", config.noise_sd},
          {"base_efficiency", config.base_efficiency},
          {"participant_share", config.participant_share},
          {"start_date", dataset::format_date(config.start_date)},
          {"seed", config.seed}};
}

SynthConfig config_from_json(const nlohmann::json& doc, dataset::FeatureSchema schema) {
  if (!doc.is_object()) throw InvalidConfig("synth config must be a JSON object");
  SynthConfig cfg;
  cfg.schema = std::move(schema);
  bool planted_given = false;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "n_participants") {
        cfg.n_participants = value.get<std::size_t>();
      } else if (key == "days_per_participant") {
        cfg.days_per_participant = value.get<std::size_t>();
      } else if (key == "noise_sd") {
        cfg.noise_sd = value.get<double>();
      } else if (key == "base_efficiency") {
        cfg.base_efficiency = value.get<double>();
      } else if (key == "participant_share") {
        cfg.participant_share = value.get<double>();
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else if (key == "start_date") {
        auto d = dataset::parse_date(value.get<std::string>());
        if (!d) throw InvalidConfig("start_date must be YYYY-MM-DD");
        cfg.start_date = *d;
      } else if (key == "planted") {
        planted_given = true;
        for (const auto& item : value) {
          PlantedEffect e;
          if (item.contains("feature_name")) {
            auto idx = cfg.schema.index_of(item.at("feature_name").get<std::string>());
            if (!idx) throw InvalidConfig("planted feature name not in schema");
            e.feature_index = *idx;
          } else {
            e.feature_index = item.at("feature_index").get<std::size_t>();
          }
          e.coefficient = item.at("coefficient").get<double>();
          for (const auto& [k, _] : item.items())
            if (k != "feature_index" && k != "feature_name" && k != "coefficient")
              throw InvalidConfig("unknown key '" + k + "' in planted effect");
          cfg.planted.push_back(e);
        }
      } else {
        throw InvalidConfig("unknown key '" + key + "' in synth config");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("malformed synth config: ") + e.what());
  }
  if (!planted_given && cfg.schema == dataset::nethealth_schema())
    cfg.planted = default_config().planted;
  cfg.validate();
  return cfg;
}

}  // namespace sleepeff::synth
