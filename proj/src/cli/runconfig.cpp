#include "sleepeff/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "sleepeff/errors.hpp"

namespace sleepeff::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const json& value, const fs::path& base_dir) {
  if (!value.is_string()) throw InvalidConfig("paths must be strings");
  fs::path p = value.get<std::string>();
  if (p.empty()) throw InvalidConfig("empty path in run config");
  return fs::absolute(p.is_absolute() ? p : base_dir / p).lexically_normal();
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw InvalidConfig(where + " must be an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw InvalidConfig("unknown key '" + key + "' in " + where);
}

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  check_keys(doc,
             {"schema", "data", "synth", "split", "train", "models", "forest", "k", "concurrent",
              "output_dir"},
             "run config");
  RunConfig c;
  try {
    if (doc.contains("schema") && !doc["schema"].is_null()) {
      c.schema_path = resolve(doc["schema"], base_dir);
      c.schema = dataset::FeatureSchema::load(*c.schema_path);
    }
    if (doc.contains("data")) {
      const json& data = doc["data"];
      check_keys(data, {"merged", "activity", "sleep", "survey"}, "data");
      if (data.contains("merged")) {
        if (data.size() != 1) throw InvalidConfig("data.merged excludes the raw table paths");
        c.merged = resolve(data["merged"], base_dir);
      } else {
        for (const char* key : {"activity", "sleep", "survey"})
          if (!data.contains(key)) throw InvalidConfig(std::string("data.") + key + " is missing");
        c.activity = resolve(data["activity"], base_dir);
        c.sleep = resolve(data["sleep"], base_dir);
        c.survey = resolve(data["survey"], base_dir);
      }
    }
    if (doc.contains("synth")) c.synth = synth::config_from_json(doc["synth"], c.schema);

    if (doc.contains("split")) {
      const json& s = doc["split"];
      check_keys(s, {"fraction", "seed", "participant_level"}, "split");
      c.suite.split.test_fraction = s.value("fraction", c.suite.split.test_fraction);
      c.suite.split.seed = s.value("seed", c.suite.split.seed);
      c.suite.split.participant_level = s.value("participant_level", false);
      const double f = c.suite.split.test_fraction;
      if (!(f > 0.0 && f < 1.0)) throw InvalidConfig("split.fraction must lie in (0, 1)");
    }

    if (doc.contains("train")) {
      c.train_defaults = doc["train"];
      nn::train_config_from_json(c.train_defaults);  // validate
    }
    const nn::TrainConfig base = nn::train_config_from_json(c.train_defaults);
    if (doc.contains("models")) {
      if (!doc["models"].is_array() || doc["models"].empty())
        throw InvalidConfig("models must be a non-empty array");
      c.suite.models.clear();
      for (const auto& item : doc["models"]) {
        experiment::ModelSpec m;
        if (item.is_string()) {
          m = {item.get<std::string>(), base};
        } else {
          check_keys(item, {"id", "train"}, "model entry");
          m.id = item.at("id").get<std::string>();
          m.train = nn::train_config_from_json(item.value("train", json::object()), base);
        }
        if (!experiment::is_cnn(m.id) && m.id != experiment::kForestId)
          throw InvalidConfig("unknown model id '" + m.id + "'");
        c.suite.models.push_back(std::move(m));
      }
    } else {
      for (auto& m : c.suite.models) m.train = base;
    }
    if (doc.contains("forest")) c.suite.forest = forest::forest_config_from_json(doc["forest"]);
    if (doc.contains("k")) c.k = doc["k"].get<std::size_t>();
    if (c.k == 0) throw InvalidConfig("k must be positive");
    if (doc.contains("concurrent")) c.suite.concurrent = doc["concurrent"].get<bool>();
    c.output_dir = doc.contains("output_dir") ? resolve(doc["output_dir"], base_dir)
                                              : fs::absolute(base_dir / "out").lexically_normal();
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("malformed run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidConfig(path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, fs::absolute(path).parent_path());
}

json RunConfig::resolved() const {
  json doc;
  if (schema_path) doc["schema"] = schema_path->string();
  if (merged) {
    doc["data"] = {{"merged", merged->string()}};
  } else if (activity) {
    doc["data"] = {{"activity", activity->string()},
                   {"sleep", sleep->string()},
                   {"survey", survey->string()}};
  }
  if (synth) doc["synth"] = synth::config_to_json(*synth);
  doc["split"] = {{"fraction", suite.split.test_fraction},
                  {"seed", suite.split.seed},
                  {"participant_level", suite.split.participant_level}};
  json models = json::array();
  for (const auto& m : suite.models) {
    json item{{"id", m.id}};
    if (experiment::is_cnn(m.id)) item["train"] = nn::to_json(m.train);
    models.push_back(std::move(item));
  }
  doc["models"] = std::move(models);
  json f = forest::to_json(suite.forest);
  doc["forest"] = std::move(f);
  doc["k"] = k;
  doc["concurrent"] = suite.concurrent;
  doc["output_dir"] = output_dir.string();
  return doc;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void apply_overrides(RunConfig& config, const Overrides& o) {
  if (o.out) config.output_dir = fs::absolute(*o.out).lexically_normal();
  if (o.seed) {
    config.suite.split.seed = *o.seed;
    if (config.synth) config.synth->seed = *o.seed;
  }
  if (o.k) {
    if (*o.k == 0) throw InvalidConfig("--k must be positive");
    config.k = *o.k;
  }
  if (o.models) {
    if (o.models->empty()) throw InvalidConfig("--models needs at least one id");
    // Ids absent from the config get the default train settings.
    std::vector<experiment::ModelSpec> chosen;
    const nn::TrainConfig base = nn::train_config_from_json(config.train_defaults);
    for (const auto& id : *o.models) {
      if (!experiment::is_cnn(id) && id != experiment::kForestId)
        throw InvalidConfig("unknown model id '" + id + "' in --models");
      auto it = std::find_if(config.suite.models.begin(), config.suite.models.end(),
                             [&](const auto& m) { return m.id == id; });
      chosen.push_back(it != config.suite.models.end() ? *it : experiment::ModelSpec{id, base});
    }
    config.suite.models = std::move(chosen);
  }
}

dataset::MergedTable load_data(const RunConfig& config) {
  if (config.merged) return dataset::load_merged_csv(*config.merged, config.schema);
  if (config.activity)
    return dataset::preprocess(*config.activity, *config.sleep, *config.survey, config.schema).table;
  if (config.synth) return synth::generate(*config.synth).first;
  throw InvalidConfig("run config names no data source (data or synth)");
}

}  // namespace sleepeff::cli
