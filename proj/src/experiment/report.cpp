#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sleepeff/errors.hpp"
#include "sleepeff/experiment.hpp"
#include "sleepeff/fingerprint.hpp"

namespace sleepeff::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::uint64_t from_hex(const json& j) { return std::stoull(j.get<std::string>(), nullptr, 16); }

json metric_json(const MetricPair& m) { return {{"mae", m.mae}, {"mse", m.mse}}; }

MetricPair metric_from(const json& j) { return {j.at("mae").get<double>(), j.at("mse").get<double>()}; }

json split_json(const SplitConfig& s) {
  return {{"fraction", s.test_fraction}, {"seed", s.seed}, {"participant_level", s.participant_level}};
}

SplitConfig split_from(const json& j) {
  return {j.at("fraction").get<double>(), j.at("seed").get<std::uint64_t>(),
          j.at("participant_level").get<bool>()};
}

json ranked_json(const std::vector<forest::RankedFeature>& features) {
  json out = json::array();
  for (std::size_t i = 0; i < features.size(); ++i)
    out.push_back({{"rank", i + 1},
                   {"name", features[i].name},
                   {"index", features[i].index},
                   {"importance", features[i].importance}});
  return out;
}

}  // namespace

json to_json(const RunManifest& m) {
  json models = json::array();
  for (const auto& s : m.models) {
    json item{{"id", s.id}};
    if (is_cnn(s.id)) item["train"] = nn::to_json(s.train);
    models.push_back(std::move(item));
  }
  return {{"label", m.label},
          {"dataset_fingerprint", to_hex(m.dataset_fingerprint)},
          {"schema_fingerprint", to_hex(m.schema_fingerprint)},
          {"n_rows", m.n_rows},
          {"n_features", m.n_features},
          {"split", split_json(m.split)},
          {"partition_hash", to_hex(m.partition_hash)},
          {"n_train", m.n_train},
          {"n_test", m.n_test},
          {"features", m.feature_names},
          {"models", std::move(models)},
          {"forest", forest::to_json(m.forest)},
          {"train_metrics", m.train_metrics},
          {"parent", m.parent},
          {"started_at", m.started_at},
          {"finished_at", m.finished_at}};
}

RunManifest manifest_from_json(const json& doc) {
  try {
    RunManifest m;
    m.label = doc.at("label").get<std::string>();
    m.dataset_fingerprint = from_hex(doc.at("dataset_fingerprint"));
    m.schema_fingerprint = from_hex(doc.at("schema_fingerprint"));
    m.n_rows = doc.at("n_rows").get<std::size_t>();
    m.n_features = doc.at("n_features").get<std::size_t>();
    m.split = split_from(doc.at("split"));
    m.partition_hash = from_hex(doc.at("partition_hash"));
    m.n_train = doc.at("n_train").get<std::size_t>();
    m.n_test = doc.at("n_test").get<std::size_t>();
    m.feature_names = doc.at("features").get<std::vector<std::string>>();
    for (const auto& item : doc.at("models")) {
      ModelSpec s{item.at("id").get<std::string>(), nn::TrainConfig{}};
      if (item.contains("train")) s.train = nn::train_config_from_json(item.at("train"));
      m.models.push_back(std::move(s));
    }
    m.forest = forest::forest_config_from_json(doc.at("forest"));
    m.train_metrics = doc.value("train_metrics", json::object());
    m.parent = doc.value("parent", json(nullptr));
    m.started_at = doc.value("started_at", "");
    m.finished_at = doc.value("finished_at", "");
    return m;
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("malformed run manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw InvalidConfig(std::string("malformed fingerprint in run manifest: ") + e.what());
  }
}

SuiteConfig suite_config(const RunManifest& manifest) {
  SuiteConfig c;
  c.split = manifest.split;
  c.models = manifest.models;
  c.forest = manifest.forest;
  return c;
}

json to_json(const ExperimentReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    json item{{"model", r.model}, {"test", metric_json(r.test)}};
    if (r.train) item["train"] = metric_json(*r.train);
    rows.push_back(std::move(item));
  }
  json history = json::object();
  for (const auto& [id, h] : report.history) {
    json epochs = json::array();
    for (const auto& e : h)
      epochs.push_back({{"epoch", e.epoch}, {"train_mae", e.train_mae}, {"train_mse", e.train_mse}});
    history[id] = std::move(epochs);
  }
  return {{"rows", std::move(rows)}, {"manifest", to_json(report.manifest)}, {"history", history}};
}

ExperimentReport report_from_json(const json& doc) {
  try {
    ExperimentReport r;
    for (const auto& item : doc.at("rows")) {
      ReportRow row{item.at("model").get<std::string>(), metric_from(item.at("test")), std::nullopt};
      if (item.contains("train")) row.train = metric_from(item.at("train"));
      r.rows.push_back(std::move(row));
    }
    r.manifest = manifest_from_json(doc.at("manifest"));
    for (const auto& [id, epochs] : doc.at("history").items())
      for (const auto& e : epochs)
        r.history[id].push_back({e.at("epoch").get<std::size_t>(), e.at("train_mae").get<double>(),
                                 e.at("train_mse").get<double>()});
    return r;
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("malformed report: ") + e.what());
  }
}

json to_json(const ImportanceReport& r) {
  return {{"k", r.k},
          {"features", ranked_json(r.top)},
          {"importance", r.importance},
          {"dataset_fingerprint", to_hex(r.dataset_fingerprint)},
          {"schema_fingerprint", to_hex(r.schema_fingerprint)},
          {"split", split_json(r.split)},
          {"forest", forest::to_json(r.forest)}};
}

std::vector<std::string> validate_importance_json(const json& doc) {
  std::vector<std::string> problems;
  auto fail = [&](std::string what) { problems.push_back(std::move(what)); };
  if (!doc.is_object()) return {"document is not an object"};
  for (const char* key : {"dataset_fingerprint", "schema_fingerprint"}) {
    if (!doc.contains(key) || !doc[key].is_string() || doc[key].get<std::string>().size() != 16 ||
        doc[key].get<std::string>().find_first_not_of("0123456789abcdef") != std::string::npos)
      fail(std::string(key) + " must be 16 lowercase hex digits");
  }
  if (!doc.contains("k") || !doc["k"].is_number_unsigned() || doc["k"].get<std::size_t>() == 0)
    fail("k must be a positive integer");
  if (!doc.contains("importance") || !doc["importance"].is_array()) {
    fail("importance must be an array");
  } else {
    double sum = 0.0;
    for (const auto& v : doc["importance"]) {
      if (!v.is_number() || v.get<double>() < 0.0) {
        fail("importance entries must be non-negative numbers");
        break;
      }
      sum += v.get<double>();
    }
    if (sum != 0.0 && std::abs(sum - 1.0) > 1e-9) fail("importance does not sum to 1");
  }
  if (!doc.contains("features") || !doc["features"].is_array()) {
    fail("features must be an array");
    return problems;
  }
  const auto& features = doc["features"];
  if (doc.contains("k") && doc["k"].is_number_unsigned() && features.size() != doc["k"].get<std::size_t>())
    fail("features must hold exactly k entries");
  double previous = INFINITY;
  std::size_t previous_index = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    if (!f.is_object() || !f.contains("rank") || !f.contains("name") || !f.contains("index") ||
        !f.contains("importance") || !f["name"].is_string() || !f["index"].is_number_unsigned() ||
        !f["importance"].is_number() || !f["rank"].is_number_unsigned()) {
      fail("feature entry " + std::to_string(i) + " lacks rank/name/index/importance");
      continue;
    }
    if (f["rank"].get<std::size_t>() != i + 1) fail("feature ranks must run 1..k");
    const double imp = f["importance"].get<double>();
    const std::size_t idx = f["index"].get<std::size_t>();
    if (imp > previous || (imp == previous && idx < previous_index))
      fail("features must be sorted by importance, then index");
    if (doc.contains("importance") && doc["importance"].is_array() &&
        (idx >= doc["importance"].size() || doc["importance"][idx] != f["importance"]))
      fail("feature entry " + std::to_string(i) + " disagrees with the importance vector");
    previous = imp;
    previous_index = idx;
  }
  return problems;
}

json to_json(const AblationReport& r) {
  json rows = json::array();
  for (const auto& a : r.rows) {
    json item{{"model", a.model}, {"full", metric_json(a.full)}};
    item["reduced"] = a.reduced ? metric_json(*a.reduced) : json(nullptr);
    item["delta"] = a.delta() ? json(*a.delta()) : json(nullptr);
    if (!a.note.empty()) item["note"] = a.note;
    rows.push_back(std::move(item));
  }
  return {{"k", r.k},
          {"selected", ranked_json(r.selected)},
          {"reduced_schema_fingerprint", to_hex(r.reduced_schema_fingerprint)},
          {"rows", std::move(rows)},
          {"full_manifest", to_json(r.full.manifest)},
          {"reduced_manifest", to_json(r.reduced.manifest)}};
}

std::string format_table(const ExperimentReport& report) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-14s %10s %10s\n", "model", "mae", "mse");
  out += buf;
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%-14s %10s %10s\n", r.model.c_str(), fixed6(r.test.mae).c_str(),
                  fixed6(r.test.mse).c_str());
    out += buf;
  }
  return out;
}

std::string report_csv(const ExperimentReport& report) {
  std::string out = "model,mae,mse\n";
  for (const auto& r : report.rows)
    out += r.model + "," + fixed6(r.test.mae) + "," + fixed6(r.test.mse) + "\n";
  return out;
}

std::string history_csv(const std::vector<nn::EpochMetrics>& history) {
  std::string out = "epoch,train_mae,train_mse\n";
  for (const auto& e : history)
    out += std::to_string(e.epoch) + "," + fixed6(e.train_mae) + "," + fixed6(e.train_mse) + "\n";
  return out;
}

std::string ablation_csv(const AblationReport& report) {
  std::string out = "model,mae_full,mae_reduced,delta\n";
  for (const auto& a : report.rows) {
    out += a.model + "," + fixed6(a.full.mae) + ",";
    out += a.reduced ? fixed6(a.reduced->mae) : "NA";
    out += ",";
    out += a.delta() ? fixed6(*a.delta()) : "NA";
    out += "\n";
  }
  return out;
}

std::string importance_csv(const ImportanceReport& report) {
  std::string out = "rank,feature,index,importance\n";
  for (std::size_t i = 0; i < report.top.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9f", report.top[i].importance);
    out += std::to_string(i + 1) + "," + report.top[i].name + "," +
           std::to_string(report.top[i].index) + "," + buf + "\n";
  }
  return out;
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidConfig(path.string() + " is not valid JSON: " + e.what());
  }
}

void emit_report(const ExperimentReport& report, const fs::path& dir) {
  write_text(dir / "report.csv", report_csv(report));
  write_text(dir / "report.json", to_json(report).dump(2) + "\n");
  for (const auto& [id, h] : report.history) write_text(dir / ("history_" + id + ".csv"), history_csv(h));
}

void emit_ablation(const AblationReport& report, const fs::path& dir) {
  write_text(dir / "ablation.csv", ablation_csv(report));
  write_text(dir / "ablation.json", to_json(report).dump(2) + "\n");
  write_text(dir / "reduced_report.csv", report_csv(report.reduced));
}

void emit_importance(const ImportanceReport& report, const fs::path& dir) {
  write_text(dir / "importance.csv", importance_csv(report));
  write_text(dir / "importance.json", to_json(report).dump(2) + "\n");
}

}  // namespace sleepeff::experiment
