#include <algorithm>
#include <chrono>
#include <ctime>
#include <future>
#include <set>

#include "sleepeff/errors.hpp"
#include "sleepeff/experiment.hpp"
#include "sleepeff/fingerprint.hpp"

namespace sleepeff::experiment {

namespace fs = std::filesystem;

bool is_cnn(std::string_view id) {
  const auto& ids = nn::architecture_ids();
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

SuiteConfig SuiteConfig::defaults() {
  SuiteConfig c;
  for (const auto& id : nn::architecture_ids()) c.models.push_back({id, nn::TrainConfig{}});
  c.models.push_back({kForestId, nn::TrainConfig{}});
  return c;
}

SuiteConfig SuiteConfig::only(std::span<const std::string> ids) const {
  SuiteConfig out = *this;
  out.models.clear();
  for (const auto& id : ids) {
    auto it = std::find_if(models.begin(), models.end(),
                           [&](const ModelSpec& m) { return m.id == id; });
    if (it == models.end()) throw InvalidConfig("model '" + id + "' is not configured");
    out.models.push_back(*it);
  }
  return out;
}

const ReportRow& ExperimentReport::row(std::string_view model) const {
  for (const auto& r : rows)
    if (r.model == model) return r;
  throw std::out_of_range("no report row for model " + std::string(model));
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t partition_hash(const dataset::SplitResult& split) {
  Fnv1a64 h;
  h.update_pod(static_cast<std::uint64_t>(split.train_indices.size() + split.test_indices.size()));
  for (std::size_t i : split.test_indices) h.update_pod(static_cast<std::uint64_t>(i));
  return h.digest();
}

void validate(const SuiteConfig& config, std::size_t p) {
  if (config.models.empty()) throw InvalidConfig("suite has no models");
  std::set<std::string> seen;
  for (const auto& m : config.models) {
    if (!is_cnn(m.id) && m.id != kForestId) throw InvalidConfig("unknown model id '" + m.id + "'");
    if (!seen.insert(m.id).second) throw InvalidConfig("model '" + m.id + "' listed twice");
    if (is_cnn(m.id)) m.train.validate();
  }
  if (seen.count(kForestId)) config.forest.validate(p);
}

struct Outcome {
  ReportRow row;
  std::vector<nn::EpochMetrics> history;
  nlohmann::json checkpoint;
};

Outcome run_model(const ModelSpec& model, const SuiteConfig& config,
                  const dataset::MergedTable& train, const dataset::MergedTable& test) {
  const std::uint64_t schema_fp = train.schema.fingerprint();
  Outcome out;
  out.row.model = model.id;
  if (model.id == kForestId) {
    const forest::Forest f = forest::fit_forest(train, config.forest);
    out.row.test = metrics(forest::predict_forest(f, test), test.targets());
    out.row.train = metrics(forest::predict_forest(f, train), train.targets());
    out.checkpoint = forest::to_json(f);
    out.checkpoint["schema_fingerprint"] = to_hex(schema_fp);
    return out;
  }
  const nn::ArchitectureSpec spec = nn::build_architecture(model.id, train.schema.input_length());
  nn::TrainResult fit = nn::train(spec, train, model.train);
  out.row.test = metrics(nn::predict(spec, fit.params, test), test.targets());
  out.row.train = MetricPair{fit.history.back().train_mae, fit.history.back().train_mse};
  out.history = std::move(fit.history);
  nn::Checkpoint ck{spec, std::move(fit.params), schema_fp, model.train,
                    {{"train_mae", out.row.train->mae},
                     {"train_mse", out.row.train->mse},
                     {"test_mae", out.row.test.mae},
                     {"test_mse", out.row.test.mse}}};
  out.checkpoint = nn::to_json(ck);
  return out;
}

Outcome run_model_annotated(const ModelSpec& model, const SuiteConfig& config,
                            const dataset::MergedTable& train, const dataset::MergedTable& test) {
  try {
    return run_model(model, config, train, test);
  } catch (const ModelError&) {
    throw;
  } catch (const std::exception& e) {
    throw ModelError(model.id, e.what());
  }
}

}  // namespace

ExperimentReport run_suite(const dataset::MergedTable& table, const SuiteConfig& config,
                           const std::optional<fs::path>& output_dir) {
  if (table.empty()) throw EmptyInput("run_suite: table has no rows");
  validate(config, table.schema.input_length());

  ExperimentReport report;
  RunManifest& m = report.manifest;
  m.started_at = utc_now();
  m.dataset_fingerprint = dataset::dataset_fingerprint(table);
  m.schema_fingerprint = table.schema.fingerprint();
  m.n_rows = table.size();
  m.n_features = table.schema.input_length();
  for (const auto& f : table.schema.features()) m.feature_names.push_back(f.name);
  m.split = config.split;
  m.models = config.models;
  m.forest = config.forest;

  const dataset::SplitResult parts = dataset::split(
      table, config.split.test_fraction, config.split.seed, config.split.participant_level);
  m.partition_hash = partition_hash(parts);
  m.n_train = parts.train.size();
  m.n_test = parts.test.size();
  const dataset::StandardizeResult scaled = dataset::standardize(parts.train, parts.test);

  std::vector<Outcome> outcomes(config.models.size());
  if (config.concurrent) {
    std::vector<std::future<Outcome>> tasks;
    for (const auto& model : config.models)
      tasks.push_back(std::async(std::launch::async, run_model_annotated, std::cref(model),
                                 std::cref(config), std::cref(scaled.train),
                                 std::cref(scaled.applied)));
    // Wait for every task before surfacing the first failure in model order.
    for (auto& t : tasks) t.wait();
    for (std::size_t i = 0; i < tasks.size(); ++i) outcomes[i] = tasks[i].get();
  } else {
    for (std::size_t i = 0; i < config.models.size(); ++i)
      outcomes[i] = run_model_annotated(config.models[i], config, scaled.train, scaled.applied);
  }

  for (auto& o : outcomes) {
    m.train_metrics[o.row.model] = {{"mae", o.row.train->mae}, {"mse", o.row.train->mse}};
    if (!o.history.empty()) report.history[o.row.model] = o.history;
    report.rows.push_back(o.row);
  }
  report.rows.push_back({kBaselineId, baseline_mean(parts.train, parts.test), std::nullopt});
  m.finished_at = utc_now();

  if (output_dir) {
    fs::create_directories(*output_dir / "checkpoints");
    fs::create_directories(*output_dir / "history");
    for (const auto& o : outcomes) {
      write_text(*output_dir / "checkpoints" / (o.row.model + ".json"), o.checkpoint.dump() + "\n");
      if (!o.history.empty())
        write_text(*output_dir / "history" / (o.row.model + ".csv"), history_csv(o.history));
    }
    const nlohmann::json stats{{"mean", scaled.stats.mean}, {"sd", scaled.stats.sd}};
    write_text(*output_dir / "checkpoints" / "feature_stats.json", stats.dump() + "\n");
    write_text(*output_dir / "manifest.json", to_json(m).dump(2) + "\n");
  }
  return report;
}

ExperimentReport rerun_suite(const dataset::MergedTable& table, const RunManifest& manifest) {
  dataset::MergedTable input = table;
  if (input.schema.fingerprint() != manifest.schema_fingerprint && manifest.parent.is_object() &&
      manifest.parent.value("schema_fingerprint", "") == to_hex(input.schema.fingerprint())) {
    // Reduced-feature manifest applied to its parent's table.
    std::vector<std::size_t> indices;
    for (const auto& name : manifest.feature_names) {
      const auto index = input.schema.index_of(name);
      if (!index) throw SchemaMismatch(name, "feature named in manifest is absent");
      indices.push_back(*index);
    }
    input = dataset::select_features(input, indices);
  }
  if (input.schema.fingerprint() != manifest.schema_fingerprint)
    throw SchemaMismatch("schema", "fingerprint " + to_hex(input.schema.fingerprint()) +
                                       " differs from manifest " +
                                       to_hex(manifest.schema_fingerprint));
  const std::uint64_t data_fp = dataset::dataset_fingerprint(input);
  if (data_fp != manifest.dataset_fingerprint)
    throw SchemaMismatch("dataset", "fingerprint " + to_hex(data_fp) + " differs from manifest " +
                                        to_hex(manifest.dataset_fingerprint));
  ExperimentReport report = run_suite(input, suite_config(manifest));
  report.manifest.label = manifest.label;
  report.manifest.parent = manifest.parent;
  return report;
}

ImportanceReport compute_importance(const dataset::MergedTable& table, const SuiteConfig& config,
                                    std::size_t k) {
  if (table.empty()) throw EmptyInput("compute_importance: table has no rows");
  const std::size_t p = table.schema.input_length();
  if (k > p) throw KTooLarge(k, p);
  config.forest.validate(p);
  const dataset::SplitResult parts = dataset::split(
      table, config.split.test_fraction, config.split.seed, config.split.participant_level);
  const dataset::StandardizeResult scaled = dataset::standardize(parts.train, parts.test);
  const forest::Forest f = forest::fit_forest(scaled.train, config.forest);

  ImportanceReport r;
  r.k = k;
  r.importance = forest::feature_importance(f);
  r.top = forest::top_k(r.importance, table.schema, k);
  r.dataset_fingerprint = dataset::dataset_fingerprint(table);
  r.schema_fingerprint = table.schema.fingerprint();
  r.split = config.split;
  r.forest = config.forest;
  return r;
}

std::optional<double> AblationRow::delta() const {
  if (!reduced) return std::nullopt;
  return reduced->mae - full.mae;
}

AblationReport run_reduced_feature(const dataset::MergedTable& table,
                                   const ImportanceReport& importance, std::size_t k,
                                   const SuiteConfig& config, const ExperimentReport& full) {
  const std::size_t p = table.schema.input_length();
  if (k > p) throw KTooLarge(k, p);
  if (k == 0) throw InvalidConfig("k must be positive");
  if (importance.schema_fingerprint != table.schema.fingerprint() ||
      importance.dataset_fingerprint != full.manifest.dataset_fingerprint)
    throw SchemaMismatch("importance", "importance report was computed on different data");

  AblationReport out;
  out.k = k;
  auto ranked = forest::top_k(importance.importance, table.schema, k);
  std::sort(ranked.begin(), ranked.end(),
            [](const auto& a, const auto& b) { return a.index < b.index; });
  out.selected = ranked;
  std::vector<std::size_t> indices;
  for (const auto& r : ranked) indices.push_back(r.index);
  const dataset::MergedTable reduced_table = dataset::select_features(table, indices);
  out.reduced_schema_fingerprint = reduced_table.schema.fingerprint();

  SuiteConfig reduced_config = config;
  reduced_config.models.clear();
  std::map<std::string, std::string> skipped;
  for (const auto& m : config.models) {
    if (is_cnn(m.id)) {
      try {
        nn::build_architecture(m.id, k);
      } catch (const ShapeError& e) {
        skipped[m.id] = "layer stack does not fit " + std::to_string(k) + " inputs";
        continue;
      }
    }
    reduced_config.models.push_back(m);
  }

  out.full = full;
  if (!reduced_config.models.empty()) {
    out.reduced = run_suite(reduced_table, reduced_config);
  } else {
    // Only the baseline remains; it depends on the targets alone.
    const dataset::SplitResult parts = dataset::split(
        reduced_table, config.split.test_fraction, config.split.seed, config.split.participant_level);
    out.reduced.manifest.partition_hash = partition_hash(parts);
    out.reduced.rows.push_back({kBaselineId, baseline_mean(parts.train, parts.test), std::nullopt});
  }
  if (out.reduced.manifest.partition_hash != full.manifest.partition_hash)
    throw Error("reduced run saw a different train/test partition than the full run");
  out.reduced.manifest.label = "reduced";
  nlohmann::json selected = nlohmann::json::array();
  for (const auto& r : out.selected) selected.push_back(r.name);
  out.reduced.manifest.parent = {{"dataset_fingerprint", to_hex(full.manifest.dataset_fingerprint)},
                                 {"schema_fingerprint", to_hex(full.manifest.schema_fingerprint)},
                                 {"partition_hash", to_hex(full.manifest.partition_hash)},
                                 {"k", k},
                                 {"selected", selected}};

  for (const auto& row : full.rows) {
    AblationRow a{row.model, row.test, std::nullopt, ""};
    if (auto it = skipped.find(row.model); it != skipped.end()) {
      a.note = it->second;
    } else {
      auto r = std::find_if(out.reduced.rows.begin(), out.reduced.rows.end(),
                            [&](const ReportRow& x) { return x.model == row.model; });
      if (r != out.reduced.rows.end()) a.reduced = r->test;
      else a.note = "not in reduced run";
    }
    out.rows.push_back(std::move(a));
  }
  return out;
}

}  // namespace sleepeff::experiment
