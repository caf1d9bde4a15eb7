#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sleepeff/dataset.hpp"
#include "sleepeff/forest.hpp"
#include "sleepeff/neuralnet.hpp"

namespace sleepeff::experiment {

inline constexpr const char* kForestId = "RF";
inline constexpr const char* kBaselineId = "baseline-mean";

// ---------------------------------------------------------------------------
// Metrics

struct MetricPair {
  double mae = 0.0;
  double mse = 0.0;
};

double mae(std::span<const double> predictions, std::span<const double> targets);
double mse(std::span<const double> predictions, std::span<const double> targets);
MetricPair metrics(std::span<const double> predictions, std::span<const double> targets);

// Predicts the training-target mean for every test row.
MetricPair baseline_mean(const dataset::MergedTable& train, const dataset::MergedTable& test);

// ---------------------------------------------------------------------------
// Suite configuration

struct SplitConfig {
  double test_fraction = 0.2;
  std::uint64_t seed = 42;
  bool participant_level = false;
};

struct ModelSpec {
  std::string id;  // A1..A6 or RF
  nn::TrainConfig train;  // ignored for RF
};

struct SuiteConfig {
  SplitConfig split;
  std::vector<ModelSpec> models;  // default: A1..A6 then RF
  forest::ForestConfig forest;
  bool concurrent = true;  // train models on separate threads

  static SuiteConfig defaults();
  // Keeps only the listed ids, in the order given. Unknown ids throw
  // InvalidConfig.
  SuiteConfig only(std::span<const std::string> ids) const;
};

bool is_cnn(std::string_view id);

// ---------------------------------------------------------------------------
// Reports

struct RunManifest {
  std::string label = "suite";
  std::uint64_t dataset_fingerprint = 0;
  std::uint64_t schema_fingerprint = 0;
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  SplitConfig split;
  std::uint64_t partition_hash = 0;  // over the ordered test row indices
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<std::string> feature_names;  // input order of the models
  std::vector<ModelSpec> models;
  forest::ForestConfig forest;
  nlohmann::json train_metrics = nlohmann::json::object();  // per model, on the train split
  nlohmann::json parent = nullptr;  // set on reduced-feature runs
  std::string started_at;
  std::string finished_at;
};

nlohmann::json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& doc);
// Configuration that re-runs the manifest's suite.
SuiteConfig suite_config(const RunManifest& manifest);

struct ReportRow {
  std::string model;
  MetricPair test;
  std::optional<MetricPair> train;  // absent for the baseline
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  RunManifest manifest;
  std::map<std::string, std::vector<nn::EpochMetrics>> history;  // CNNs only

  const ReportRow& row(std::string_view model) const;  // throws std::out_of_range
};

nlohmann::json to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Runs

// Splits once, standardizes features on train statistics, trains every
// configured model on the same partition and scores it on the test rows. The
// baseline row is always added last. When output_dir is set, writes
// manifest.json, checkpoints/<id>.json and history/<id>.csv there.
ExperimentReport run_suite(const dataset::MergedTable& table, const SuiteConfig& config,
                           const std::optional<std::filesystem::path>& output_dir = std::nullopt);

// Re-runs a suite from its manifest. Throws SchemaMismatch when the table's
// fingerprints differ from the recorded ones.
ExperimentReport rerun_suite(const dataset::MergedTable& table, const RunManifest& manifest);

struct ImportanceReport {
  std::size_t k = 20;
  std::vector<forest::RankedFeature> top;
  std::vector<double> importance;  // full vector in schema order
  std::uint64_t dataset_fingerprint = 0;
  std::uint64_t schema_fingerprint = 0;
  SplitConfig split;
  forest::ForestConfig forest;
};

// Fits the forest on the train split of `config.split` and ranks features.
ImportanceReport compute_importance(const dataset::MergedTable& table, const SuiteConfig& config,
                                    std::size_t k = 20);

nlohmann::json to_json(const ImportanceReport& report);
// Structural check of an importance report document; returns the problems
// found, empty when valid.
std::vector<std::string> validate_importance_json(const nlohmann::json& doc);

struct AblationRow {
  std::string model;
  MetricPair full;
  std::optional<MetricPair> reduced;  // absent when the model cannot take k inputs
  std::string note;

  std::optional<double> delta() const;  // reduced.mae - full.mae
};

struct AblationReport {
  std::size_t k = 0;
  std::vector<forest::RankedFeature> selected;  // in model input order
  std::uint64_t reduced_schema_fingerprint = 0;
  std::vector<AblationRow> rows;
  ExperimentReport full;
  ExperimentReport reduced;
};

// Keeps the top-k features (in their original schema order), reruns the
// suite on them and pairs each model's full and reduced test metrics.
// Architectures whose layer stack does not fit k inputs are reported without
// a reduced result. Throws KTooLarge.
AblationReport run_reduced_feature(const dataset::MergedTable& table,
                                   const ImportanceReport& importance, std::size_t k,
                                   const SuiteConfig& config, const ExperimentReport& full);

nlohmann::json to_json(const AblationReport& report);

// ---------------------------------------------------------------------------
// Emission

// Text table with the same columns as the report CSV.
std::string format_table(const ExperimentReport& report);
std::string report_csv(const ExperimentReport& report);  // "model,mae,mse", 6 decimals
std::string history_csv(const std::vector<nn::EpochMetrics>& history);
std::string ablation_csv(const AblationReport& report);
std::string importance_csv(const ImportanceReport& report);

// report.csv, report.json and history_<id>.csv per CNN.
void emit_report(const ExperimentReport& report, const std::filesystem::path& dir);
void emit_ablation(const AblationReport& report, const std::filesystem::path& dir);
void emit_importance(const ImportanceReport& report, const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, std::string_view text);
nlohmann::json read_json(const std::filesystem::path& path);

// Test MAE reported for the original, access-restricted cohort data. Kept as
// an informational fixture; never asserted on synthetic data.
const std::vector<std::pair<std::string, double>>& reference_mae();

struct ReferenceComparison {
  std::string model;
  double reference = 0.0;
  double observed = 0.0;
  bool within = false;
};

std::vector<ReferenceComparison> compare_to_reference(const ExperimentReport& report,
                                                      double tolerance = 0.02);

}  // namespace sleepeff::experiment
