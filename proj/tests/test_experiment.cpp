#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "sleepeff/errors.hpp"
#include "sleepeff/experiment.hpp"
#include "sleepeff/synthdata.hpp"

using namespace sleepeff;
using namespace sleepeff::experiment;
namespace fs = std::filesystem;

namespace {

const dataset::MergedTable& small_table() {
  static const dataset::MergedTable t = [] {
    auto c = synth::default_config();
    c.n_participants = 30;
    c.days_per_participant = 5;
    return synth::generate(c).first;
  }();
  return t;
}

SuiteConfig small_suite(std::vector<std::string> ids = {"A2", "A3", "RF"}) {
  SuiteConfig c = SuiteConfig::defaults().only(ids);
  for (auto& m : c.models) {
    m.train.epochs = 2;
    m.train.batch_size = 16;
  }
  c.forest.n_trees = 5;
  return c;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("sleepeff_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void expect_same_metrics(const ExperimentReport& a, const ExperimentReport& b) {
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].model, b.rows[i].model);
    EXPECT_EQ(a.rows[i].test.mae, b.rows[i].test.mae) << a.rows[i].model;
    EXPECT_EQ(a.rows[i].test.mse, b.rows[i].test.mse) << a.rows[i].model;
  }
}

}  // namespace

// ---- metrics ----

TEST(Metrics, HandExamples) {
  const std::vector<double> p{0.90, 0.95}, t{0.95, 0.90};
  EXPECT_NEAR(mae(p, t), 0.05, 1e-15);
  EXPECT_NEAR(mse(p, t), 0.0025, 1e-15);
  EXPECT_EQ(mae(t, t), 0.0);
  EXPECT_EQ(mse(t, t), 0.0);
  const std::vector<double> shifted{0.95 - 0.02, 0.90 - 0.02};
  EXPECT_NEAR(mae(shifted, t), 0.02, 1e-15);
}

TEST(Metrics, ErrorsOnBadLengths) {
  const std::vector<double> a{1, 2}, b{1};
  EXPECT_THROW(mae(a, b), LengthMismatch);
  EXPECT_THROW(mse(a, b), LengthMismatch);
  EXPECT_THROW(mae(std::vector<double>{}, std::vector<double>{}), EmptyInput);
}

TEST(Metrics, JensenBoundHoldsOnRandomVectors) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> p(1 + trial % 20), t(p.size());
    for (auto& v : p) v = z(rng);
    for (auto& v : t) v = z(rng);
    const auto m = metrics(p, t);
    ASSERT_LE(m.mae * m.mae, m.mse * (1 + 1e-12));
    ASSERT_GE(m.mae, 0.0);
  }
}

TEST(Metrics, BaselinePredictsTrainMean) {
  dataset::MergedTable train, test;
  for (double y : {0.9, 0.94, 0.98}) train.rows.push_back({"P", {}, {}, y});
  for (double y : {0.93, 0.97}) test.rows.push_back({"Q", {}, {}, y});
  const auto m = baseline_mean(train, test);
  EXPECT_NEAR(m.mae, 0.02, 1e-12);
  EXPECT_NEAR(m.mse, 0.0005, 1e-12);
  // Constant targets give zero error.
  dataset::MergedTable flat;
  for (int i = 0; i < 3; ++i) flat.rows.push_back({"P", {}, {}, 0.93});
  EXPECT_EQ(baseline_mean(flat, flat).mae, 0.0);
}

// ---- suite ----

TEST(Suite, OneRowPerModelBaselineLast) {
  const auto r = run_suite(small_table(), small_suite());
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.rows[0].model, "A2");
  EXPECT_EQ(r.rows[1].model, "A3");
  EXPECT_EQ(r.rows[2].model, "RF");
  EXPECT_EQ(r.rows[3].model, kBaselineId);
  EXPECT_FALSE(r.rows[3].train.has_value());
  EXPECT_EQ(r.history.at("A2").size(), 2u);
  EXPECT_EQ(r.history.count("RF"), 0u);
  EXPECT_EQ(r.manifest.n_train + r.manifest.n_test, small_table().size());
  EXPECT_EQ(r.manifest.n_test, 30u);
  EXPECT_EQ(r.manifest.feature_names.size(), 93u);
  for (const auto& row : r.rows) EXPECT_LE(row.test.mae * row.test.mae, row.test.mse * (1 + 1e-12));
}

TEST(Suite, ConcurrentAndSequentialAgree) {
  auto c = small_suite();
  c.concurrent = true;
  const auto a = run_suite(small_table(), c);
  c.concurrent = false;
  expect_same_metrics(a, run_suite(small_table(), c));
}

TEST(Suite, RerunFromManifestIsBitIdentical) {
  const auto r = run_suite(small_table(), small_suite());
  const auto manifest = manifest_from_json(to_json(r.manifest));
  expect_same_metrics(r, rerun_suite(small_table(), manifest));
}

TEST(Suite, RerunRejectsDifferentData) {
  const auto r = run_suite(small_table(), small_suite({"RF"}));
  auto other = small_table();
  other.rows[0].target += 1e-9;
  EXPECT_THROW(rerun_suite(other, r.manifest), SchemaMismatch);
}

TEST(Suite, FailingModelReportsItsId) {
  auto c = small_suite({"A2"});
  c.models[0].train.learning_rate = 1e6;
  c.models[0].train.optimizer = nn::Optimizer::sgd;
  try {
    run_suite(small_table(), c);
    FAIL() << "expected ModelError";
  } catch (const ModelError& e) {
    EXPECT_EQ(e.model(), "A2");
  }
}

TEST(Suite, ConfigValidation) {
  EXPECT_THROW(SuiteConfig::defaults().only(std::vector<std::string>{"A9"}), InvalidConfig);
  auto c = small_suite({"A2"});
  c.models.push_back(c.models[0]);
  EXPECT_THROW(run_suite(small_table(), c), InvalidConfig);
  dataset::MergedTable empty;
  EXPECT_THROW(run_suite(empty, small_suite()), EmptyInput);
}

TEST(Suite, OutputDirectoryLayout) {
  const auto dir = scratch("suite_out");
  const auto r = run_suite(small_table(), small_suite(), dir);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "A2.json"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "RF.json"));
  EXPECT_TRUE(fs::exists(dir / "history" / "A3.csv"));
  // The stored CNN checkpoint reproduces the reported test metric.
  const auto ck = nn::load_checkpoint(dir / "checkpoints" / "A2.json");
  EXPECT_EQ(ck.final_metrics.at("test_mae").get<double>(), r.row("A2").test.mae);
  emit_report(r, dir);
  const auto csv = slurp(dir / "report.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,mae,mse");
  EXPECT_TRUE(fs::exists(dir / "history_A2.csv"));
  fs::remove_all(dir);
}

// ---- reports ----

TEST(Report, JsonRoundTripIsExact) {
  const auto r = run_suite(small_table(), small_suite());
  const auto back = report_from_json(nlohmann::json::parse(to_json(r).dump()));
  expect_same_metrics(r, back);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    ASSERT_EQ(back.rows[i].train.has_value(), r.rows[i].train.has_value());
    if (r.rows[i].train) EXPECT_EQ(back.rows[i].train->mae, r.rows[i].train->mae);
  }
  EXPECT_EQ(back.history.at("A3").back().train_mse, r.history.at("A3").back().train_mse);
  EXPECT_EQ(back.manifest.partition_hash, r.manifest.partition_hash);
  EXPECT_EQ(back.manifest.dataset_fingerprint, r.manifest.dataset_fingerprint);
  EXPECT_EQ(report_csv(back), report_csv(r));
}

TEST(Report, CsvFormats) {
  ExperimentReport r;
  r.rows = {{"RF", {0.0123456789, 0.0002}, MetricPair{0.01, 0.0001}}, {kBaselineId, {0.02, 0.0005}, std::nullopt}};
  EXPECT_EQ(report_csv(r), "model,mae,mse\nRF,0.012346,0.000200\nbaseline-mean,0.020000,0.000500\n");
  const std::vector<nn::EpochMetrics> h{{1, 0.5, 0.25}, {2, 0.25, 0.0625}};
  EXPECT_EQ(history_csv(h), "epoch,train_mae,train_mse\n1,0.500000,0.250000\n2,0.250000,0.062500\n");
  // The text table lists the same columns in the same order.
  const auto table = format_table(r);
  EXPECT_LT(table.find("model"), table.find("mae"));
  EXPECT_LT(table.find("mae"), table.find("mse"));
}

TEST(Report, ReferenceFixtureIsInformational) {
  const auto& ref = reference_mae();
  EXPECT_EQ(ref.front().first, "RF");
  EXPECT_EQ(ref.front().second, 0.0282);
  ExperimentReport r;
  r.rows = {{"RF", {0.03, 0.001}, std::nullopt}, {"A6", {0.01, 0.001}, std::nullopt}};
  const auto cmp = compare_to_reference(r);
  ASSERT_EQ(cmp.size(), 2u);
  EXPECT_TRUE(cmp[0].within);
  EXPECT_FALSE(cmp[1].within);
}

// ---- importance and ablation ----

TEST(Importance, ReportMatchesTopK) {
  const auto rep = compute_importance(small_table(), small_suite(), 20);
  ASSERT_EQ(rep.top.size(), 20u);
  double sum = 0.0;
  for (double v : rep.importance) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-9);
  const auto direct = forest::top_k(rep.importance, small_table().schema, 20);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(rep.top[i].index, direct[i].index);
  EXPECT_TRUE(validate_importance_json(to_json(rep)).empty());
  auto broken = to_json(rep);
  broken.erase("features");
  EXPECT_FALSE(validate_importance_json(broken).empty());
  const auto csv = importance_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "rank,feature,index,importance");
  EXPECT_THROW(compute_importance(small_table(), small_suite(), 94), KTooLarge);
}

TEST(Ablation, AllFeaturesReproducesFullRunExactly) {
  const auto cfg = small_suite();
  const auto full = run_suite(small_table(), cfg);
  const auto imp = compute_importance(small_table(), cfg, 93);
  const auto ab = run_reduced_feature(small_table(), imp, 93, cfg, full);
  ASSERT_EQ(ab.rows.size(), full.rows.size());
  for (const auto& row : ab.rows) {
    ASSERT_TRUE(row.delta().has_value()) << row.model;
    EXPECT_EQ(*row.delta(), 0.0) << row.model;
  }
  EXPECT_EQ(ab.reduced_schema_fingerprint, small_table().schema.fingerprint());
  EXPECT_EQ(ab.reduced.manifest.partition_hash, full.manifest.partition_hash);
}

TEST(Ablation, SmallKSkipsArchitecturesThatDoNotFit) {
  const auto cfg = small_suite({"A1", "A2", "A3", "RF"});
  const auto full = run_suite(small_table(), cfg);
  const auto imp = compute_importance(small_table(), cfg, 10);
  const auto ab = run_reduced_feature(small_table(), imp, 10, cfg, full);
  ASSERT_EQ(ab.rows.size(), 5u);
  EXPECT_FALSE(ab.rows[0].reduced.has_value());  // A1: kernel 20 > 10 inputs
  EXPECT_FALSE(ab.rows[0].note.empty());
  EXPECT_TRUE(ab.rows[1].reduced.has_value());   // A2
  EXPECT_FALSE(ab.rows[2].reduced.has_value());  // A3
  EXPECT_TRUE(ab.rows[3].reduced.has_value());   // RF
  EXPECT_EQ(ab.reduced.manifest.feature_names.size(), 10u);
  // Selected features keep schema order.
  for (std::size_t i = 1; i < ab.selected.size(); ++i) EXPECT_LT(ab.selected[i - 1].index, ab.selected[i].index);
  const auto csv = ablation_csv(ab);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,mae_full,mae_reduced,delta");
  EXPECT_NE(csv.find("A1,"), std::string::npos);
  EXPECT_NE(csv.find("NA"), std::string::npos);
  EXPECT_FALSE(to_json(ab.reduced.manifest)["parent"].is_null());
}

TEST(Ablation, KLargerThanFeatureCountThrows) {
  const auto cfg = small_suite({"RF"});
  const auto full = run_suite(small_table(), cfg);
  const auto imp = compute_importance(small_table(), cfg, 20);
  EXPECT_THROW(run_reduced_feature(small_table(), imp, 94, cfg, full), KTooLarge);
}
