#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sleepeff/errors.hpp"
#include "sleepeff/runconfig.hpp"

using namespace sleepeff;
using namespace sleepeff::cli;
using nlohmann::json;
namespace fs = std::filesystem;

TEST(RunConfig, DefaultsWhenEmpty) {
  const auto c = parse_run_config(json::object(), "/tmp/base");
  EXPECT_EQ(c.k, 20u);
  EXPECT_EQ(c.suite.models.size(), 7u);
  EXPECT_EQ(c.suite.models.back().id, "RF");
  EXPECT_EQ(c.suite.split.seed, 42u);
  EXPECT_EQ(c.suite.split.test_fraction, 0.2);
  EXPECT_EQ(c.output_dir, fs::path("/tmp/base/out"));
  EXPECT_EQ(c.schema, dataset::nethealth_schema());
  EXPECT_THROW(load_data(c), InvalidConfig);
}

TEST(RunConfig, UnknownKeysRejected) {
  EXPECT_THROW(parse_run_config({{"epochs", 3}}, "/"), InvalidConfig);
  EXPECT_THROW(parse_run_config({{"split", {{"ratio", 0.3}}}}, "/"), InvalidConfig);
  EXPECT_THROW(parse_run_config({{"train", {{"lr", 0.1}}}}, "/"), InvalidConfig);
  EXPECT_THROW(parse_run_config({{"forest", {{"trees", 3}}}}, "/"), InvalidConfig);
  EXPECT_THROW(parse_run_config({{"models", {"A2", "XGB"}}}, "/"), InvalidConfig);
  EXPECT_THROW(parse_run_config({{"split", {{"fraction", 1.5}}}}, "/"), InvalidConfig);
  EXPECT_THROW(parse_run_config({{"k", 0}}, "/"), InvalidConfig);
  EXPECT_THROW(parse_run_config({{"data", {{"activity", "a.csv"}}}}, "/"), InvalidConfig);
}

TEST(RunConfig, RelativePathsResolveAgainstConfigDirectory) {
  const auto c = parse_run_config(
      {{"data", {{"activity", "raw/a.csv"}, {"sleep", "/abs/s.csv"}, {"survey", "../v.csv"}}},
       {"output_dir", "results"}},
      "/work/cfg");
  EXPECT_EQ(*c.activity, fs::path("/work/cfg/raw/a.csv"));
  EXPECT_EQ(*c.sleep, fs::path("/abs/s.csv"));
  EXPECT_EQ(*c.survey, fs::path("/work/v.csv"));
  EXPECT_EQ(c.output_dir, fs::path("/work/cfg/results"));
  EXPECT_TRUE(c.has_raw_data());
}

TEST(RunConfig, PerModelTrainSettingsLayerOnDefaults) {
  const auto c = parse_run_config(
      json::parse(R"({"train": {"epochs": 4, "learning_rate": 0.01},
                      "models": ["A2", {"id": "A3", "train": {"epochs": 9}}, "RF"]})"),
      "/");
  ASSERT_EQ(c.suite.models.size(), 3u);
  EXPECT_EQ(c.suite.models[0].train.epochs, 4u);
  EXPECT_EQ(c.suite.models[1].train.epochs, 9u);
  EXPECT_EQ(c.suite.models[1].train.learning_rate, 0.01);
}

TEST(RunConfig, OverridesReplaceSeedModelsKAndOut) {
  auto c = parse_run_config(json::parse(R"({"synth": {"n_participants": 5, "days_per_participant": 2},
                                             "models": [{"id": "A3", "train": {"epochs": 9}}, "RF"]})"),
                            "/");
  Overrides o;
  o.seed = 1234;
  o.models = std::vector<std::string>{"RF", "A3", "A2"};
  o.k = 7;
  o.out = "/tmp/elsewhere";
  apply_overrides(c, o);
  EXPECT_EQ(c.suite.split.seed, 1234u);
  EXPECT_EQ(c.synth->seed, 1234u);
  ASSERT_EQ(c.suite.models.size(), 3u);
  EXPECT_EQ(c.suite.models[0].id, "RF");
  EXPECT_EQ(c.suite.models[1].train.epochs, 9u);
  EXPECT_EQ(c.suite.models[2].train.epochs, 50u);
  EXPECT_EQ(c.k, 7u);
  EXPECT_EQ(c.output_dir, fs::path("/tmp/elsewhere"));
  Overrides bad;
  bad.models = std::vector<std::string>{"A0"};
  EXPECT_THROW(apply_overrides(c, bad), InvalidConfig);
}

TEST(RunConfig, ResolvedDocumentParsesBackToSameConfig) {
  auto c = parse_run_config(json::parse(R"({"synth": {"n_participants": 5, "days_per_participant": 2, "seed": 3},
                                             "split": {"fraction": 0.3, "seed": 8},
                                             "train": {"epochs": 4},
                                             "models": ["A2", "RF"],
                                             "forest": {"n_trees": 3, "mtry": 5},
                                             "k": 11, "concurrent": false})"),
                            "/cfg");
  const auto resolved = c.resolved();
  const auto back = parse_run_config(resolved, "/somewhere/else");
  EXPECT_EQ(back.resolved(), resolved);
  EXPECT_EQ(back.suite.forest.mtry, 5u);
  EXPECT_EQ(back.synth->seed, 3u);
  EXPECT_EQ(load_data(back).size(), 10u);
}

TEST(RunConfig, LoadFromFile) {
  const auto dir = fs::temp_directory_path() / "sleepeff_runconfig_test";
  fs::create_directories(dir);
  std::ofstream(dir / "run.json") << R"({"k": 5, "output_dir": "o"})";
  std::ofstream(dir / "broken.json") << "{ not json";
  const auto c = load_run_config(dir / "run.json");
  EXPECT_EQ(c.k, 5u);
  EXPECT_EQ(c.output_dir, (dir / "o").lexically_normal());
  EXPECT_THROW(load_run_config(dir / "broken.json"), InvalidConfig);
  EXPECT_THROW(load_run_config(dir / "missing.json"), InvalidConfig);
  fs::remove_all(dir);
}

TEST(SplitList, DropsEmptyItems) {
  EXPECT_EQ(split_list("A2,,RF,"), (std::vector<std::string>{"A2", "RF"}));
  EXPECT_TRUE(split_list("").empty());
}
