#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sleepeff/errors.hpp"
#include "sleepeff/experiment.hpp"
#include "sleepeff/fingerprint.hpp"
#include "sleepeff/runconfig.hpp"

namespace fs = std::filesystem;
using namespace sleepeff;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct Args {
  std::string config;
  std::string out;
  std::string models;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  bool replay = false;
  bool reference = false;
};

void add_common(CLI::App* cmd, Args& a, bool with_models, bool with_k) {
  cmd->add_option("--config", a.config, "run config JSON")->required();
  cmd->add_option("--out", a.out, "output directory (overrides output_dir)");
  cmd->add_option("--seed", a.seed, "split seed (and synth seed) override");
  if (with_models) cmd->add_option("--models", a.models, "comma-separated model ids, e.g. A2,RF");
  if (with_k) cmd->add_option("--k", a.k, "number of top features");
}

cli::RunConfig resolve(const CLI::App& cmd, const Args& a) {
  cli::RunConfig config = cli::load_run_config(a.config);
  cli::Overrides o;
  if (!a.out.empty()) o.out = a.out;
  if (cmd.count("--seed")) o.seed = a.seed;
  if (!a.models.empty()) o.models = cli::split_list(a.models);
  if (const auto* k = cmd.get_option_no_throw("--k"); k && k->count() > 0) o.k = a.k;
  cli::apply_overrides(config, o);
  return config;
}

void save_resolved(const cli::RunConfig& config) {
  fs::create_directories(config.output_dir);
  experiment::write_text(config.output_dir / "config.resolved.json",
                         config.resolved().dump(2) + "\n");
}

int cmd_synth(const cli::RunConfig& config) {
  const synth::SynthConfig sc = config.synth ? *config.synth : [&] {
    auto d = synth::default_config();
    d.schema = config.schema;
    if (!(config.schema == dataset::nethealth_schema())) d.planted.clear();
    return d;
  }();
  auto [table, truth] = synth::generate(sc);
  save_resolved(config);
  dataset::save_merged_csv(table, config.output_dir / "data.csv");
  table.schema.save(config.output_dir / "schema.json");
  experiment::write_text(config.output_dir / "ground_truth.json",
                         truth.to_json(table.schema).dump(2) + "\n");
  std::printf("wrote %zu rows x %zu features to %s (dataset %s)\n", table.size(),
              table.schema.input_length(), config.output_dir.c_str(),
              to_hex(dataset::dataset_fingerprint(table)).c_str());
  return kOk;
}

int cmd_preprocess(const cli::RunConfig& config) {
  if (!config.has_raw_data())
    throw InvalidConfig("preprocess needs data.activity, data.sleep and data.survey");
  auto result = dataset::preprocess(*config.activity, *config.sleep, *config.survey, config.schema);
  save_resolved(config);
  dataset::save_merged_csv(result.table, config.output_dir / "data.csv");
  result.table.schema.save(config.output_dir / "schema.json");
  const auto& m = result.merge;
  const nlohmann::json summary{
      {"rows", result.table.size()},
      {"merge",
       {{"merged_rows", m.merged_rows},
        {"activity_without_sleep", m.activity_without_sleep},
        {"sleep_without_activity", m.sleep_without_activity},
        {"rows_without_survey", m.rows_without_survey},
        {"participants_without_survey", m.participants_without_survey},
        {"degenerate_sleep", m.degenerate_sleep},
        {"missing_sleep", m.missing_sleep}}},
      {"filter",
       {{"participants_dropped", result.filter.participants_dropped},
        {"rows_dropped", result.filter.rows_dropped}}},
      {"unparsed_cells", result.unparsed_cells},
      {"dataset_fingerprint", to_hex(dataset::dataset_fingerprint(result.table))}};
  experiment::write_text(config.output_dir / "preprocess.json", summary.dump(2) + "\n");
  std::printf("%zu rows after merge and filtering\n", result.table.size());
  return kOk;
}

void print_history(const experiment::ExperimentReport& report) {
  for (const auto& [id, history] : report.history)
    for (const auto& e : history)
      std::printf("%s epoch %zu train_mae %.6f train_mse %.6f\n", id.c_str(), e.epoch, e.train_mae,
                  e.train_mse);
}

int cmd_train(const cli::RunConfig& config) {
  const auto table = cli::load_data(config);
  save_resolved(config);
  const auto report = experiment::run_suite(table, config.suite, config.output_dir);
  print_history(report);
  std::cout << experiment::format_table(report);
  return kOk;
}

int cmd_suite(const cli::RunConfig& config) {
  const auto table = cli::load_data(config);
  save_resolved(config);
  const auto report = experiment::run_suite(table, config.suite, config.output_dir);
  experiment::emit_report(report, config.output_dir);
  std::cout << experiment::format_table(report);
  return kOk;
}

void print_importance(const experiment::ImportanceReport& report) {
  for (std::size_t i = 0; i < report.top.size(); ++i)
    std::printf("%zu %s %.6f\n", i + 1, report.top[i].name.c_str(), report.top[i].importance);
}

int cmd_importance(const cli::RunConfig& config) {
  const auto table = cli::load_data(config);
  save_resolved(config);
  const auto report = experiment::compute_importance(table, config.suite, config.k);
  experiment::emit_importance(report, config.output_dir);
  print_importance(report);
  return kOk;
}

int cmd_ablate(const cli::RunConfig& config) {
  const auto table = cli::load_data(config);
  if (config.k > table.schema.input_length()) throw KTooLarge(config.k, table.schema.input_length());
  save_resolved(config);
  const auto full = experiment::run_suite(table, config.suite, config.output_dir);
  experiment::emit_report(full, config.output_dir);
  const auto importance = experiment::compute_importance(table, config.suite, config.k);
  experiment::emit_importance(importance, config.output_dir);
  const auto ablation =
      experiment::run_reduced_feature(table, importance, config.k, config.suite, full);
  experiment::emit_ablation(ablation, config.output_dir);
  std::cout << experiment::ablation_csv(ablation);
  return kOk;
}

int cmd_report(const cli::RunConfig& config, const Args& a) {
  const auto report = experiment::report_from_json(
      experiment::read_json(config.output_dir / "report.json"));
  experiment::write_text(config.output_dir / "report.csv", experiment::report_csv(report));
  std::cout << experiment::format_table(report);
  if (a.reference) {
    std::printf("reference comparison (tolerance 0.02):\n");
    for (const auto& c : experiment::compare_to_reference(report))
      std::printf("%s reference %.4f observed %.6f %s\n", c.model.c_str(), c.reference, c.observed,
                  c.within ? "within" : "outside");
  }
  if (a.replay) {
    const auto table = cli::load_data(config);
    const auto again = experiment::rerun_suite(table, report.manifest);
    bool same = again.rows.size() == report.rows.size();
    for (std::size_t i = 0; same && i < again.rows.size(); ++i)
      same = again.rows[i].model == report.rows[i].model &&
             again.rows[i].test.mae == report.rows[i].test.mae &&
             again.rows[i].test.mse == report.rows[i].test.mse;
    std::printf("replay: %s\n", same ? "identical" : "DIFFERS");
    if (!same) {
      std::cout << experiment::format_table(again);
      return kRuntime;
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sleep-efficiency prediction pipeline: synthetic data, CNN and random-forest suites"};
  app.require_subcommand(1);
  Args a;
  auto* synth = app.add_subcommand("synth", "generate a synthetic merged dataset");
  add_common(synth, a, false, false);
  auto* preprocess = app.add_subcommand("preprocess", "merge and filter raw activity/sleep/survey tables");
  add_common(preprocess, a, false, false);
  auto* train = app.add_subcommand("train", "train models, write checkpoints and epoch history");
  add_common(train, a, true, false);
  auto* suite = app.add_subcommand("suite", "train all models on one split and emit the report");
  add_common(suite, a, true, false);
  auto* importance = app.add_subcommand("importance", "rank features by forest importance");
  add_common(importance, a, false, true);
  auto* ablate = app.add_subcommand("ablate", "compare full and top-k feature runs");
  add_common(ablate, a, true, true);
  auto* report = app.add_subcommand("report", "re-emit a stored report");
  add_common(report, a, false, false);
  report->add_flag("--replay", a.replay, "re-run the suite from its manifest and compare");
  report->add_flag("--reference", a.reference, "compare against the reference cohort results");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const cli::RunConfig config = resolve(*cmd, a);
    if (cmd == synth) return cmd_synth(config);
    if (cmd == preprocess) return cmd_preprocess(config);
    if (cmd == train) return cmd_train(config);
    if (cmd == suite) return cmd_suite(config);
    if (cmd == importance) return cmd_importance(config);
    if (cmd == ablate) return cmd_ablate(config);
    return cmd_report(config, a);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const ModelError& e) {
    std::cerr << "model " << e.model() << " failed: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
