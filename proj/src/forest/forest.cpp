#include <algorithm>
#include <array>
#include <atomic>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

#include "sleepeff/errors.hpp"
#include "sleepeff/forest.hpp"
#include "tree_builder.hpp"

namespace sleepeff::forest {

std::uint64_t tree_seed(std::uint64_t forest_seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(forest_seed),
                    static_cast<std::uint32_t>(forest_seed >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(index) >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

Tree fit_one(const TrainingSet& rows, const ForestConfig& config, std::uint64_t seed) {
  if (!config.bootstrap) return fit_tree(rows, config, seed);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
  std::vector<std::size_t> sample(rows.size());
  for (auto& s : sample) s = pick(rng);
  return detail::TreeBuilder(rows, config, rng).grow(std::move(sample));
}

}  // namespace

Forest fit_forest(const TrainingSet& rows, const ForestConfig& config) {
  if (rows.size() == 0) throw EmptyInput("fit_forest: no rows");
  config.validate(rows.n_features());

  Forest forest;
  forest.config = config;
  forest.n_features = rows.n_features();
  forest.trees.resize(config.n_trees);
  forest.tree_seeds.resize(config.n_trees);
  for (std::size_t t = 0; t < config.n_trees; ++t) forest.tree_seeds[t] = tree_seed(config.seed, t);

  std::size_t workers = config.threads ? config.threads : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, config.n_trees);

  // Each tree depends only on its own seed, so the assignment of trees to
  // workers cannot change the result.
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t t = next++; t < config.n_trees; t = next++)
      forest.trees[t] = fit_one(rows, config, forest.tree_seeds[t]);
  };
  if (workers == 1) {
    work();
    return forest;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        work();
      } catch (...) {
        errors[w] = std::current_exception();
        next = config.n_trees;
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return forest;
}

Forest fit_forest(const dataset::MergedTable& table, const ForestConfig& config) {
  return fit_forest(TrainingSet::from_table(table), config);
}

double predict_row(const Forest& forest, std::span<const double> x) {
  if (x.size() != forest.n_features)
    throw ShapeError("forest expects " + std::to_string(forest.n_features) + " features, got " +
                     std::to_string(x.size()));
  if (forest.trees.empty()) throw ModelError("RF", "forest has no trees");
  double sum = 0.0;
  for (const auto& tree : forest.trees) sum += tree.predict(x);
  return sum / static_cast<double>(forest.trees.size());
}

std::vector<double> predict_forest(const Forest& forest, const TrainingSet& rows) {
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = predict_row(forest, rows.row(i));
  return out;
}

std::vector<double> predict_forest(const Forest& forest, const dataset::MergedTable& table) {
  std::vector<double> out;
  out.reserve(table.size());
  for (const auto& row : table.rows) out.push_back(predict_row(forest, row.features));
  return out;
}

std::vector<double> feature_importance(const Forest& forest) {
  std::vector<double> total(forest.n_features, 0.0);
  for (const auto& tree : forest.trees) {
    if (tree.nodes.empty()) continue;
    const double n_root = static_cast<double>(tree.nodes.front().n_samples);
    std::vector<double> own(forest.n_features, 0.0);
    for (const auto& node : tree.nodes)
      if (!node.is_leaf()) own[static_cast<std::size_t>(node.feature)] += node.gain / n_root;
    for (std::size_t j = 0; j < own.size(); ++j) total[j] += own[j];
  }
  const double trees = static_cast<double>(std::max<std::size_t>(forest.trees.size(), 1));
  for (auto& v : total) v /= trees;
  const double sum = std::accumulate(total.begin(), total.end(), 0.0);
  if (sum > 0.0)
    for (auto& v : total) v /= sum;
  return total;
}

std::vector<RankedFeature> top_k(std::span<const double> importance,
                                 const dataset::FeatureSchema& schema, std::size_t k) {
  if (importance.size() != schema.input_length())
    throw LengthMismatch(importance.size(), schema.input_length());
  if (k > importance.size()) throw KTooLarge(k, importance.size());
  if (k == 0) throw InvalidConfig("k must be positive");
  std::vector<std::size_t> order(importance.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
  std::vector<RankedFeature> out;
  for (std::size_t i = 0; i < k; ++i)
    out.push_back({order[i], schema.at(order[i]).name, importance[order[i]]});
  return out;
}

nlohmann::json to_json(const ForestConfig& config) {
  nlohmann::json j{{"n_trees", config.n_trees},
                   {"min_samples_leaf", config.min_samples_leaf},
                   {"seed", config.seed},
                   {"bootstrap", config.bootstrap}};
  j["mtry"] = config.mtry ? nlohmann::json(*config.mtry) : nlohmann::json(nullptr);
  j["max_depth"] = config.max_depth ? nlohmann::json(*config.max_depth) : nlohmann::json(nullptr);
  return j;
}

ForestConfig forest_config_from_json(const nlohmann::json& overrides, ForestConfig base) {
  if (!overrides.is_object()) throw InvalidConfig("forest config must be an object");
  auto optional_size = [](const nlohmann::json& v) -> std::optional<std::size_t> {
    if (v.is_null()) return std::nullopt;
    return v.get<std::size_t>();
  };
  try {
    for (const auto& [key, value] : overrides.items()) {
      if (key == "n_trees") base.n_trees = value.get<std::size_t>();
      else if (key == "mtry") base.mtry = optional_size(value);
      else if (key == "min_samples_leaf") base.min_samples_leaf = value.get<std::size_t>();
      else if (key == "max_depth") base.max_depth = optional_size(value);
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else if (key == "bootstrap") base.bootstrap = value.get<bool>();
      else if (key == "threads") base.threads = value.get<std::size_t>();
      else throw InvalidConfig("unknown forest config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("bad forest config: ") + e.what());
  }
  return base;
}

namespace {

nlohmann::json node_json(const Node& n) {
  nlohmann::json j{{"n", n.n_samples}, {"value", n.value}, {"impurity", n.impurity}};
  if (!n.is_leaf()) {
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    j["gain"] = n.gain;
  }
  return j;
}

// Rebuilds child links from a preorder node list.
std::size_t relink(std::vector<Node>& nodes, std::size_t i) {
  if (i >= nodes.size()) throw InvalidConfig("truncated tree in forest checkpoint");
  if (nodes[i].is_leaf()) return i + 1;
  const std::size_t right = relink(nodes, i + 1);
  nodes[i].right = static_cast<std::uint32_t>(right);
  return relink(nodes, right);
}

}  // namespace

nlohmann::json to_json(const Forest& forest) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : forest.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes) nodes.push_back(node_json(n));
    trees.push_back(std::move(nodes));
  }
  return {{"model", "RF"},
          {"config", to_json(forest.config)},
          {"n_features", forest.n_features},
          {"tree_seeds", forest.tree_seeds},
          {"trees", std::move(trees)}};
}

Forest forest_from_json(const nlohmann::json& doc) {
  try {
    Forest forest;
    forest.config = forest_config_from_json(doc.at("config"));
    forest.n_features = doc.at("n_features").get<std::size_t>();
    forest.tree_seeds = doc.at("tree_seeds").get<std::vector<std::uint64_t>>();
    for (const auto& nodes : doc.at("trees")) {
      Tree tree;
      for (const auto& j : nodes) {
        Node n;
        n.n_samples = j.at("n").get<std::size_t>();
        n.value = j.at("value").get<double>();
        n.impurity = j.at("impurity").get<double>();
        if (j.contains("feature")) {
          n.feature = j.at("feature").get<int>();
          if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= forest.n_features)
            throw InvalidConfig("split feature out of range in forest checkpoint");
          n.threshold = j.at("threshold").get<double>();
          n.gain = j.at("gain").get<double>();
        }
        tree.nodes.push_back(n);
      }
      if (relink(tree.nodes, 0) != tree.nodes.size())
        throw InvalidConfig("trailing nodes in forest checkpoint");
      forest.trees.push_back(std::move(tree));
    }
    return forest;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("malformed forest checkpoint: ") + e.what());
  }
}

void save_forest(const Forest& forest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write forest checkpoint " + path.string());
  out << to_json(forest).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Forest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open forest checkpoint " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig("forest checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return forest_from_json(doc);
}

}  // namespace sleepeff::forest
