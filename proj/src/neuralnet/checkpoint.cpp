#include <fstream>

#include "sleepeff/errors.hpp"
#include "sleepeff/fingerprint.hpp"
#include "sleepeff/neuralnet.hpp"

namespace sleepeff::nn {

namespace {

std::string layer_type(const LayerSpec& layer) {
  switch (layer.index()) {
    case 0: return "conv1d";
    case 1: return "maxpool";
    case 2: return "dense";
    case 3: return "flatten";
    default: return "head";
  }
}

}  // namespace

nlohmann::json to_json(const Checkpoint& ck) {
  check_parameters(ck.spec, ck.params);
  const auto shapes = propagate_shapes(ck.spec.layers, ck.spec.input_length);
  nlohmann::json layers = nlohmann::json::array();
  Shape in{ck.spec.input_length, 1, false};
  for (std::size_t l = 0; l < ck.spec.layers.size(); ++l) {
    const auto& spec = ck.spec.layers[l];
    nlohmann::json item{{"type", layer_type(spec)}, {"describe", describe(spec)},
                        {"output_shape", shapes[l].to_string()}};
    const auto& p = ck.params.layers[l];
    if (const auto* c = std::get_if<Conv1D>(&spec)) {
      item["weights_shape"] = {c->filters, in.channels, c->kernel_size};
    } else if (const auto* d = std::get_if<Dense>(&spec)) {
      item["weights_shape"] = {d->units, in.channels};
    } else if (std::holds_alternative<RegressionHead>(spec)) {
      item["weights_shape"] = {in.size()};
    }
    if (!p.weights.empty() || !p.bias.empty()) {
      item["weights"] = p.weights;
      item["bias"] = p.bias;
    }
    layers.push_back(std::move(item));
    in = shapes[l];
  }
  return {{"architecture", ck.spec.id},
          {"pattern", pattern_name(ck.spec.id)},
          {"input_length", ck.spec.input_length},
          {"schema_fingerprint", to_hex(ck.schema_fingerprint)},
          {"layers", std::move(layers)},
          {"train_config", to_json(ck.train_config)},
          {"final_metrics", ck.final_metrics}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  try {
    Checkpoint ck;
    ck.spec = build_architecture(doc.at("architecture").get<std::string>(),
                                 doc.at("input_length").get<std::size_t>());
    ck.schema_fingerprint =
        std::stoull(doc.at("schema_fingerprint").get<std::string>(), nullptr, 16);
    const auto& layers = doc.at("layers");
    if (layers.size() != ck.spec.layers.size())
      throw ShapeError("checkpoint layer count does not match architecture " + ck.spec.id);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].at("type").get<std::string>() != layer_type(ck.spec.layers[l]))
        throw ShapeError("checkpoint layer " + std::to_string(l) + " has the wrong type");
      LayerParams p;
      if (layers[l].contains("weights")) {
        p.weights = layers[l].at("weights").get<std::vector<double>>();
        p.bias = layers[l].at("bias").get<std::vector<double>>();
      }
      ck.params.layers.push_back(std::move(p));
    }
    check_parameters(ck.spec, ck.params);
    ck.train_config = train_config_from_json(doc.at("train_config"));
    ck.final_metrics = doc.value("final_metrics", nlohmann::json::object());
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << to_json(checkpoint).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace sleepeff::nn
