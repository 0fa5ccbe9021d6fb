#include "flexmod/model.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace flexmod {

namespace {

nlohmann::json mlp_to_json(const MlpParams& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : params.layers) {
    layers.push_back({{"out", layer.weight.dim(0)},
                      {"in", layer.weight.dim(1)},
                      {"activation", to_string(layer.act)},
                      {"weight", layer.weight.values()},
                      {"bias", layer.bias.values()}});
  }
  return layers;
}

MlpParams mlp_from_json(const nlohmann::json& j) {
  MlpParams params;
  for (const auto& lj : j) {
    const int out = lj.at("out").get<int>();
    const int in = lj.at("in").get<int>();
    Layer layer;
    layer.weight = Tensor::from_values({out, in}, lj.at("weight").get<std::vector<double>>(), true);
    layer.bias = Tensor::from_values({out}, lj.at("bias").get<std::vector<double>>(), true);
    layer.act = activation_from_string(lj.at("activation").get<std::string>());
    params.layers.push_back(std::move(layer));
  }
  validate_mlp(params);
  return params;
}

}  // namespace

void ModelSpec::validate() const {
  if (input_dims.empty()) throw std::invalid_argument("model: need at least one modality");
  if (encoder_hidden.size() != input_dims.size()) {
    throw std::invalid_argument("model: encoder_hidden must list one stack per modality");
  }
  if (feature_dim < 1) throw std::invalid_argument("model: feature_dim must be positive");
  if (classes < 2) throw std::invalid_argument("model: need at least two classes");
  for (int d : input_dims) {
    if (d < 1) throw std::invalid_argument("model: input dims must be positive");
  }
}

GlobalModel make_global_model(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  GlobalModel model;
  model.feature_dim = spec.feature_dim;
  for (int m = 0; m < spec.modalities(); ++m) {
    model.encoders.push_back(make_mlp(spec.input_dims[static_cast<std::size_t>(m)],
                                      spec.encoder_hidden[static_cast<std::size_t>(m)],
                                      spec.feature_dim, Activation::relu, Activation::identity,
                                      rng));
  }
  model.header = make_mlp(spec.modalities() * spec.feature_dim, spec.header_hidden, spec.classes,
                          Activation::relu, Activation::identity, rng);
  return model;
}

GlobalModel clone_model(const GlobalModel& model) {
  GlobalModel copy;
  copy.feature_dim = model.feature_dim;
  copy.header = clone_mlp(model.header);
  copy.encoders.reserve(model.encoders.size());
  for (const auto& enc : model.encoders) copy.encoders.push_back(clone_mlp(enc));
  return copy;
}

std::vector<Tensor> model_parameters(const GlobalModel& model) {
  std::vector<Tensor> out = parameters(model.header);
  for (const auto& enc : model.encoders) {
    auto p = parameters(enc);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void check_same_structure(const GlobalModel& a, const GlobalModel& b) {
  if (a.modalities() != b.modalities() || a.feature_dim != b.feature_dim ||
      !same_structure(a.header, b.header)) {
    throw std::invalid_argument("models differ in structure");
  }
  for (int m = 0; m < a.modalities(); ++m) {
    if (!same_structure(a.encoders[static_cast<std::size_t>(m)],
                        b.encoders[static_cast<std::size_t>(m)])) {
      throw std::invalid_argument("models differ in encoder " + std::to_string(m + 1) +
                                  " structure");
    }
  }
}

Tensor forward_full(const GlobalModel& model, const std::vector<Tensor>& inputs) {
  return forward_subset(model, inputs, (1u << model.modalities()) - 1u);
}

Tensor forward_subset(const GlobalModel& model, const std::vector<Tensor>& inputs, unsigned mask) {
  if (static_cast<int>(inputs.size()) != model.modalities()) {
    throw std::invalid_argument("forward: got " + std::to_string(inputs.size()) +
                                " modality inputs, model has " +
                                std::to_string(model.modalities()));
  }
  if (mask >> model.modalities()) {
    throw std::invalid_argument("forward: mask references unknown modality");
  }
  const int batch = inputs.front().dim(0);
  std::vector<Tensor> blocks;
  blocks.reserve(inputs.size());
  for (int m = 0; m < model.modalities(); ++m) {
    if (mask & (1u << m)) {
      blocks.push_back(forward_mlp(model.encoders[static_cast<std::size_t>(m)],
                                   inputs[static_cast<std::size_t>(m)]));
    } else {
      blocks.push_back(Tensor::zeros({batch, model.feature_dim}));
    }
  }
  return forward_mlp(model.header, concat_cols(blocks));
}

std::vector<Tensor> modality_inputs(const GlobalModel& model, const MultimodalDataset& dataset,
                                    const std::vector<int>& rows) {
  std::vector<Tensor> inputs;
  inputs.reserve(static_cast<std::size_t>(model.modalities()));
  for (int m = 0; m < model.modalities(); ++m) inputs.push_back(modality_batch(dataset, m, rows));
  return inputs;
}

void save_model_json(const std::string& path, const GlobalModel& model) {
  nlohmann::json j;
  j["format"] = "flexmod-model";
  j["version"] = 1;
  j["feature_dim"] = model.feature_dim;
  j["header"] = mlp_to_json(model.header);
  j["encoders"] = nlohmann::json::array();
  for (const auto& enc : model.encoders) j["encoders"].push_back(mlp_to_json(enc));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_model_json: cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

GlobalModel load_model_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model_json: cannot open '" + path + "'");
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "flexmod-model") {
    throw std::runtime_error("load_model_json: '" + path + "' is not a model checkpoint");
  }
  GlobalModel model;
  model.feature_dim = j.at("feature_dim").get<int>();
  model.header = mlp_from_json(j.at("header"));
  for (const auto& ej : j.at("encoders")) model.encoders.push_back(mlp_from_json(ej));
  return model;
}

void check_model_matches_spec(const GlobalModel& model, const ModelSpec& spec) {
  Rng rng(0);
  GlobalModel expected = make_global_model(spec, rng);
  check_same_structure(model, expected);
}

}  // namespace flexmod
