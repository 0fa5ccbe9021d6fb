#include "flexmod/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace flexmod {

int MlpParams::input_dim() const {
  if (layers.empty()) throw std::invalid_argument("MlpParams: no layers");
  return layers.front().weight.dim(1);
}

int MlpParams::output_dim() const {
  if (layers.empty()) throw std::invalid_argument("MlpParams: no layers");
  return layers.back().weight.dim(0);
}

MlpParams make_mlp(int input, const std::vector<int>& hidden, int output,
                   Activation hidden_act, Activation output_act, Rng& rng) {
  if (input <= 0 || output <= 0) throw std::invalid_argument("make_mlp: dims must be positive");
  std::vector<int> dims;
  dims.push_back(input);
  for (int h : hidden) {
    if (h <= 0) throw std::invalid_argument("make_mlp: hidden dims must be positive");
    dims.push_back(h);
  }
  dims.push_back(output);

  MlpParams params;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(static_cast<std::size_t>(out) * in);
    for (double& x : w) x = rng.uniform(-bound, bound);
    Layer layer;
    layer.weight = Tensor::from_values({out, in}, std::move(w), true);
    layer.bias = Tensor::zeros({out}, true);
    layer.act = (l + 2 == dims.size()) ? output_act : hidden_act;
    params.layers.push_back(std::move(layer));
  }
  return params;
}

void validate_mlp(const MlpParams& params) {
  if (params.layers.empty()) throw std::invalid_argument("MlpParams: no layers");
  for (std::size_t l = 0; l + 1 < params.layers.size(); ++l) {
    const int out = params.layers[l].weight.dim(0);
    const int next_in = params.layers[l + 1].weight.dim(1);
    if (out != next_in) {
      throw std::invalid_argument("MlpParams: layer " + std::to_string(l) + " output dim " +
                                  std::to_string(out) + " != layer " + std::to_string(l + 1) +
                                  " input dim " + std::to_string(next_in));
    }
  }
}

Tensor forward_mlp(const MlpParams& params, const Tensor& input) {
  if (params.layers.empty()) throw std::invalid_argument("forward_mlp: no layers");
  Tensor x = input;
  for (const auto& layer : params.layers) {
    x = activate(linear(x, layer.weight, layer.bias), layer.act);
  }
  return x;
}

std::vector<Tensor> parameters(const MlpParams& params) {
  std::vector<Tensor> out;
  out.reserve(params.layers.size() * 2);
  for (const auto& layer : params.layers) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  return out;
}

std::size_t parameter_count(const MlpParams& params) {
  std::size_t n = 0;
  for (const auto& layer : params.layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

MlpParams clone_mlp(const MlpParams& params) {
  MlpParams copy;
  copy.layers.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    Layer l;
    l.weight = Tensor::from_values(layer.weight.shape(), layer.weight.values(), true);
    l.bias = Tensor::from_values(layer.bias.shape(), layer.bias.values(), true);
    l.act = layer.act;
    copy.layers.push_back(std::move(l));
  }
  return copy;
}

bool same_structure(const MlpParams& a, const MlpParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].weight.shape() != b.layers[l].weight.shape()) return false;
    if (a.layers[l].bias.shape() != b.layers[l].bias.shape()) return false;
    if (a.layers[l].act != b.layers[l].act) return false;
  }
  return true;
}

std::vector<double> flatten(const MlpParams& params) {
  std::vector<double> flat;
  flat.reserve(parameter_count(params));
  for (const auto& layer : params.layers) {
    flat.insert(flat.end(), layer.weight.values().begin(), layer.weight.values().end());
    flat.insert(flat.end(), layer.bias.values().begin(), layer.bias.values().end());
  }
  return flat;
}

void unflatten(MlpParams& params, const std::vector<double>& flat) {
  if (flat.size() != parameter_count(params)) {
    throw std::invalid_argument("unflatten: got " + std::to_string(flat.size()) +
                                " values for " + std::to_string(parameter_count(params)) +
                                " parameters");
  }
  std::size_t pos = 0;
  for (auto& layer : params.layers) {
    for (double& w : layer.weight.values()) w = flat[pos++];
    for (double& b : layer.bias.values()) b = flat[pos++];
  }
}

void SgdConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("sgd: learning_rate must be positive");
  if (decay <= 0.0 || decay > 1.0) throw std::invalid_argument("sgd: decay must be in (0, 1]");
  if (floor <= 0.0) throw std::invalid_argument("sgd: floor must be positive");
  if (floor > learning_rate) throw std::invalid_argument("sgd: floor exceeds learning_rate");
}

void sgd_step(const std::vector<Tensor>& params, SgdConfig& config) {
  for (const auto& p : params) {
    if (!p.defined() || !p.requires_grad()) {
      throw std::invalid_argument("sgd_step: parameter does not require grad");
    }
    if (!p.has_grad()) {
      throw std::runtime_error("sgd_step: parameter has no gradient; run backward first");
    }
  }
  const double eta = config.learning_rate;
  for (const auto& p : params) {
    auto& values = p.node()->values;
    const auto& grad = p.node()->grad;
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= eta * grad[i];
    p.node()->grad.clear();
  }
  config.learning_rate = std::max(config.floor, config.learning_rate * config.decay);
}

void adam_step(const std::vector<Tensor>& params, AdamState& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].size(), 0.0);
      state.v[i].assign(params[i].size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter list changed size");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.has_grad()) {
      throw std::runtime_error("adam_step: parameter has no gradient; run backward first");
    }
    auto& values = p.node()->values;
    const auto& grad = p.node()->grad;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * grad[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * grad[j] * grad[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      values[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
    p.node()->grad.clear();
  }
}

double grad_l2_norm(const std::vector<Tensor>& params) {
  double sum = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.node()->grad) sum += g * g;
  }
  return std::sqrt(sum);
}

}  // namespace flexmod
