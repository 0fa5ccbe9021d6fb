// MLP parameter containers and the optimizers used by the simulator: SGD with
// multiplicative learning-rate decay for the federated models, Adam for the
// policy-gradient networks.
#pragma once

#include <cstdint>
#include <vector>

#include "flexmod/rng.hpp"
#include "flexmod/tensor.hpp"

namespace flexmod {

struct Layer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
  Activation act = Activation::identity;
};

struct MlpParams {
  std::vector<Layer> layers;

  int input_dim() const;
  int output_dim() const;
};

// Weights drawn uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
MlpParams make_mlp(int input, const std::vector<int>& hidden, int output,
                   Activation hidden_act, Activation output_act, Rng& rng);

void validate_mlp(const MlpParams& params);
Tensor forward_mlp(const MlpParams& params, const Tensor& input);

std::vector<Tensor> parameters(const MlpParams& params);
std::size_t parameter_count(const MlpParams& params);
MlpParams clone_mlp(const MlpParams& params);
bool same_structure(const MlpParams& a, const MlpParams& b);
// Flat parameter vector in layer order (weights row-major, then bias).
std::vector<double> flatten(const MlpParams& params);
void unflatten(MlpParams& params, const std::vector<double>& flat);

struct SgdConfig {
  double learning_rate = 0.01;
  double decay = 1.0;   // multiplicative, applied once per step
  double floor = 1e-6;  // eta never decays below this

  void validate() const;
};

// w <- w - eta * grad for every given parameter, then eta <- max(floor,
// eta * decay) and all grads are cleared. A parameter without a gradient is an
// error: it did not take part in the recorded forward pass.
void sgd_step(const std::vector<Tensor>& params, SgdConfig& config);

struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;  // first moments, one slot per parameter
  std::vector<std::vector<double>> v;  // second moments

  explicit AdamState(double lr = 1e-4) : learning_rate(lr) {}
};

void adam_step(const std::vector<Tensor>& params, AdamState& state);

double grad_l2_norm(const std::vector<Tensor>& params);

}  // namespace flexmod
