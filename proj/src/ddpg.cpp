#include "flexmod/ddpg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace flexmod {

namespace {

Tensor batch_states(const std::vector<const AgentState*>& states) {
  const int batch = static_cast<int>(states.size());
  const int dim = static_cast<int>(states.front()->v.size());
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(batch) * dim);
  for (const AgentState* s : states) {
    if (static_cast<int>(s->v.size()) != dim) {
      throw std::invalid_argument("ddpg: transition states disagree on dimension");
    }
    values.insert(values.end(), s->v.begin(), s->v.end());
  }
  return Tensor::from_values({batch, dim}, std::move(values));
}

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
    Layer layer;
    layer.weight = Tensor::from_values({lj.at("out").get<int>(), lj.at("in").get<int>()},
                                       lj.at("weight").get<std::vector<double>>(), true);
    layer.bias = Tensor::from_values({lj.at("out").get<int>()},
                                     lj.at("bias").get<std::vector<double>>(), true);
    layer.act = activation_from_string(lj.at("activation").get<std::string>());
    params.layers.push_back(std::move(layer));
  }
  validate_mlp(params);
  return params;
}

nlohmann::json adam_to_json(const AdamState& state) {
  return {{"learning_rate", state.learning_rate},
          {"step", state.step},
          {"m", state.m},
          {"v", state.v}};
}

AdamState adam_from_json(const nlohmann::json& j) {
  AdamState state(j.at("learning_rate").get<double>());
  state.step = j.at("step").get<std::int64_t>();
  state.m = j.at("m").get<std::vector<std::vector<double>>>();
  state.v = j.at("v").get<std::vector<std::vector<double>>>();
  return state;
}

}  // namespace

void DdpgConfig::validate() const {
  if (tau <= 0.0 || tau > 1.0) throw std::invalid_argument("ddpg: tau must lie in (0, 1]");
  if (discount < 0.0 || discount > 1.0) {
    throw std::invalid_argument("ddpg: discount must lie in [0, 1]");
  }
  if (phi <= 1.0) throw std::invalid_argument("ddpg: phi must exceed 1");
  if (replay_capacity < 1) throw std::invalid_argument("ddpg: replay capacity must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("ddpg: batch size must be >= 1");
  if (batch_size > replay_capacity) {
    throw std::invalid_argument("ddpg: batch size exceeds replay capacity");
  }
  if (actor_lr <= 0.0 || critic_lr <= 0.0) {
    throw std::invalid_argument("ddpg: learning rates must be positive");
  }
  if (noise_std < 0.0) throw std::invalid_argument("ddpg: noise std must be nonnegative");
  if (noise_decay <= 0.0 || noise_decay > 1.0) {
    throw std::invalid_argument("ddpg: noise decay must lie in (0, 1]");
  }
  if (target_accuracy <= 0.0 || target_accuracy > 1.0) {
    throw std::invalid_argument("ddpg: target accuracy must lie in (0, 1]");
  }
}

double compute_reward(double accuracy, double phi, double target_accuracy) {
  if (accuracy < 0.0 || accuracy > 1.0) {
    throw std::invalid_argument("compute_reward: accuracy must lie in [0, 1]");
  }
  const double raw = std::pow(phi, accuracy - target_accuracy) - 1.0;
  return std::min(raw, 0.0);
}

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("replay buffer: capacity must be >= 1");
}

void ReplayBuffer::push(Transition t) {
  if (static_cast<int>(items_.size()) < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
    next_ = (next_ + 1) % static_cast<std::size_t>(capacity_);
  }
}

std::vector<Transition> ReplayBuffer::sample(int batch, Rng& rng) const {
  if (batch < 1) throw std::invalid_argument("replay buffer: batch must be >= 1");
  if (static_cast<int>(items_.size()) < batch) {
    throw std::runtime_error("replay buffer: cannot sample " + std::to_string(batch) +
                             " transitions from " + std::to_string(items_.size()));
  }
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) out.push_back(items_[rng.below(items_.size())]);
  return out;
}

void soft_update(MlpParams& target, const MlpParams& current, double tau) {
  if (!same_structure(target, current)) {
    throw std::invalid_argument("soft_update: networks differ in structure");
  }
  for (std::size_t l = 0; l < target.layers.size(); ++l) {
    auto blend = [tau](std::vector<double>& tgt, const std::vector<double>& cur) {
      for (std::size_t i = 0; i < tgt.size(); ++i) tgt[i] = tau * cur[i] + (1.0 - tau) * tgt[i];
    };
    blend(target.layers[l].weight.values(), current.layers[l].weight.values());
    blend(target.layers[l].bias.values(), current.layers[l].bias.values());
  }
}

double target_q(double reward, const AgentState& next_state, const MlpParams& target_actor,
                const MlpParams& target_critic, double discount) {
  Tensor s = Tensor::from_values({1, static_cast<int>(next_state.v.size())}, next_state.v);
  Tensor a = activate(forward_mlp(target_actor, s), Activation::sigmoid);
  Tensor q = forward_mlp(target_critic, concat_cols({s, a}));
  return reward + discount * q.item();
}

DdpgAgent::DdpgAgent(const DdpgConfig& config)
    : config_(config),
      actor_opt_(config.actor_lr),
      critic_opt_(config.critic_lr),
      replay_(config.replay_capacity) {}

DdpgAgent::DdpgAgent(int state_dim, const DdpgConfig& config, Rng& init_rng)
    : DdpgAgent(config) {
  if (state_dim < 1) throw std::invalid_argument("ddpg: state dim must be >= 1");
  config_.validate();
  state_dim_ = state_dim;
  actor_ = make_mlp(state_dim, config_.hidden, 1, Activation::relu, Activation::identity,
                    init_rng);
  critic_ = make_mlp(state_dim + 1, config_.hidden, 1, Activation::relu, Activation::identity,
                     init_rng);
  target_actor_ = clone_mlp(actor_);
  target_critic_ = clone_mlp(critic_);
}

double DdpgAgent::deterministic_action(const AgentState& state) const {
  if (static_cast<int>(state.v.size()) != state_dim_) {
    throw std::invalid_argument("ddpg: state has dim " + std::to_string(state.v.size()) +
                                ", agent expects " + std::to_string(state_dim_));
  }
  Tensor s = Tensor::from_values({1, state_dim_}, state.v);
  return activate(forward_mlp(actor_, s), Activation::sigmoid).item();
}

double DdpgAgent::select_action(const AgentState& state, double noise_std, Rng& rng) const {
  double beta = deterministic_action(state);
  if (noise_std > 0.0) beta += rng.normal(0.0, noise_std);
  return std::clamp(beta, 0.0, 1.0);
}

void DdpgAgent::update(Rng& rng) {
  update_batch(replay_.sample(config_.batch_size, rng));
}

void DdpgAgent::update_batch(const std::vector<Transition>& batch) {
  if (batch.empty()) throw std::invalid_argument("ddpg update: empty batch");
  const int n = static_cast<int>(batch.size());

  std::vector<const AgentState*> states, next_states;
  states.reserve(batch.size());
  next_states.reserve(batch.size());
  std::vector<double> actions, targets;
  actions.reserve(batch.size());
  for (const auto& t : batch) {
    states.push_back(&t.state);
    next_states.push_back(&t.next_state);
    actions.push_back(t.action);
  }
  Tensor s = batch_states(states);
  Tensor s_next = batch_states(next_states);
  Tensor a = Tensor::from_values({n, 1}, std::move(actions));

  // target Q-values (no gradients kept)
  {
    Tensor a_next = activate(forward_mlp(target_actor_, s_next), Activation::sigmoid);
    Tensor q_next = forward_mlp(target_critic_, concat_cols({s_next, a_next}));
    targets.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      targets[static_cast<std::size_t>(i)] =
          batch[static_cast<std::size_t>(i)].reward + config_.discount * q_next.values()[static_cast<std::size_t>(i)];
    }
  }
  zero_grad(parameters(target_actor_));
  zero_grad(parameters(target_critic_));

  // critic regression toward the target
  auto critic_params = parameters(critic_);
  auto actor_params = parameters(actor_);
  {
    Tensor q = forward_mlp(critic_, concat_cols({s, a}));
    Tensor y = Tensor::from_values({n, 1}, targets);
    Tensor loss = mean_all(square(sub(q, y)));
    backward(loss);
    adam_step(critic_params, critic_opt_);
    zero_grad(actor_params);
  }

  // actor ascends the critic through the chained action input
  {
    Tensor a_pred = activate(forward_mlp(actor_, s), Activation::sigmoid);
    Tensor q = forward_mlp(critic_, concat_cols({s, a_pred}));
    Tensor loss = neg(mean_all(q));
    backward(loss);
    adam_step(actor_params, actor_opt_);
    zero_grad(critic_params);
  }

  soft_update(target_actor_, actor_, config_.tau);
  soft_update(target_critic_, critic_, config_.tau);
}

void DdpgAgent::save_json(const std::string& path) const {
  nlohmann::json j;
  j["format"] = "flexmod-agent";
  j["version"] = 1;
  j["state_dim"] = state_dim_;
  j["config"] = {{"hidden", config_.hidden},
                 {"actor_lr", config_.actor_lr},
                 {"critic_lr", config_.critic_lr},
                 {"tau", config_.tau},
                 {"discount", config_.discount},
                 {"replay_capacity", config_.replay_capacity},
                 {"batch_size", config_.batch_size},
                 {"noise_std", config_.noise_std},
                 {"noise_decay", config_.noise_decay},
                 {"phi", config_.phi},
                 {"target_accuracy", config_.target_accuracy}};
  j["actor"] = mlp_to_json(actor_);
  j["critic"] = mlp_to_json(critic_);
  j["target_actor"] = mlp_to_json(target_actor_);
  j["target_critic"] = mlp_to_json(target_critic_);
  j["actor_opt"] = adam_to_json(actor_opt_);
  j["critic_opt"] = adam_to_json(critic_opt_);
  nlohmann::json replay = nlohmann::json::array();
  for (const auto& t : replay_.items()) {
    replay.push_back({{"state", t.state.v},
                      {"action", t.action},
                      {"reward", t.reward},
                      {"next_state", t.next_state.v}});
  }
  j["replay"] = std::move(replay);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save agent: cannot write '" + path + "'");
  out << j.dump() << "\n";
}

DdpgAgent DdpgAgent::load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load agent: cannot open '" + path + "'");
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "flexmod-agent") {
    throw std::runtime_error("load agent: '" + path + "' is not an agent checkpoint");
  }
  DdpgConfig config;
  const auto& cj = j.at("config");
  config.hidden = cj.at("hidden").get<std::vector<int>>();
  config.actor_lr = cj.at("actor_lr").get<double>();
  config.critic_lr = cj.at("critic_lr").get<double>();
  config.tau = cj.at("tau").get<double>();
  config.discount = cj.at("discount").get<double>();
  config.replay_capacity = cj.at("replay_capacity").get<int>();
  config.batch_size = cj.at("batch_size").get<int>();
  config.noise_std = cj.at("noise_std").get<double>();
  config.noise_decay = cj.at("noise_decay").get<double>();
  config.phi = cj.at("phi").get<double>();
  config.target_accuracy = cj.at("target_accuracy").get<double>();
  config.validate();

  DdpgAgent agent(config);
  agent.state_dim_ = j.at("state_dim").get<int>();
  agent.actor_ = mlp_from_json(j.at("actor"));
  agent.critic_ = mlp_from_json(j.at("critic"));
  agent.target_actor_ = mlp_from_json(j.at("target_actor"));
  agent.target_critic_ = mlp_from_json(j.at("target_critic"));
  agent.actor_opt_ = adam_from_json(j.at("actor_opt"));
  agent.critic_opt_ = adam_from_json(j.at("critic_opt"));
  for (const auto& tj : j.at("replay")) {
    Transition t;
    t.state.v = tj.at("state").get<std::vector<double>>();
    t.action = tj.at("action").get<double>();
    t.reward = tj.at("reward").get<double>();
    t.next_state.v = tj.at("next_state").get<std::vector<double>>();
    agent.replay_.push(std::move(t));
  }
  return agent;
}

}  // namespace flexmod
