// Server-side agent that picks the utility blend weight each round: DDPG with
// a sigmoid scalar action, Gaussian exploration noise, experience replay and
// soft target updates.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flexmod/nn.hpp"

namespace flexmod {

// (gamma_hat_1..M, omega_hat_1..M); both halves are unit-normalized upstream.
struct AgentState {
  std::vector<double> v;
};

struct Transition {
  AgentState state;
  double action = 0.0;  // beta in [0, 1]
  double reward = 0.0;
  AgentState next_state;
};

struct DdpgConfig {
  std::vector<int> hidden{64, 64, 64};
  double actor_lr = 1e-4;
  double critic_lr = 1e-4;
  double tau = 1e-3;
  double discount = 0.99;
  int replay_capacity = 256;
  int batch_size = 8;
  double noise_std = 0.2;
  double noise_decay = 0.995;
  double phi = 64.0;
  double target_accuracy = 0.68;

  void validate() const;
};

// phi^(acc - target) - 1, clamped from above at 0 so the reward stays in
// [-1, 0].
double compute_reward(double accuracy, double phi, double target_accuracy);

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);

  void push(Transition t);  // FIFO eviction at capacity
  std::vector<Transition> sample(int batch, Rng& rng) const;
  int size() const { return static_cast<int>(items_.size()); }
  int capacity() const { return capacity_; }
  const std::vector<Transition>& items() const { return items_; }

 private:
  int capacity_;
  std::size_t next_ = 0;  // overwrite cursor once full
  std::vector<Transition> items_;
};

void soft_update(MlpParams& target, const MlpParams& current, double tau);

double target_q(double reward, const AgentState& next_state, const MlpParams& target_actor,
                const MlpParams& target_critic, double discount);

class DdpgAgent {
 public:
  DdpgAgent(int state_dim, const DdpgConfig& config, Rng& init_rng);

  // beta = clamp(sigmoid(actor(state)) + N(0, noise_std), 0, 1)
  double select_action(const AgentState& state, double noise_std, Rng& rng) const;
  double deterministic_action(const AgentState& state) const;

  void observe(Transition t) { replay_.push(std::move(t)); }
  bool ready() const { return replay_.size() >= config_.batch_size; }

  // One critic step toward the target Q, one actor step up the critic, then
  // soft target updates.
  void update(Rng& rng);
  void update_batch(const std::vector<Transition>& batch);

  const DdpgConfig& config() const { return config_; }
  ReplayBuffer& replay() { return replay_; }
  const MlpParams& actor() const { return actor_; }
  const MlpParams& critic() const { return critic_; }
  const MlpParams& target_actor() const { return target_actor_; }
  const MlpParams& target_critic() const { return target_critic_; }
  MlpParams& mutable_actor() { return actor_; }
  int state_dim() const { return state_dim_; }

  void save_json(const std::string& path) const;
  static DdpgAgent load_json(const std::string& path);

 private:
  DdpgAgent(const DdpgConfig& config);

  int state_dim_ = 0;
  DdpgConfig config_;
  MlpParams actor_, critic_, target_actor_, target_critic_;
  AdamState actor_opt_, critic_opt_;
  ReplayBuffer replay_;
};

}  // namespace flexmod
