// Round-driven orchestration: prototypes and Shapley indices feed the agent,
// the agent's blend weight feeds the allocator, clients train the scheduled
// combinations from the same snapshot, and the server aggregates, evaluates
// and rewards.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flexmod/config.hpp"
#include "flexmod/data.hpp"
#include "flexmod/ddpg.hpp"
#include "flexmod/model.hpp"
#include "flexmod/scheduler.hpp"

namespace flexmod {

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

// Accuracy by argmax with ties broken toward the lowest class index.
EvalResult evaluate(const GlobalModel& model, const MultimodalDataset& dataset);

// Per-parameter arithmetic mean with equal client weights, computed in delta
// form (w0 + sum(wi - w0)/N) so aggregating identical models returns them
// bit-exactly.
GlobalModel aggregate(const std::vector<GlobalModel>& models);

struct LocalTrainResult {
  GlobalModel model;
  SgdConfig sgd;
  double max_encoder_grad_norm = 0.0;  // over all modalities and steps
};

// Runs the ordered schedule on a copy of the global model. Every slot forwards
// all encoders but steps only the header and the slot's member encoders;
// other encoders' gradients are discarded. A slot is one shuffled pass over
// the shard in minibatches (or a single minibatch when sweep_per_slot is
// false).
LocalTrainResult local_train(const GlobalModel& global, const MultimodalDataset& data,
                             const std::vector<int>& rows, const Schedule& schedule,
                             int batch_size, SgdConfig sgd, Rng rng, bool sweep_per_slot = true);

struct RoundRecord {
  int round = 0;  // 1-based
  double beta = 0.0;
  std::vector<int> allocation;  // counts by combination mask, slot 0 unused
  std::vector<int> schedule;    // ordered slot masks
  std::vector<double> omega;    // normalized quality indices at round start
  std::vector<double> gamma;    // normalized importance indices at round start
  double accuracy = 0.0;
  double loss = 0.0;
  double reward = 0.0;
  long long budget_used = 0;
  long long budget = 0;
  double max_grad_norm = 0.0;
};

struct ExperimentResult {
  std::vector<RoundRecord> rounds;
  GlobalModel final_model;
  std::optional<DdpgAgent> agent;
  int rounds_to_target = -1;  // first round reaching the target, -1 if never
  double final_accuracy = 0.0;
  double initial_accuracy = 0.0;
  long long total_idle_time = 0;
  double delta_estimate = 0.0;  // max observed per-modality gradient norm
  std::vector<std::string> warnings;
};

// One full simulation. Exposes run_round so tests can drive rounds singly.
class Simulation {
 public:
  explicit Simulation(const ExperimentConfig& config);

  RoundRecord run_round();
  ExperimentResult run();

  const GlobalModel& model() const { return model_; }
  const MultimodalDataset& validation() const { return validation_; }
  const MultimodalDataset& train() const { return train_; }
  const std::vector<ClientShard>& shards() const { return shards_; }
  const std::optional<DdpgAgent>& agent() const { return agent_; }
  int round() const { return round_; }

 private:
  void compute_indices(std::vector<double>& gamma_hat, std::vector<double>& omega_hat) const;
  AllocationVector decide_allocation(const CombinationTable& table, double beta) const;

  ExperimentConfig config_;
  MultimodalDataset train_, validation_;
  std::vector<ClientShard> shards_;
  GlobalModel model_;
  std::optional<DdpgAgent> agent_;
  SgdConfig sgd_;
  double noise_std_ = 0.0;
  int round_ = 0;
  std::vector<double> gamma_hat_, omega_hat_;  // indices for the upcoming round
  double max_grad_norm_ = 0.0;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

std::vector<std::string> unit_time_warnings(int modalities,
                                            const std::vector<int>& unit_time_by_mask);

}  // namespace flexmod
