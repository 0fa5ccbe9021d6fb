#include "flexmod/fedsim.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace flexmod {

EvalResult evaluate(const GlobalModel& model, const MultimodalDataset& dataset) {
  if (dataset.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<int> rows(static_cast<std::size_t>(dataset.size()));
  for (int i = 0; i < dataset.size(); ++i) rows[static_cast<std::size_t>(i)] = i;
  Tensor logits = forward_full(model, modality_inputs(model, dataset, rows));
  const int k = logits.dim(1);
  int correct = 0;
  for (int i = 0; i < dataset.size(); ++i) {
    const double* row = logits.values().data() + static_cast<std::size_t>(i) * k;
    int arg = 0;
    for (int j = 1; j < k; ++j) {
      if (row[j] > row[arg]) arg = j;
    }
    if (arg == dataset.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  EvalResult result;
  result.accuracy = static_cast<double>(correct) / dataset.size();
  result.loss = softmax_cross_entropy(logits, dataset.labels).item();
  return result;
}

namespace {

void aggregate_mlp(MlpParams& out, const std::vector<const MlpParams*>& sources) {
  const double n = static_cast<double>(sources.size());
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    auto blend = [&](std::vector<double>& dst, auto pick) {
      const std::vector<double>& base = pick(*sources[0]);
      for (std::size_t i = 0; i < dst.size(); ++i) {
        double delta = 0.0;
        for (std::size_t c = 1; c < sources.size(); ++c) delta += pick(*sources[c])[i] - base[i];
        dst[i] = base[i] + delta / n;
      }
    };
    blend(out.layers[l].weight.values(),
          [l](const MlpParams& p) -> const std::vector<double>& { return p.layers[l].weight.values(); });
    blend(out.layers[l].bias.values(),
          [l](const MlpParams& p) -> const std::vector<double>& { return p.layers[l].bias.values(); });
  }
}

}  // namespace

GlobalModel aggregate(const std::vector<GlobalModel>& models) {
  if (models.empty()) throw std::invalid_argument("aggregate: no models");
  for (std::size_t i = 1; i < models.size(); ++i) check_same_structure(models[0], models[i]);

  GlobalModel out = clone_model(models[0]);
  std::vector<const MlpParams*> sources(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) sources[i] = &models[i].header;
  aggregate_mlp(out.header, sources);
  for (int m = 0; m < out.modalities(); ++m) {
    for (std::size_t i = 0; i < models.size(); ++i) {
      sources[i] = &models[i].encoders[static_cast<std::size_t>(m)];
    }
    aggregate_mlp(out.encoders[static_cast<std::size_t>(m)], sources);
  }
  return out;
}

LocalTrainResult local_train(const GlobalModel& global, const MultimodalDataset& data,
                             const std::vector<int>& rows, const Schedule& schedule,
                             int batch_size, SgdConfig sgd, Rng rng, bool sweep_per_slot) {
  if (batch_size < 1) throw std::invalid_argument("local_train: batch size must be >= 1");
  LocalTrainResult result{clone_model(global), sgd, 0.0};
  if (schedule.slots.empty()) return result;

  GlobalModel& model = result.model;
  const auto all_params = model_parameters(model);
  std::vector<std::vector<Tensor>> encoder_params;
  encoder_params.reserve(static_cast<std::size_t>(model.modalities()));
  for (const auto& enc : model.encoders) encoder_params.push_back(parameters(enc));
  const auto header_params = parameters(model.header);

  std::vector<int> order(rows);
  for (int mask : schedule.slots) {
    rng.shuffle(order);
    const std::size_t total = sweep_per_slot
                                  ? order.size()
                                  : std::min<std::size_t>(order.size(),
                                                          static_cast<std::size_t>(batch_size));
    for (std::size_t start = 0; start < total; start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(total, start + static_cast<std::size_t>(batch_size));
      std::vector<int> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
      Tensor loss = softmax_cross_entropy(
          forward_full(model, modality_inputs(model, data, batch)), label_batch(data, batch));
      backward(loss);

      for (int m = 0; m < model.modalities(); ++m) {
        result.max_encoder_grad_norm = std::max(
            result.max_encoder_grad_norm, grad_l2_norm(encoder_params[static_cast<std::size_t>(m)]));
      }

      // header always steps; only the slot's member encoders do
      std::vector<Tensor> selected = header_params;
      for (int m = 0; m < model.modalities(); ++m) {
        if (mask & (1 << m)) {
          selected.insert(selected.end(), encoder_params[static_cast<std::size_t>(m)].begin(),
                          encoder_params[static_cast<std::size_t>(m)].end());
        }
      }
      sgd_step(selected, result.sgd);
      zero_grad(all_params);  // discard the non-selected encoders' gradients
    }
  }
  return result;
}

std::vector<std::string> unit_time_warnings(int modalities,
                                            const std::vector<int>& unit_time_by_mask) {
  CombinationTable table;
  table.modalities = modalities;
  table.unit_time = unit_time_by_mask;
  table.quality.assign(unit_time_by_mask.size(), 0.0);
  table.importance.assign(unit_time_by_mask.size(), 0.0);
  table.validate();
  return table.subadditivity_warnings();
}

Simulation::Simulation(const ExperimentConfig& config) : config_(config) {
  config_.validate();
#ifdef _OPENMP
  if (config_.run.threads > 0) omp_set_num_threads(config_.run.threads);
#endif

  const std::uint64_t seed = config_.run.seed;
  MultimodalDataset full = config_.dataset.synthetic
                               ? synthesize(config_.dataset.synth, seed)
                               : load_csv(config_.dataset.csv_paths, config_.dataset.label_column);
  if (!config_.dataset.synthetic) {
    if (full.num_modalities != config_.modalities()) {
      throw ConfigError("config: dataset.csv.paths: file count does not match model modalities");
    }
    for (int m = 0; m < config_.modalities(); ++m) {
      if (full.features[static_cast<std::size_t>(m)].cols !=
          config_.model.input_dims[static_cast<std::size_t>(m)]) {
        throw ConfigError("config: model.input_dims[" + std::to_string(m) + "] = " +
                          std::to_string(config_.model.input_dims[static_cast<std::size_t>(m)]) +
                          " but CSV provides " +
                          std::to_string(full.features[static_cast<std::size_t>(m)].cols) +
                          " feature columns");
      }
    }
    if (full.num_classes != config_.model.classes) {
      throw ConfigError("config: model.classes = " + std::to_string(config_.model.classes) +
                        " but the CSV data has " + std::to_string(full.num_classes) + " classes");
    }
  }

  auto [train, validation] = split_validation(full, config_.dataset.validation_fraction, seed);
  train_ = std::move(train);
  validation_ = std::move(validation);
  shards_ = partition_dirichlet(train_, config_.dataset.clients, config_.dataset.alpha, seed);

  Rng init = substream(seed, "model.init");
  model_ = make_global_model(config_.model, init);
  sgd_ = config_.sgd;
  noise_std_ = config_.agent.noise_std;

  if (config_.schedule.strategy.kind == StrategyKind::Kind::flexmod) {
    if (config_.agent_checkpoint) {
      agent_ = DdpgAgent::load_json(*config_.agent_checkpoint);
      if (agent_->state_dim() != 2 * config_.modalities()) {
        throw ConfigError("config: agent.load_checkpoint: checkpoint state dim " +
                          std::to_string(agent_->state_dim()) + " does not match 2M = " +
                          std::to_string(2 * config_.modalities()));
      }
    } else {
      Rng agent_init = substream(seed, "agent.init");
      agent_.emplace(2 * config_.modalities(), config_.agent, agent_init);
    }
  }

  compute_indices(gamma_hat_, omega_hat_);
}

void Simulation::compute_indices(std::vector<double>& gamma_hat,
                                 std::vector<double>& omega_hat) const {
  const int clients = static_cast<int>(shards_.size());
  const int modalities = config_.modalities();

  // clients report normalized local prototypes, independently of each other
  std::vector<std::vector<Prototype>> per_client(static_cast<std::size_t>(clients));
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (int c = 0; c < clients; ++c) {
    try {
      auto protos = local_prototypes(model_.encoders, train_, shards_[static_cast<std::size_t>(c)].rows);
      for (auto& p : protos) p = normalize_prototype(p);
      per_client[static_cast<std::size_t>(c)] = std::move(protos);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  const auto globals = global_prototypes(per_client, modalities, train_.num_classes);
  auto omega_raw = quality_raw(globals, modalities, train_.num_classes);
  const bool omega_dead = std::all_of(omega_raw.begin(), omega_raw.end(),
                                      [](double x) { return x == 0.0; });
  if (omega_dead) {
    // every modality's prototypes are at-or-beyond orthogonal: no differential
    // quality signal, fall back to equal need
    omega_hat.assign(static_cast<std::size_t>(modalities),
                     1.0 / std::sqrt(static_cast<double>(modalities)));
  } else {
    omega_hat = normalize_quality(omega_raw).omega;
  }

  auto shap = shapley_values(model_, validation_);
  bool gamma_dead = true;
  for (double g : shap.raw) gamma_dead = gamma_dead && g >= 0.0;
  if (gamma_dead) {
    // a freshly initialized model can transiently have no loss-reducing
    // modality; treat them as equally important instead of aborting the run
    gamma_hat.assign(static_cast<std::size_t>(modalities),
                     1.0 / std::sqrt(static_cast<double>(modalities)));
  } else {
    gamma_hat = normalize_importance(shap.raw).gamma;
  }
}

AllocationVector Simulation::decide_allocation(const CombinationTable& table, double beta) const {
  const int s_max = table.combinations();
  const int budget = config_.schedule.budget;
  AllocationVector alloc;
  alloc.counts.assign(static_cast<std::size_t>(s_max) + 1, 0);
  alloc.round = round_ + 1;

  const auto& strategy = config_.schedule.strategy;
  switch (strategy.kind) {
    case StrategyKind::Kind::entire_update: {
      alloc.counts[static_cast<std::size_t>(s_max)] =
          budget / table.unit_time[static_cast<std::size_t>(s_max)];
      return alloc;
    }
    case StrategyKind::Kind::single_modality: {
      const int mask = 1 << strategy.modality;
      alloc.counts[static_cast<std::size_t>(mask)] =
          budget / table.unit_time[static_cast<std::size_t>(mask)];
      return alloc;
    }
    case StrategyKind::Kind::flexmod:
    case StrategyKind::Kind::fixed_beta: {
      if (config_.schedule.pin_full_combination) {
        alloc.counts[static_cast<std::size_t>(s_max)] =
            budget / table.unit_time[static_cast<std::size_t>(s_max)];
        return alloc;
      }
      AllocationVector solved = solve_allocation(table, beta, budget);
      solved.round = alloc.round;
      return solved;
    }
  }
  return alloc;
}

RoundRecord Simulation::run_round() {
  round_ += 1;
  RoundRecord record;
  record.round = round_;
  record.budget = config_.schedule.budget;
  record.gamma = gamma_hat_;
  record.omega = omega_hat_;

  // the agent acts on the indices computed before the round
  AgentState state;
  state.v = gamma_hat_;
  state.v.insert(state.v.end(), omega_hat_.begin(), omega_hat_.end());

  double beta = 0.0;
  if (config_.schedule.strategy.kind == StrategyKind::Kind::flexmod) {
    Rng noise = substream(config_.run.seed, "agent.noise", round_);
    beta = agent_->select_action(state, noise_std_, noise);
    noise_std_ *= config_.agent.noise_decay;
  } else if (config_.schedule.strategy.kind == StrategyKind::Kind::fixed_beta) {
    beta = config_.schedule.strategy.beta;
  }
  record.beta = beta;

  const CombinationTable table =
      CombinationTable::build(config_.modalities(), config_.schedule.unit_time_by_mask,
                              QualityVector{omega_hat_}, ImportanceVector{gamma_hat_});
  const AllocationVector allocation = decide_allocation(table, beta);
  const Schedule schedule = order_schedule(allocation, table);
  record.allocation = allocation.counts;
  record.schedule = schedule.slots;
  record.budget_used = time_cost(allocation, table);

  // every client trains from the same snapshot; client order fixes nothing
  // because each result lands in its own slot
  const int clients = static_cast<int>(shards_.size());
  std::vector<GlobalModel> locals(static_cast<std::size_t>(clients));
  std::vector<SgdConfig> sgd_after(static_cast<std::size_t>(clients), sgd_);
  std::vector<double> grad_norms(static_cast<std::size_t>(clients), 0.0);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (int c = 0; c < clients; ++c) {
    try {
      auto result = local_train(model_, train_, shards_[static_cast<std::size_t>(c)].rows, schedule,
                                config_.batch_size, sgd_,
                                substream(config_.run.seed, "batch", round_, c),
                                config_.schedule.sweep_per_slot);
      locals[static_cast<std::size_t>(c)] = std::move(result.model);
      sgd_after[static_cast<std::size_t>(c)] = result.sgd;
      grad_norms[static_cast<std::size_t>(c)] = result.max_encoder_grad_norm;
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  model_ = aggregate(locals);
  // equal shards and a shared schedule give every client the same eta
  // trajectory, so client 0's decayed config is the new global one
  sgd_ = sgd_after[0];
  for (double g : grad_norms) record.max_grad_norm = std::max(record.max_grad_norm, g);
  max_grad_norm_ = std::max(max_grad_norm_, record.max_grad_norm);

  const EvalResult eval = evaluate(model_, validation_);
  record.accuracy = eval.accuracy;
  record.loss = eval.loss;
  record.reward = compute_reward(eval.accuracy, config_.agent.phi, config_.agent.target_accuracy);

  // indices of the just-aggregated model: the state of the next round and the
  // closing half of this round's transition
  compute_indices(gamma_hat_, omega_hat_);
  if (config_.schedule.strategy.kind == StrategyKind::Kind::flexmod) {
    AgentState next_state;
    next_state.v = gamma_hat_;
    next_state.v.insert(next_state.v.end(), omega_hat_.begin(), omega_hat_.end());
    agent_->observe(Transition{std::move(state), beta, record.reward, std::move(next_state)});
    if (agent_->ready()) {
      Rng update_rng = substream(config_.run.seed, "agent.update", round_);
      agent_->update(update_rng);
    }
  }
  return record;
}

ExperimentResult Simulation::run() {
  ExperimentResult result;
  result.warnings = unit_time_warnings(config_.modalities(), config_.schedule.unit_time_by_mask);
  result.initial_accuracy = evaluate(model_, validation_).accuracy;
  result.final_accuracy = result.initial_accuracy;

  for (int r = 0; r < config_.run.rounds; ++r) {
    RoundRecord record = run_round();
    result.final_accuracy = record.accuracy;
    result.total_idle_time += record.budget - record.budget_used;
    const bool hit_target = record.accuracy >= config_.agent.target_accuracy;
    if (result.rounds_to_target < 0 && hit_target) result.rounds_to_target = record.round;
    result.rounds.push_back(std::move(record));
    if (config_.run.early_stop && hit_target) break;
  }
  result.final_model = clone_model(model_);
  if (agent_) result.agent = *agent_;
  result.delta_estimate = max_grad_norm_;
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  Simulation sim(config);
  return sim.run();
}

}  // namespace flexmod
