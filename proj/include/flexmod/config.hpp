// Experiment configuration: one JSON document fully determines a run. Field
// errors are reported with their JSON path and mapped to exit code 2 by the
// CLI.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexmod/data.hpp"
#include "flexmod/ddpg.hpp"
#include "flexmod/model.hpp"
#include "flexmod/nn.hpp"

namespace flexmod {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StrategyKind {
  enum class Kind { flexmod, entire_update, single_modality, fixed_beta };
  Kind kind = Kind::flexmod;
  int modality = 0;    // 0-based, single_modality only
  double beta = 0.5;   // fixed_beta only

  static StrategyKind parse(const std::string& text, int modalities);
  std::string to_string() const;
};

struct DatasetConfig {
  bool synthetic = true;
  SyntheticSpec synth;                 // synthetic path
  std::vector<std::string> csv_paths;  // csv path
  std::string label_column = "label";
  int clients = 10;
  double alpha = 10.0;
  double validation_fraction = 0.01;
};

struct ScheduleConfig {
  std::vector<int> unit_time_by_mask;  // index 0 unused
  int budget = 24;
  StrategyKind strategy;
  bool pin_full_combination = false;  // debug: bypass the solver with the full combination
  bool sweep_per_slot = true;         // one pass over the shard per slot; else one minibatch
};

struct RunConfig {
  int rounds = 30;
  std::uint64_t seed = 1;
  bool early_stop = false;
  std::string output_dir = "out";
  int threads = 0;  // 0 = library default
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelSpec model;
  ScheduleConfig schedule;
  SgdConfig sgd;
  int batch_size = 64;
  DdpgConfig agent;
  std::optional<std::string> agent_checkpoint;  // warm start
  RunConfig run;

  int modalities() const { return model.modalities(); }
  void validate() const;
};

ExperimentConfig parse_config_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
// Canonical serialization; hashing it identifies the run setup.
std::string canonical_config_json(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

}  // namespace flexmod
