#include "flexmod/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace flexmod {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

const json& require(const json& parent, const std::string& path, const std::string& key) {
  auto it = parent.find(key);
  if (it == parent.end()) fail(path + "." + key, "missing required field");
  return *it;
}

template <class T>
T get_as(const json& parent, const std::string& path, const std::string& key) {
  try {
    return require(parent, path, key).get<T>();
  } catch (const json::exception& e) {
    fail(path + "." + key, std::string("bad value (") + e.what() + ")");
  }
}

template <class T>
T get_or(const json& parent, const std::string& path, const std::string& key, T fallback) {
  auto it = parent.find(key);
  if (it == parent.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    fail(path + "." + key, std::string("bad value (") + e.what() + ")");
  }
}

// "1,3" -> mask with modality bits 1 and 3 set (1-based in config files)
int parse_combination_key(const std::string& key, int modalities, const std::string& path) {
  std::stringstream ss(key);
  std::string part;
  int mask = 0;
  while (std::getline(ss, part, ',')) {
    int m = 0;
    try {
      m = std::stoi(part);
    } catch (...) {
      fail(path, "combination key '" + key + "' is not a comma-separated modality list");
    }
    if (m < 1 || m > modalities) {
      fail(path, "combination key '" + key + "' references modality " + std::to_string(m) +
                     " outside 1.." + std::to_string(modalities));
    }
    mask |= 1 << (m - 1);
  }
  if (mask == 0) fail(path, "combination key '" + key + "' is empty");
  return mask;
}

std::string combination_name(int mask) {
  std::string name;
  for (int m = 0; mask >> m; ++m) {
    if (mask & (1 << m)) name += (name.empty() ? "" : ",") + std::to_string(m + 1);
  }
  return name;
}

}  // namespace

StrategyKind StrategyKind::parse(const std::string& text, int modalities) {
  StrategyKind s;
  if (text == "flexmod") {
    s.kind = Kind::flexmod;
    return s;
  }
  if (text == "entire_update") {
    s.kind = Kind::entire_update;
    return s;
  }
  if (text.rfind("single_modality:", 0) == 0) {
    s.kind = Kind::single_modality;
    int m = 0;
    try {
      m = std::stoi(text.substr(16));
    } catch (...) {
      throw ConfigError("strategy: cannot parse modality in '" + text + "'");
    }
    if (m < 1 || m > modalities) {
      throw ConfigError("strategy: single_modality index " + std::to_string(m) +
                        " outside 1.." + std::to_string(modalities));
    }
    s.modality = m - 1;
    return s;
  }
  if (text.rfind("fixed_beta:", 0) == 0) {
    s.kind = Kind::fixed_beta;
    try {
      s.beta = std::stod(text.substr(11));
    } catch (...) {
      throw ConfigError("strategy: cannot parse beta in '" + text + "'");
    }
    if (s.beta < 0.0 || s.beta > 1.0) {
      throw ConfigError("strategy: fixed beta must lie in [0, 1]");
    }
    return s;
  }
  throw ConfigError("strategy: unknown strategy '" + text +
                    "' (expected flexmod, entire_update, single_modality:<m> or fixed_beta:<v>)");
}

std::string StrategyKind::to_string() const {
  switch (kind) {
    case Kind::flexmod: return "flexmod";
    case Kind::entire_update: return "entire_update";
    case Kind::single_modality: return "single_modality:" + std::to_string(modality + 1);
    case Kind::fixed_beta: {
      std::ostringstream ss;
      ss << "fixed_beta:" << beta;
      return ss.str();
    }
  }
  return "flexmod";
}

void ExperimentConfig::validate() const {
  const int m = modalities();
  if (m < 1) throw ConfigError("config: model.input_dims: need at least one modality");
  try {
    model.validate();
    sgd.validate();
    agent.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (dataset.synthetic) {
    if (dataset.synth.modalities != m) {
      throw ConfigError("config: dataset.synthetic.dims: modality count " +
                        std::to_string(dataset.synth.modalities) + " does not match model (" +
                        std::to_string(m) + ")");
    }
    for (int i = 0; i < m; ++i) {
      if (dataset.synth.dims[static_cast<std::size_t>(i)] !=
          model.input_dims[static_cast<std::size_t>(i)]) {
        throw ConfigError("config: model.input_dims[" + std::to_string(i) +
                          "] does not match dataset.synthetic.dims");
      }
    }
  } else if (static_cast<int>(dataset.csv_paths.size()) != m) {
    throw ConfigError("config: dataset.csv.paths: expected one file per modality");
  }
  if (dataset.clients < 1) throw ConfigError("config: dataset.clients: must be >= 1");
  if (dataset.alpha <= 0.0) throw ConfigError("config: dataset.alpha: must be positive");
  if (dataset.validation_fraction <= 0.0 || dataset.validation_fraction >= 1.0) {
    throw ConfigError("config: dataset.validation_fraction: must lie strictly in (0, 1)");
  }
  const int s_max = (1 << m) - 1;
  if (static_cast<int>(schedule.unit_time_by_mask.size()) != s_max + 1) {
    throw ConfigError("config: schedule.unit_times: internal size mismatch");
  }
  for (int mask = 1; mask <= s_max; ++mask) {
    if (schedule.unit_time_by_mask[static_cast<std::size_t>(mask)] < 1) {
      throw ConfigError("config: schedule.unit_times: missing or invalid entry for combination {" +
                        combination_name(mask) + "}");
    }
  }
  if (schedule.budget < 0) throw ConfigError("config: schedule.budget: must be nonnegative");
  if (batch_size < 1) throw ConfigError("config: sgd.batch_size: must be >= 1");
  if (run.rounds < 0) throw ConfigError("config: run.rounds: must be nonnegative");
  if (run.threads < 0) throw ConfigError("config: run.threads: must be nonnegative");
}

ExperimentConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  ExperimentConfig config;

  const json& model = require(j, "", "model");
  config.model.input_dims = get_as<std::vector<int>>(model, "model", "input_dims");
  config.model.encoder_hidden =
      get_as<std::vector<std::vector<int>>>(model, "model", "encoder_hidden");
  config.model.header_hidden = get_as<std::vector<int>>(model, "model", "header_hidden");
  config.model.feature_dim = get_as<int>(model, "model", "feature_dim");
  config.model.classes = get_as<int>(model, "model", "classes");
  const int modalities = config.modalities();

  const json& dataset = require(j, "", "dataset");
  const std::string kind = get_as<std::string>(dataset, "dataset", "type");
  if (kind == "synthetic") {
    config.dataset.synthetic = true;
    const json& synth = require(dataset, "dataset", "synthetic");
    config.dataset.synth.modalities = modalities;
    config.dataset.synth.classes = config.model.classes;
    config.dataset.synth.dims = config.model.input_dims;
    config.dataset.synth.samples = get_as<int>(synth, "dataset.synthetic", "samples");
    config.dataset.synth.informativeness =
        get_as<std::vector<double>>(synth, "dataset.synthetic", "informativeness");
    config.dataset.synth.noise = get_or<double>(synth, "dataset.synthetic", "noise", 1.0);
    if (static_cast<int>(config.dataset.synth.informativeness.size()) != modalities) {
      fail("dataset.synthetic.informativeness", "expected one value per modality");
    }
  } else if (kind == "csv") {
    config.dataset.synthetic = false;
    const json& csv = require(dataset, "dataset", "csv");
    config.dataset.csv_paths = get_as<std::vector<std::string>>(csv, "dataset.csv", "paths");
    config.dataset.label_column = get_as<std::string>(csv, "dataset.csv", "label_column");
  } else {
    fail("dataset.type", "expected 'synthetic' or 'csv', got '" + kind + "'");
  }
  config.dataset.clients = get_as<int>(dataset, "dataset", "clients");
  config.dataset.alpha = get_or<double>(dataset, "dataset", "alpha", 10.0);
  config.dataset.validation_fraction =
      get_or<double>(dataset, "dataset", "validation_fraction", 0.01);

  const json& schedule = require(j, "", "schedule");
  const json& times = require(schedule, "schedule", "unit_times");
  const int s_max = (1 << modalities) - 1;
  config.schedule.unit_time_by_mask.assign(static_cast<std::size_t>(s_max) + 1, 0);
  for (auto it = times.begin(); it != times.end(); ++it) {
    const int mask = parse_combination_key(it.key(), modalities, "schedule.unit_times");
    int t = 0;
    try {
      t = it.value().get<int>();
    } catch (const json::exception&) {
      fail("schedule.unit_times", "value for '" + it.key() + "' is not an integer");
    }
    if (t < 1) fail("schedule.unit_times", "unit time for '" + it.key() + "' must be >= 1");
    config.schedule.unit_time_by_mask[static_cast<std::size_t>(mask)] = t;
  }
  for (int mask = 1; mask <= s_max; ++mask) {
    if (config.schedule.unit_time_by_mask[static_cast<std::size_t>(mask)] == 0) {
      fail("schedule.unit_times", "missing entry for combination {" + combination_name(mask) + "}");
    }
  }
  config.schedule.budget = get_as<int>(schedule, "schedule", "budget");
  config.schedule.strategy =
      StrategyKind::parse(get_or<std::string>(schedule, "schedule", "strategy", "flexmod"),
                          modalities);
  config.schedule.pin_full_combination =
      get_or<bool>(schedule, "schedule", "pin_full_combination", false);
  const std::string granularity =
      get_or<std::string>(schedule, "schedule", "slot_granularity", "sweep");
  if (granularity == "sweep") {
    config.schedule.sweep_per_slot = true;
  } else if (granularity == "minibatch") {
    config.schedule.sweep_per_slot = false;
  } else {
    fail("schedule.slot_granularity", "expected 'sweep' or 'minibatch'");
  }

  const json& sgd = require(j, "", "sgd");
  config.sgd.learning_rate = get_as<double>(sgd, "sgd", "learning_rate");
  config.sgd.decay = get_or<double>(sgd, "sgd", "decay", 1.0);
  config.sgd.floor = get_or<double>(sgd, "sgd", "floor", 1e-6);
  config.batch_size = get_or<int>(sgd, "sgd", "batch_size", 64);

  if (j.contains("agent")) {
    const json& agent = j["agent"];
    config.agent.hidden = get_or<std::vector<int>>(agent, "agent", "hidden", {64, 64, 64});
    config.agent.actor_lr = get_or<double>(agent, "agent", "actor_lr", 1e-4);
    config.agent.critic_lr = get_or<double>(agent, "agent", "critic_lr", 1e-4);
    config.agent.tau = get_or<double>(agent, "agent", "tau", 1e-3);
    config.agent.discount = get_or<double>(agent, "agent", "discount", 0.99);
    config.agent.replay_capacity = get_or<int>(agent, "agent", "replay_capacity", 256);
    config.agent.batch_size = get_or<int>(agent, "agent", "batch_size", 8);
    config.agent.noise_std = get_or<double>(agent, "agent", "noise_std", 0.2);
    config.agent.noise_decay = get_or<double>(agent, "agent", "noise_decay", 0.995);
    config.agent.phi = get_or<double>(agent, "agent", "phi", 64.0);
    if (agent.contains("load_checkpoint") && !agent["load_checkpoint"].is_null()) {
      config.agent_checkpoint = get_as<std::string>(agent, "agent", "load_checkpoint");
    }
  }

  const json& run = require(j, "", "run");
  config.run.rounds = get_as<int>(run, "run", "rounds");
  config.run.seed = get_or<std::uint64_t>(run, "run", "seed", 1);
  config.run.early_stop = get_or<bool>(run, "run", "early_stop", false);
  config.agent.target_accuracy = get_or<double>(run, "run", "target_accuracy", 0.68);
  config.run.output_dir = get_or<std::string>(run, "run", "output_dir", "out");
  config.run.threads = get_or<int>(run, "run", "threads", 0);

  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_json(ss.str());
}

std::string canonical_config_json(const ExperimentConfig& config) {
  json j;
  j["model"] = {{"input_dims", config.model.input_dims},
                {"encoder_hidden", config.model.encoder_hidden},
                {"header_hidden", config.model.header_hidden},
                {"feature_dim", config.model.feature_dim},
                {"classes", config.model.classes}};
  if (config.dataset.synthetic) {
    j["dataset"] = {{"type", "synthetic"},
                    {"samples", config.dataset.synth.samples},
                    {"informativeness", config.dataset.synth.informativeness},
                    {"noise", config.dataset.synth.noise}};
  } else {
    j["dataset"] = {{"type", "csv"},
                    {"paths", config.dataset.csv_paths},
                    {"label_column", config.dataset.label_column}};
  }
  j["dataset"]["clients"] = config.dataset.clients;
  j["dataset"]["alpha"] = config.dataset.alpha;
  j["dataset"]["validation_fraction"] = config.dataset.validation_fraction;
  json times;
  for (int mask = 1; mask < static_cast<int>(config.schedule.unit_time_by_mask.size()); ++mask) {
    times[combination_name(mask)] = config.schedule.unit_time_by_mask[static_cast<std::size_t>(mask)];
  }
  j["schedule"] = {{"unit_times", times},
                   {"budget", config.schedule.budget},
                   {"strategy", config.schedule.strategy.to_string()},
                   {"pin_full_combination", config.schedule.pin_full_combination},
                   {"slot_granularity", config.schedule.sweep_per_slot ? "sweep" : "minibatch"}};
  j["sgd"] = {{"learning_rate", config.sgd.learning_rate},
              {"decay", config.sgd.decay},
              {"floor", config.sgd.floor},
              {"batch_size", config.batch_size}};
  j["agent"] = {{"hidden", config.agent.hidden},
                {"actor_lr", config.agent.actor_lr},
                {"critic_lr", config.agent.critic_lr},
                {"tau", config.agent.tau},
                {"discount", config.agent.discount},
                {"replay_capacity", config.agent.replay_capacity},
                {"batch_size", config.agent.batch_size},
                {"noise_std", config.agent.noise_std},
                {"noise_decay", config.agent.noise_decay},
                {"phi", config.agent.phi}};
  j["run"] = {{"rounds", config.run.rounds},
              {"seed", config.run.seed},
              {"early_stop", config.run.early_stop},
              {"target_accuracy", config.agent.target_accuracy},
              {"threads", config.run.threads}};
  return j.dump();
}

std::string config_hash(const ExperimentConfig& config) {
  const std::uint64_t h = fnv1a64(canonical_config_json(config));
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buffer);
}

}  // namespace flexmod
