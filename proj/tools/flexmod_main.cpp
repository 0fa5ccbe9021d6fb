// Command-line surface: simulate | schedule | bound | shapley | compare.
// Exit codes: 0 success, 1 runtime failure, 2 configuration or validation
// failure.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flexmod/config.hpp"
#include "flexmod/fedsim.hpp"
#include "flexmod/report.hpp"
#include "flexmod/scheduler.hpp"

namespace {

using nlohmann::json;
using namespace flexmod;

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stod(part));
    } catch (...) {
      throw ConfigError(what + ": '" + part + "' is not a number");
    }
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  for (double x : parse_double_list(text, what)) {
    const int i = static_cast<int>(x);
    if (static_cast<double>(i) != x) throw ConfigError(what + ": expected integers");
    out.push_back(i);
  }
  return out;
}

json allocation_json(const std::vector<int>& counts) {
  json arr = json::array();
  for (int mask = 1; mask < static_cast<int>(counts.size()); ++mask) {
    if (counts[static_cast<std::size_t>(mask)] == 0) continue;
    arr.push_back({{"combination", mask},
                   {"members", combination_members(mask)},
                   {"count", counts[static_cast<std::size_t>(mask)]}});
  }
  return arr;
}

json schedule_json(const std::vector<int>& slots) {
  json arr = json::array();
  for (int mask : slots) {
    arr.push_back({{"combination", mask}, {"members", combination_members(mask)}});
  }
  return arr;
}

void write_run_outputs(const std::string& dir, const ExperimentConfig& config,
                       const ExperimentResult& result) {
  std::filesystem::create_directories(dir);
  write_rounds_csv(dir + "/rounds.csv", result.rounds, config.modalities());
  write_allocations_csv(dir + "/allocations.csv", result.rounds,
                        config.schedule.unit_time_by_mask);
  write_summary_json(dir + "/summary.json", result, config);
  save_model_json(dir + "/model.json", result.final_model);
  if (result.agent) result.agent->save_json(dir + "/agent.json");
}

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed,
                 std::optional<std::string> out_dir) {
  ExperimentConfig config;
  try {
    config = load_config(config_path);
    if (seed) config.run.seed = *seed;
    if (out_dir) config.run.output_dir = *out_dir;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  }
  try {
    for (const auto& w :
         unit_time_warnings(config.modalities(), config.schedule.unit_time_by_mask)) {
      std::cerr << "warning: " << w << "\n";
    }
    const ExperimentResult result = run_experiment(config);
    write_run_outputs(config.run.output_dir, config, result);
    json j;
    j["rounds"] = result.rounds.size();
    j["final_acc"] = result.final_accuracy;
    j["rounds_to_target"] =
        result.rounds_to_target >= 0 ? json(result.rounds_to_target) : json(nullptr);
    j["total_idle_time"] = result.total_idle_time;
    j["output_dir"] = config.run.output_dir;
    std::cout << j.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_schedule(const std::string& config_path, double beta, const std::string& omega_text,
                 const std::string& gamma_text) {
  ExperimentConfig config;
  std::vector<double> omega, gamma;
  try {
    config = load_config(config_path);
    omega = parse_double_list(omega_text, "--omega");
    gamma = parse_double_list(gamma_text, "--gamma");
    const int m = config.modalities();
    if (static_cast<int>(omega.size()) != m) {
      throw ConfigError("--omega: expected " + std::to_string(m) + " values, got " +
                        std::to_string(omega.size()));
    }
    if (static_cast<int>(gamma.size()) != m) {
      throw ConfigError("--gamma: expected " + std::to_string(m) + " values, got " +
                        std::to_string(gamma.size()));
    }
    if (beta < 0.0 || beta > 1.0) throw ConfigError("--beta: must lie in [0, 1]");
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const CombinationTable table =
        CombinationTable::build(config.modalities(), config.schedule.unit_time_by_mask,
                                QualityVector{omega}, ImportanceVector{gamma});
    const AllocationVector allocation = solve_allocation(table, beta, config.schedule.budget);
    const Schedule schedule = order_schedule(allocation, table);
    json j;
    j["beta"] = beta;
    j["allocation"] = allocation_json(allocation.counts);
    j["schedule"] = schedule_json(schedule.slots);
    j["utility"] = utility(allocation, table, beta);
    j["budget"] = config.schedule.budget;
    j["budget_used"] = time_cost(allocation, table);
    std::cout << j.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_bound(const std::string& schedule_text, double eta, double lipschitz, double delta,
              int modalities, bool all_orders) {
  std::vector<int> cards;
  BoundParams params;
  try {
    cards = parse_int_list(schedule_text, "--schedule");
    params.eta = eta;
    params.lipschitz = lipschitz;
    params.delta = delta;
    params.modalities = modalities;
    params.validate();
    for (int c : cards) {
      if (c < 1 || c > modalities) {
        throw ConfigError("--schedule: cardinality " + std::to_string(c) + " outside [1, " +
                          std::to_string(modalities) + "]");
      }
    }
    if (all_orders && cards.size() > 7) {
      throw ConfigError("--all-orders: schedule has " + std::to_string(cards.size()) +
                        " slots; permutation enumeration is limited to 7");
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  }
  try {
    json j;
    j["schedule"] = cards;
    j["bound"] = divergence_bound(cards, params);
    if (all_orders) {
      std::vector<int> sorted_desc = cards;
      std::sort(sorted_desc.begin(), sorted_desc.end(), std::greater<int>());
      j["descending_bound"] = divergence_bound(sorted_desc, params);

      std::vector<int> perm = cards;
      std::sort(perm.begin(), perm.end());
      json orders = json::array();
      double best = 0.0;
      bool first = true;
      do {  // distinct orderings only; duplicates share the same bound
        const double b = divergence_bound(perm, params);
        orders.push_back({{"order", perm}, {"bound", b}});
        if (first || b < best) best = b;
        first = false;
      } while (std::next_permutation(perm.begin(), perm.end()));
      std::sort(orders.begin(), orders.end(),
                [](const json& a, const json& b) { return a["bound"] < b["bound"]; });
      j["orders"] = std::move(orders);
      j["minimum_bound"] = best;
      j["descending_is_minimal"] = divergence_bound(sorted_desc, params) <= best;
    }
    std::cout << j.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_shapley(const std::string& config_path, const std::string& checkpoint_path) {
  ExperimentConfig config;
  GlobalModel model;
  try {
    config = load_config(config_path);
    model = load_model_json(checkpoint_path);
    check_model_matches_spec(model, config.model);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  }
  try {
    Simulation sim(config);
    const ShapleyResult shap = shapley_values(model, sim.validation());
    const int m = config.modalities();
    const unsigned full = (1u << m) - 1u;
    double sum_raw = 0.0;
    for (double g : shap.raw) sum_raw += g;
    const double residual = std::abs(sum_raw - (shap.subset_loss[full] - shap.subset_loss[0]));

    json j;
    json subsets = json::array();
    for (unsigned mask = 0; mask <= full; ++mask) {
      subsets.push_back({{"subset", mask},
                         {"members", mask == 0 ? "" : combination_members(static_cast<int>(mask))},
                         {"loss", shap.subset_loss[mask]}});
    }
    j["subset_losses"] = std::move(subsets);
    j["gamma_raw"] = shap.raw;
    j["gamma_normalized"] = normalize_importance(shap.raw).gamma;
    j["efficiency_residual"] = residual;
    std::cout << j.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_compare(const std::string& config_path, const std::string& strategies_text,
                const std::string& seeds_text, std::optional<std::string> out_dir) {
  ExperimentConfig config;
  std::vector<StrategyKind> strategies;
  std::vector<std::uint64_t> seeds;
  try {
    config = load_config(config_path);
    std::stringstream ss(strategies_text);
    std::string part;
    while (std::getline(ss, part, ',')) {
      strategies.push_back(StrategyKind::parse(part, config.modalities()));
    }
    if (strategies.empty()) throw ConfigError("--strategies: empty list");
    for (int s : parse_int_list(seeds_text, "--seeds")) {
      if (s < 0) throw ConfigError("--seeds: must be nonnegative");
      seeds.push_back(static_cast<std::uint64_t>(s));
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const std::string dir = out_dir.value_or(config.run.output_dir);
    std::filesystem::create_directories(dir);
    std::vector<CompareCell> cells;
    for (const auto& strategy : strategies) {
      for (std::uint64_t seed : seeds) {
        ExperimentConfig cell_config = config;
        cell_config.schedule.strategy = strategy;
        cell_config.run.seed = seed;
        const ExperimentResult result = run_experiment(cell_config);
        CompareCell cell;
        cell.strategy = strategy.to_string();
        cell.seed = seed;
        cell.rounds = result.rounds;
        cell.rounds_to_target = result.rounds_to_target;
        cell.final_accuracy = result.final_accuracy;
        cells.push_back(std::move(cell));
        std::cerr << cell.strategy << " seed " << seed << ": final_acc "
                  << format_double(cells.back().final_accuracy) << ", rounds_to_target "
                  << cells.back().rounds_to_target << "\n";
      }
    }
    write_compare_csv(dir + "/compare.csv", cells);
    write_compare_medians_csv(dir + "/compare_medians.csv", cells, config.run.rounds);
    json j;
    j["cells"] = cells.size();
    j["output_dir"] = dir;
    for (const auto& strategy : strategies) {
      j["median_rounds_to_target"][strategy.to_string()] =
          median_rounds_to_target(cells, strategy.to_string(), config.run.rounds);
    }
    std::cout << j.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multimodal federated learning scheduling simulator"};
  app.require_subcommand(1);

  std::string config_path, omega_text, gamma_text, schedule_text, checkpoint_path;
  std::string strategies_text, seeds_text;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
  double beta = 0.5, eta = 0.01, lipschitz = 1.0, delta = 1.0;
  int modalities = 2;
  bool all_orders = false;

  auto* simulate = app.add_subcommand("simulate", "run one experiment and write its artifacts");
  simulate->add_option("--config", config_path, "experiment config JSON")->required();
  simulate->add_option("--seed", seed_override, "override run.seed");
  simulate->add_option("--out", out_override, "override run.output_dir");

  auto* schedule = app.add_subcommand("schedule", "solve one allocation problem standalone");
  schedule->add_option("--config", config_path, "experiment config JSON")->required();
  schedule->add_option("--beta", beta, "quality/importance blend weight")->required();
  schedule->add_option("--omega", omega_text, "per-modality quality indices, comma separated")
      ->required();
  schedule->add_option("--gamma", gamma_text, "per-modality importance indices, comma separated")
      ->required();

  auto* bound = app.add_subcommand("bound", "evaluate the schedule divergence bound");
  bound->add_option("--schedule", schedule_text, "slot cardinalities, comma separated")->required();
  bound->add_option("--eta", eta, "learning rate")->required();
  bound->add_option("--L", lipschitz, "gradient smoothness constant")->required();
  bound->add_option("--delta", delta, "gradient norm bound")->required();
  bound->add_option("--M", modalities, "number of modalities")->required();
  bound->add_flag("--all-orders", all_orders, "enumerate every slot permutation (up to 7 slots)");

  auto* shapley = app.add_subcommand("shapley", "modality attribution of a model checkpoint");
  shapley->add_option("--config", config_path, "experiment config JSON")->required();
  shapley->add_option("--checkpoint", checkpoint_path, "model checkpoint JSON")->required();

  auto* compare = app.add_subcommand("compare", "strategy x seed accuracy matrix");
  compare->add_option("--config", config_path, "experiment config JSON")->required();
  compare->add_option("--strategies", strategies_text, "comma-separated strategy list")->required();
  compare->add_option("--seeds", seeds_text, "comma-separated seed list")->required();
  compare->add_option("--out", out_override, "override run.output_dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (simulate->parsed()) return cmd_simulate(config_path, seed_override, out_override);
  if (schedule->parsed()) return cmd_schedule(config_path, beta, omega_text, gamma_text);
  if (bound->parsed()) {
    return cmd_bound(schedule_text, eta, lipschitz, delta, modalities, all_orders);
  }
  if (shapley->parsed()) return cmd_shapley(config_path, checkpoint_path);
  if (compare->parsed()) return cmd_compare(config_path, strategies_text, seeds_text, out_override);
  return kExitConfig;
}
