// Run artifacts: rounds.csv, allocations.csv, summary.json and the compare
// matrix. Doubles are printed with shortest round-trip formatting so repeated
// runs are byte-identical.
#pragma once

#include <string>
#include <vector>

#include "flexmod/config.hpp"
#include "flexmod/fedsim.hpp"

namespace flexmod {

std::string format_double(double x);

// columns: round, beta, acc, loss, reward, budget_used, omega_1..M,
// gamma_1..M, alloc_1..S
void write_rounds_csv(const std::string& path, const std::vector<RoundRecord>& rounds,
                      int modalities);

// long format: round, combination, members, unit_time, count
void write_allocations_csv(const std::string& path, const std::vector<RoundRecord>& rounds,
                           const std::vector<int>& unit_time_by_mask);

// {schema_version, final_acc, rounds_to_target, total_idle_time, config_hash}
void write_summary_json(const std::string& path, const ExperimentResult& result,
                        const ExperimentConfig& config);

struct CompareCell {
  std::string strategy;
  std::uint64_t seed = 0;
  std::vector<RoundRecord> rounds;
  int rounds_to_target = -1;
  double final_accuracy = 0.0;
};

// strategy, seed, round, acc rows
void write_compare_csv(const std::string& path, const std::vector<CompareCell>& cells);
// strategy, median_rounds_to_target, mean_final_acc; unreached runs count as
// rounds_limit + 1
void write_compare_medians_csv(const std::string& path, const std::vector<CompareCell>& cells,
                               int rounds_limit);

double median_rounds_to_target(const std::vector<CompareCell>& cells, const std::string& strategy,
                               int rounds_limit);

std::string combination_members(int mask);

}  // namespace flexmod
