#include "flexmod/report.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace flexmod {

std::string format_double(double x) {
  char buffer[32];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), x);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buffer, ptr);
}

std::string combination_members(int mask) {
  std::string name;
  for (int m = 0; mask >> m; ++m) {
    if (mask & (1 << m)) name += (name.empty() ? "" : "+") + std::to_string(m + 1);
  }
  return name;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

}  // namespace

void write_rounds_csv(const std::string& path, const std::vector<RoundRecord>& rounds,
                      int modalities) {
  auto out = open_out(path);
  const int s_max = (1 << modalities) - 1;
  out << "round,beta,acc,loss,reward,budget_used";
  for (int m = 1; m <= modalities; ++m) out << ",omega_" << m;
  for (int m = 1; m <= modalities; ++m) out << ",gamma_" << m;
  for (int s = 1; s <= s_max; ++s) out << ",alloc_" << s;
  out << "\n";
  for (const auto& r : rounds) {
    out << r.round << ',' << format_double(r.beta) << ',' << format_double(r.accuracy) << ','
        << format_double(r.loss) << ',' << format_double(r.reward) << ',' << r.budget_used;
    for (int m = 0; m < modalities; ++m) out << ',' << format_double(r.omega[static_cast<std::size_t>(m)]);
    for (int m = 0; m < modalities; ++m) out << ',' << format_double(r.gamma[static_cast<std::size_t>(m)]);
    for (int s = 1; s <= s_max; ++s) out << ',' << r.allocation[static_cast<std::size_t>(s)];
    out << "\n";
  }
}

void write_allocations_csv(const std::string& path, const std::vector<RoundRecord>& rounds,
                           const std::vector<int>& unit_time_by_mask) {
  auto out = open_out(path);
  out << "round,combination,members,unit_time,count\n";
  for (const auto& r : rounds) {
    for (int mask = 1; mask < static_cast<int>(r.allocation.size()); ++mask) {
      out << r.round << ',' << mask << ',' << combination_members(mask) << ','
          << unit_time_by_mask[static_cast<std::size_t>(mask)] << ','
          << r.allocation[static_cast<std::size_t>(mask)] << "\n";
    }
  }
}

void write_summary_json(const std::string& path, const ExperimentResult& result,
                        const ExperimentConfig& config) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["final_acc"] = result.final_accuracy;
  if (result.rounds_to_target >= 0) {
    j["rounds_to_target"] = result.rounds_to_target;
  } else {
    j["rounds_to_target"] = nullptr;
  }
  j["total_idle_time"] = result.total_idle_time;
  j["config_hash"] = config_hash(config);
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

void write_compare_csv(const std::string& path, const std::vector<CompareCell>& cells) {
  auto out = open_out(path);
  out << "strategy,seed,round,acc\n";
  for (const auto& cell : cells) {
    for (const auto& r : cell.rounds) {
      out << cell.strategy << ',' << cell.seed << ',' << r.round << ','
          << format_double(r.accuracy) << "\n";
    }
  }
}

double median_rounds_to_target(const std::vector<CompareCell>& cells, const std::string& strategy,
                               int rounds_limit) {
  std::vector<double> values;
  for (const auto& cell : cells) {
    if (cell.strategy != strategy) continue;
    values.push_back(cell.rounds_to_target >= 0 ? static_cast<double>(cell.rounds_to_target)
                                                : static_cast<double>(rounds_limit + 1));
  }
  if (values.empty()) throw std::invalid_argument("median: no cells for strategy " + strategy);
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void write_compare_medians_csv(const std::string& path, const std::vector<CompareCell>& cells,
                               int rounds_limit) {
  std::vector<std::string> strategies;
  for (const auto& cell : cells) {
    if (std::find(strategies.begin(), strategies.end(), cell.strategy) == strategies.end()) {
      strategies.push_back(cell.strategy);
    }
  }
  auto out = open_out(path);
  out << "strategy,median_rounds_to_target,mean_final_acc\n";
  for (const auto& strategy : strategies) {
    double acc_sum = 0.0;
    int count = 0;
    for (const auto& cell : cells) {
      if (cell.strategy != strategy) continue;
      acc_sum += cell.final_accuracy;
      ++count;
    }
    out << strategy << ',' << format_double(median_rounds_to_target(cells, strategy, rounds_limit))
        << ',' << format_double(acc_sum / count) << "\n";
  }
}

}  // namespace flexmod
