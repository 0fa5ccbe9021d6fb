#include "flexmod/scheduler.hpp"

#include <algorithm>
#include <bit>
#include <stdexcept>

namespace flexmod {

int cardinality(int mask) { return std::popcount(static_cast<unsigned>(mask)); }

CombinationTable CombinationTable::build(int modalities, const std::vector<int>& unit_time_by_mask,
                                         const QualityVector& quality,
                                         const ImportanceVector& importance) {
  if (modalities < 1) throw std::invalid_argument("combination table: modalities must be >= 1");
  if (static_cast<int>(quality.omega.size()) != modalities ||
      static_cast<int>(importance.gamma.size()) != modalities) {
    throw std::invalid_argument("combination table: index vectors must have one entry per modality");
  }
  CombinationTable table;
  table.modalities = modalities;
  const int s_max = table.combinations();
  if (static_cast<int>(unit_time_by_mask.size()) != s_max + 1) {
    throw std::invalid_argument("combination table: unit_time must cover masks 0.." +
                                std::to_string(s_max));
  }
  table.unit_time = unit_time_by_mask;
  table.quality.assign(static_cast<std::size_t>(s_max) + 1, 0.0);
  table.importance.assign(static_cast<std::size_t>(s_max) + 1, 0.0);
  for (int mask = 1; mask <= s_max; ++mask) {
    table.quality[static_cast<std::size_t>(mask)] =
        combination_quality(quality, static_cast<unsigned>(mask));
    table.importance[static_cast<std::size_t>(mask)] =
        combination_importance(importance, static_cast<unsigned>(mask));
  }
  table.validate();
  return table;
}

void CombinationTable::validate() const {
  const int s_max = combinations();
  if (static_cast<int>(unit_time.size()) != s_max + 1 ||
      static_cast<int>(quality.size()) != s_max + 1 ||
      static_cast<int>(importance.size()) != s_max + 1) {
    throw std::invalid_argument("combination table: arrays must cover all 2^M - 1 combinations");
  }
  for (int mask = 1; mask <= s_max; ++mask) {
    if (unit_time[static_cast<std::size_t>(mask)] < 1) {
      throw std::invalid_argument("combination table: unit time for combination mask " +
                                  std::to_string(mask) + " must be >= 1");
    }
  }
}

std::vector<std::string> CombinationTable::subadditivity_warnings() const {
  std::vector<std::string> warnings;
  const int s_max = combinations();
  for (int a = 1; a <= s_max; ++a) {
    for (int b = a + 1; b <= s_max; ++b) {
      if ((a & b) != 0) continue;
      const int joint = unit_time[static_cast<std::size_t>(a | b)];
      const int split = unit_time[static_cast<std::size_t>(a)] + unit_time[static_cast<std::size_t>(b)];
      if (joint > split) {
        warnings.push_back("unit time of combination mask " + std::to_string(a | b) + " (" +
                           std::to_string(joint) + ") exceeds the split cost of masks " +
                           std::to_string(a) + "+" + std::to_string(b) + " (" +
                           std::to_string(split) + "); combined training should not cost more");
      }
    }
  }
  return warnings;
}

namespace {

double per_slot_utility(const CombinationTable& table, int mask, double beta) {
  return beta * table.quality[static_cast<std::size_t>(mask)] +
         (1.0 - beta) * table.importance[static_cast<std::size_t>(mask)];
}

void check_beta(double beta) {
  if (beta < 0.0 || beta > 1.0) {
    throw std::invalid_argument("utility: beta must lie in [0, 1], got " + std::to_string(beta));
  }
}

}  // namespace

double utility(const AllocationVector& alloc, const CombinationTable& table, double beta) {
  check_beta(beta);
  if (alloc.counts.size() != table.unit_time.size()) {
    throw std::invalid_argument("utility: allocation does not match table size");
  }
  double total = 0.0;
  for (int mask = 1; mask <= table.combinations(); ++mask) {
    total += per_slot_utility(table, mask, beta) * alloc.counts[static_cast<std::size_t>(mask)];
  }
  return total;
}

long long time_cost(const AllocationVector& alloc, const CombinationTable& table) {
  if (alloc.counts.size() != table.unit_time.size()) {
    throw std::invalid_argument("time_cost: allocation does not match table size");
  }
  long long total = 0;
  for (int mask = 1; mask <= table.combinations(); ++mask) {
    total += static_cast<long long>(table.unit_time[static_cast<std::size_t>(mask)]) *
             alloc.counts[static_cast<std::size_t>(mask)];
  }
  return total;
}

AllocationVector solve_allocation(const CombinationTable& table, double beta, int budget) {
  check_beta(beta);
  table.validate();
  if (budget < 0) throw std::invalid_argument("solve_allocation: budget must be nonnegative");

  const int s_max = table.combinations();
  // item order implements the tie-break: larger cardinality first, then mask
  std::vector<int> order;
  for (int mask = 1; mask <= s_max; ++mask) order.push_back(mask);
  std::sort(order.begin(), order.end(), [](int a, int b) {
    if (cardinality(a) != cardinality(b)) return cardinality(a) > cardinality(b);
    return a < b;
  });

  std::vector<double> best(static_cast<std::size_t>(budget) + 1, 0.0);
  std::vector<int> choice(static_cast<std::size_t>(budget) + 1, 0);  // 0 = leave idle
  for (int t = 1; t <= budget; ++t) {
    double best_value = best[static_cast<std::size_t>(t - 1)];
    int pick = 0;
    for (int mask : order) {
      const int cost = table.unit_time[static_cast<std::size_t>(mask)];
      if (cost > t) continue;
      const double value = best[static_cast<std::size_t>(t - cost)] + per_slot_utility(table, mask, beta);
      if (value > best_value) {  // strict: an item must beat idling
        best_value = value;
        pick = mask;
      }
    }
    best[static_cast<std::size_t>(t)] = best_value;
    choice[static_cast<std::size_t>(t)] = pick;
  }

  AllocationVector alloc;
  alloc.counts.assign(static_cast<std::size_t>(s_max) + 1, 0);
  int t = budget;
  while (t > 0) {
    const int pick = choice[static_cast<std::size_t>(t)];
    if (pick == 0) {
      --t;
    } else {
      alloc.counts[static_cast<std::size_t>(pick)] += 1;
      t -= table.unit_time[static_cast<std::size_t>(pick)];
    }
  }
  return alloc;
}

Schedule order_schedule(const AllocationVector& alloc, const CombinationTable& table) {
  if (alloc.counts.size() != table.unit_time.size()) {
    throw std::invalid_argument("order_schedule: allocation does not match table size");
  }
  for (int count : alloc.counts) {
    if (count < 0) throw std::invalid_argument("order_schedule: negative allocation count");
  }
  std::vector<int> order;
  for (int mask = 1; mask <= table.combinations(); ++mask) order.push_back(mask);
  std::sort(order.begin(), order.end(), [](int a, int b) {
    if (cardinality(a) != cardinality(b)) return cardinality(a) > cardinality(b);
    return a < b;
  });
  Schedule schedule;
  for (int mask : order) {
    for (int i = 0; i < alloc.counts[static_cast<std::size_t>(mask)]; ++i) {
      schedule.slots.push_back(mask);
    }
  }
  return schedule;
}

void BoundParams::validate() const {
  if (eta <= 0.0 || lipschitz <= 0.0 || delta <= 0.0 || modalities < 1) {
    throw std::invalid_argument("bound params: eta, L, delta must be positive and M >= 1");
  }
}

double divergence_bound(const std::vector<int>& cardinalities, const BoundParams& params) {
  params.validate();
  if (cardinalities.empty()) throw std::invalid_argument("divergence_bound: empty schedule");
  for (int c : cardinalities) {
    if (c < 1 || c > params.modalities) {
      throw std::invalid_argument("divergence_bound: slot cardinality " + std::to_string(c) +
                                  " outside [1, " + std::to_string(params.modalities) + "]");
    }
  }
  const int updates = static_cast<int>(cardinalities.size());
  const double eta2 = params.eta * params.eta;
  const double l2 = params.lipschitz * params.lipschitz;
  // suffix[e] = prod_{j=e}^{E-2} (2 + 2 eta^2 L^2 c_j) in 0-based slots; the
  // last term carries the empty product.
  std::vector<double> suffix(static_cast<std::size_t>(updates), 1.0);
  for (int e = updates - 2; e >= 0; --e) {
    suffix[static_cast<std::size_t>(e)] =
        (2.0 + 2.0 * eta2 * l2 * cardinalities[static_cast<std::size_t>(e)]) *
        suffix[static_cast<std::size_t>(e + 1)];
  }
  double sum = 0.0;
  for (int e = 0; e < updates; ++e) {
    sum += suffix[static_cast<std::size_t>(e)] *
           (params.modalities - cardinalities[static_cast<std::size_t>(e)]) * params.delta *
           params.delta;
  }
  return 2.0 * eta2 * sum;
}

double divergence_bound(const Schedule& schedule, const BoundParams& params,
                        const CombinationTable& table) {
  std::vector<int> cards;
  cards.reserve(schedule.slots.size());
  for (int mask : schedule.slots) {
    if (mask < 1 || mask > table.combinations()) {
      throw std::invalid_argument("divergence_bound: slot mask " + std::to_string(mask) +
                                  " outside the table");
    }
    cards.push_back(cardinality(mask));
  }
  return divergence_bound(cards, params);
}

BoundParams estimate_bound_params(const std::vector<double>& grad_norm_trace, double eta,
                                  double lipschitz, int modalities) {
  if (grad_norm_trace.empty()) {
    throw std::invalid_argument("estimate_bound_params: empty gradient-norm trace");
  }
  BoundParams params;
  params.eta = eta;
  params.lipschitz = lipschitz;
  params.modalities = modalities;
  params.delta = *std::max_element(grad_norm_trace.begin(), grad_norm_trace.end());
  params.validate();
  return params;
}

}  // namespace flexmod
