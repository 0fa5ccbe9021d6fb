// Per-round resource allocation: the utility-maximizing integer allocation
// over modality combinations (unbounded knapsack), the cardinality-descending
// slot ordering and the divergence bound that justifies it.
#pragma once

#include <string>
#include <vector>

#include "flexmod/prototype.hpp"
#include "flexmod/shapley.hpp"

namespace flexmod {

// Combination s is identified by its bitmask: bit m set means modality m is a
// member, so masks 1..2^M-1 enumerate every nonempty combination exactly once.
struct CombinationTable {
  int modalities = 0;
  std::vector<int> unit_time;      // indexed by mask, slot 0 unused
  std::vector<double> quality;     // Omega per mask
  std::vector<double> importance;  // Gamma per mask

  int combinations() const { return (1 << modalities) - 1; }

  // unit times indexed by mask (entry 0 ignored); Omega/Gamma lifted from the
  // per-modality vectors by summation over members.
  static CombinationTable build(int modalities, const std::vector<int>& unit_time_by_mask,
                                const QualityVector& quality, const ImportanceVector& importance);

  void validate() const;
  // One message per disjoint pair whose joint training costs more than
  // training the parts separately (the premise that combining saves time).
  std::vector<std::string> subadditivity_warnings() const;
};

struct AllocationVector {
  std::vector<int> counts;  // indexed by mask, slot 0 unused
  int round = 0;
};

struct Schedule {
  std::vector<int> slots;  // combination masks, cardinality non-increasing
};

double utility(const AllocationVector& alloc, const CombinationTable& table, double beta);
long long time_cost(const AllocationVector& alloc, const CombinationTable& table);

// Exact integer optimum by unbounded-knapsack DP over budgets 0..budget.
// Deterministic tie-breaking: an item is taken only when it strictly improves
// on leaving the budget unit idle, and among equal items the larger
// combination wins, then the smaller mask.
AllocationVector solve_allocation(const CombinationTable& table, double beta, int budget);

// Expand counts into slots sorted by |C| descending, ties by ascending mask.
Schedule order_schedule(const AllocationVector& alloc, const CombinationTable& table);

struct BoundParams {
  double eta = 0.01;      // learning rate
  double lipschitz = 1.0; // smoothness constant of the per-modality gradients
  double delta = 1.0;     // uniform bound on per-modality gradient norms
  int modalities = 1;

  void validate() const;
};

// Upper bound on the squared distance between the partially-trained model and
// the hypothetical all-modalities-trained one after running the given slots:
//   2 eta^2 sum_e [ prod_{j=e}^{E-1} (2 + 2 eta^2 L^2 c_j) ] (M - c_e) delta^2
// with c_e the slot cardinalities and the empty product equal to 1.
double divergence_bound(const std::vector<int>& cardinalities, const BoundParams& params);
double divergence_bound(const Schedule& schedule, const BoundParams& params,
                        const CombinationTable& table);

// delta = max recorded per-modality gradient norm; eta and L come from config.
BoundParams estimate_bound_params(const std::vector<double>& grad_norm_trace, double eta,
                                  double lipschitz, int modalities);

int cardinality(int mask);

}  // namespace flexmod
