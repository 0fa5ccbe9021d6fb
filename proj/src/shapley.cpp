#include "flexmod/shapley.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace flexmod {

double evaluate_subset_loss(const GlobalModel& model, const MultimodalDataset& validation,
                            unsigned mask) {
  if (validation.size() == 0) throw std::invalid_argument("evaluate_subset_loss: empty dataset");
  std::vector<int> rows(static_cast<std::size_t>(validation.size()));
  for (int i = 0; i < validation.size(); ++i) rows[static_cast<std::size_t>(i)] = i;
  Tensor logits = forward_subset(model, modality_inputs(model, validation, rows), mask);
  return softmax_cross_entropy(logits, validation.labels).item();
}

std::vector<double> shapley_from_values(int modalities, const std::vector<double>& v) {
  if (modalities < 1) throw std::invalid_argument("shapley: need at least one modality");
  if (modalities > kShapleyMaxModalities) {
    throw std::invalid_argument("shapley: exact enumeration over " + std::to_string(modalities) +
                                " modalities is infeasible; reduce to at most " +
                                std::to_string(kShapleyMaxModalities));
  }
  const unsigned full = (1u << modalities) - 1u;
  if (v.size() != static_cast<std::size_t>(full) + 1) {
    throw std::invalid_argument("shapley: value cache must cover all 2^M subsets");
  }

  std::vector<double> factorial(static_cast<std::size_t>(modalities) + 1, 1.0);
  for (int i = 1; i <= modalities; ++i) {
    factorial[static_cast<std::size_t>(i)] = factorial[static_cast<std::size_t>(i - 1)] * i;
  }

  std::vector<double> gamma(static_cast<std::size_t>(modalities), 0.0);
  for (int m = 0; m < modalities; ++m) {
    const unsigned bit = 1u << m;
    const unsigned others = full & ~bit;
    // iterate the subsets of "others", including the empty set
    unsigned sub = 0;
    for (;;) {
      const int size = std::popcount(sub);
      const double weight = factorial[static_cast<std::size_t>(size)] *
                            factorial[static_cast<std::size_t>(modalities - size - 1)] /
                            factorial[static_cast<std::size_t>(modalities)];
      gamma[static_cast<std::size_t>(m)] += weight * (v[sub | bit] - v[sub]);
      if (sub == others) break;
      sub = (sub - others) & others;  // next subset of the masked bits
    }
  }
  return gamma;
}

ShapleyResult shapley_values(const GlobalModel& model, const MultimodalDataset& validation) {
  const int modalities = model.modalities();
  if (modalities > kShapleyMaxModalities) {
    throw std::invalid_argument("shapley: exact enumeration over " + std::to_string(modalities) +
                                " modalities is infeasible; reduce to at most " +
                                std::to_string(kShapleyMaxModalities));
  }
  const int subsets = 1 << modalities;
  ShapleyResult result;
  result.subset_loss.assign(static_cast<std::size_t>(subsets), 0.0);
  // independent evaluations against a frozen model snapshot
#pragma omp parallel for schedule(dynamic)
  for (int mask = 0; mask < subsets; ++mask) {
    result.subset_loss[static_cast<std::size_t>(mask)] =
        evaluate_subset_loss(model, validation, static_cast<unsigned>(mask));
  }
  result.raw = shapley_from_values(modalities, result.subset_loss);
  return result;
}

ImportanceVector normalize_importance(std::vector<double> raw) {
  if (raw.empty()) throw std::invalid_argument("normalize_importance: empty vector");
  double norm = 0.0;
  for (double& x : raw) {
    x = std::max(0.0, -x);  // a modality whose presence lowers loss is important
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    throw std::runtime_error("normalize_importance: no modality reduces validation loss");
  }
  for (double& x : raw) x /= norm;
  return ImportanceVector{std::move(raw)};
}

double combination_importance(const ImportanceVector& iv, unsigned mask) {
  if (mask == 0) throw std::invalid_argument("combination_importance: empty combination");
  if (mask >> iv.gamma.size()) {
    throw std::invalid_argument("combination_importance: mask references unknown modality");
  }
  double sum = 0.0;
  for (std::size_t m = 0; m < iv.gamma.size(); ++m) {
    if (mask & (1u << m)) sum += iv.gamma[m];
  }
  return sum;
}

}  // namespace flexmod
