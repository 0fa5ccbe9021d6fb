// Exact Shapley attribution of validation loss to modalities. The value of a
// modality subset is the validation cross-entropy when the header sees real
// features for members and zero tensors for everyone else.
#pragma once

#include <vector>

#include "flexmod/data.hpp"
#include "flexmod/model.hpp"

namespace flexmod {

struct ImportanceVector {
  std::vector<double> gamma;  // nonnegative, unit L2 norm
};

// Exact enumeration becomes unreasonable past this many modalities.
inline constexpr int kShapleyMaxModalities = 12;

double evaluate_subset_loss(const GlobalModel& model, const MultimodalDataset& validation,
                            unsigned mask);

struct ShapleyResult {
  std::vector<double> raw;          // one per modality, typically negative
  std::vector<double> subset_loss;  // indexed by subset mask, size 2^M
};

// Subset-form Shapley values over a precomputed value function v indexed by
// mask (size 2^M).
std::vector<double> shapley_from_values(int modalities, const std::vector<double>& v);

// Fills the subset-loss cache from the model (independent evaluations, run in
// parallel) and applies the subset form.
ShapleyResult shapley_values(const GlobalModel& model, const MultimodalDataset& validation);

// Negate (importance = loss reduction), clamp rare positives at zero, then
// scale to unit L2 norm.
ImportanceVector normalize_importance(std::vector<double> raw);

double combination_importance(const ImportanceVector& iv, unsigned mask);

}  // namespace flexmod
