// Class prototypes per modality and the encoder quality index built from
// their pairwise cosine similarities. Overlapping prototypes mean an encoder
// still extracts poorly separated features and should get more training.
#pragma once

#include <vector>

#include "flexmod/data.hpp"
#include "flexmod/nn.hpp"

namespace flexmod {

struct Prototype {
  int modality = 0;
  int klass = 0;
  std::vector<double> vec;
};

struct QualityVector {
  std::vector<double> omega;  // nonnegative, unit L2 norm
};

// Mean encoder feature per (modality, class) over the given rows; classes
// absent from the shard are omitted. Vectors are not yet normalized.
std::vector<Prototype> local_prototypes(const std::vector<MlpParams>& encoders,
                                        const MultimodalDataset& dataset,
                                        const std::vector<int>& rows);

// Unit L2 norm; a zero vector is an error (dead encoder).
Prototype normalize_prototype(const Prototype& p);

// Mean over reporting clients per (modality, class). Every pair in
// {0..modalities-1} x {0..classes-1} must be reported by at least one client.
std::vector<Prototype> global_prototypes(const std::vector<std::vector<Prototype>>& per_client,
                                         int modalities, int classes);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// (1/K) * sum over ordered pairs k != o of cos(p_k, p_o). Needs >= 2
// prototypes.
double quality_index(const std::vector<std::vector<double>>& prototypes);

// Raw per-modality quality from global prototypes, negatives clamped to 0.
std::vector<double> quality_raw(const std::vector<Prototype>& globals, int modalities,
                                int classes);

// Clamp negatives to zero, then scale to unit L2 norm.
QualityVector normalize_quality(std::vector<double> raw);

// Omega of a combination: sum of member modalities' omega (bit m of the mask
// selects modality m).
double combination_quality(const QualityVector& q, unsigned mask);

}  // namespace flexmod
