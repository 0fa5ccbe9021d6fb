// Multimodal datasets: seeded synthesis with per-modality informativeness, a
// Dirichlet non-IID partitioner with equal-size shards, CSV ingestion and the
// stratified server-side validation split.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flexmod/tensor.hpp"

namespace flexmod {

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
};

struct MultimodalDataset {
  int num_modalities = 0;
  int num_classes = 0;
  std::vector<Matrix> features;  // one [n x dim_m] matrix per modality
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
  void validate() const;
};

struct ClientShard {
  int client_id = 0;
  std::vector<int> rows;
};

struct SyntheticSpec {
  int modalities = 2;
  int classes = 4;
  std::vector<int> dims;                  // feature width per modality
  int samples = 6000;
  std::vector<double> informativeness;    // in [0, 1], one per modality
  double noise = 1.0;
};

// Class-conditional Gaussians; modality m's class means are scaled by its
// informativeness, so informativeness 0 carries no label signal.
MultimodalDataset synthesize(const SyntheticSpec& spec, std::uint64_t seed);

// The means synthesize() draws for a given spec and seed, one [classes x dim]
// matrix per modality (already informativeness-scaled).
std::vector<Matrix> synthetic_class_means(const SyntheticSpec& spec, std::uint64_t seed);

// Per-class client proportions from Dirichlet(alpha); shards are then trimmed
// or padded by seeded resampling so every client ends up with exactly
// floor(n / clients) rows.
std::vector<ClientShard> partition_dirichlet(const MultimodalDataset& dataset, int clients,
                                             double alpha, std::uint64_t seed);

// One file per modality: UTF-8, header row, comma separated. The label column
// must appear in every file with identical values; every other column becomes
// a feature. Labels are re-indexed to [0, K) in lexicographic order.
MultimodalDataset load_csv(const std::vector<std::string>& paths, const std::string& label_column);

// Stratified by class; the validation part stays at the server.
std::pair<MultimodalDataset, MultimodalDataset> split_validation(const MultimodalDataset& dataset,
                                                                 double fraction,
                                                                 std::uint64_t seed);

MultimodalDataset select_rows(const MultimodalDataset& dataset, const std::vector<int>& rows);

// [rows x dim] tensor view of one modality restricted to the given rows.
Tensor modality_batch(const MultimodalDataset& dataset, int modality, const std::vector<int>& rows);
std::vector<int> label_batch(const MultimodalDataset& dataset, const std::vector<int>& rows);

}  // namespace flexmod
