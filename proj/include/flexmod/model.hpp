// The fused classifier: one encoder per modality feeding a shared header on
// the concatenation of all feature blocks.
#pragma once

#include <string>
#include <vector>

#include "flexmod/data.hpp"
#include "flexmod/nn.hpp"

namespace flexmod {

struct ModelSpec {
  std::vector<int> input_dims;                   // raw width per modality
  std::vector<std::vector<int>> encoder_hidden;  // hidden widths per modality
  std::vector<int> header_hidden;
  int feature_dim = 16;  // every encoder output, shared so prototypes align
  int classes = 2;

  int modalities() const { return static_cast<int>(input_dims.size()); }
  void validate() const;
};

struct GlobalModel {
  std::vector<MlpParams> encoders;
  MlpParams header;  // input dim = modalities * feature_dim
  int feature_dim = 0;

  int modalities() const { return static_cast<int>(encoders.size()); }
};

GlobalModel make_global_model(const ModelSpec& spec, Rng& rng);
GlobalModel clone_model(const GlobalModel& model);
std::vector<Tensor> model_parameters(const GlobalModel& model);
void check_same_structure(const GlobalModel& a, const GlobalModel& b);

// All encoders forward and the header consumes the concatenation (which
// encoders later receive gradient is a training-schedule concern, not a
// forward one).
Tensor forward_full(const GlobalModel& model, const std::vector<Tensor>& inputs);

// Feature blocks of modalities outside the mask are replaced by zero tensors.
// Mask bit m selects modality m; the full mask reproduces forward_full.
Tensor forward_subset(const GlobalModel& model, const std::vector<Tensor>& inputs, unsigned mask);

std::vector<Tensor> modality_inputs(const GlobalModel& model, const MultimodalDataset& dataset,
                                    const std::vector<int>& rows);

void save_model_json(const std::string& path, const GlobalModel& model);
GlobalModel load_model_json(const std::string& path);
// Throws when the checkpoint does not fit the configured shapes.
void check_model_matches_spec(const GlobalModel& model, const ModelSpec& spec);

}  // namespace flexmod
