#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flexmod/model.hpp"
#include "flexmod/rng.hpp"
#include "flexmod/shapley.hpp"

using namespace flexmod;

namespace {

// average marginal contribution over all M! orderings
std::vector<double> permutation_shapley(int modalities, const std::vector<double>& v) {
  std::vector<int> order(static_cast<std::size_t>(modalities));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> gamma(static_cast<std::size_t>(modalities), 0.0);
  double permutations = 0.0;
  do {
    unsigned mask = 0;
    for (int m : order) {
      const unsigned with = mask | (1u << m);
      gamma[static_cast<std::size_t>(m)] += v[with] - v[mask];
      mask = with;
    }
    permutations += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& g : gamma) g /= permutations;
  return gamma;
}

GlobalModel small_model(int modalities, std::uint64_t seed) {
  ModelSpec spec;
  for (int m = 0; m < modalities; ++m) {
    spec.input_dims.push_back(4 + m);
    spec.encoder_hidden.push_back({6});
  }
  spec.header_hidden = {8};
  spec.feature_dim = 5;
  spec.classes = 3;
  Rng rng(seed);
  return make_global_model(spec, rng);
}

MultimodalDataset small_validation(const GlobalModel& model, std::uint64_t seed) {
  Rng rng(seed);
  MultimodalDataset ds;
  ds.num_modalities = model.modalities();
  ds.num_classes = 3;
  const int n = 24;
  for (int m = 0; m < model.modalities(); ++m) {
    Matrix f(n, model.encoders[static_cast<std::size_t>(m)].input_dim());
    for (double& v : f.v) v = rng.uniform(-1, 1);
    ds.features.push_back(std::move(f));
  }
  for (int i = 0; i < n; ++i) ds.labels.push_back(i % 3);
  return ds;
}

}  // namespace

TEST_CASE("subset loss matches hand-zeroed feature evaluation") {
  const auto model = small_model(3, 1);
  const auto val = small_validation(model, 2);
  std::vector<int> rows(static_cast<std::size_t>(val.size()));
  std::iota(rows.begin(), rows.end(), 0);

  for (unsigned mask = 0; mask < 8; ++mask) {
    // oracle: run each encoder by hand, zero excluded blocks, feed the header
    std::vector<Tensor> blocks;
    for (int m = 0; m < 3; ++m) {
      if (mask & (1u << m)) {
        blocks.push_back(forward_mlp(model.encoders[static_cast<std::size_t>(m)],
                                     modality_batch(val, m, rows)));
      } else {
        blocks.push_back(Tensor::zeros({val.size(), model.feature_dim}));
      }
    }
    const double oracle =
        softmax_cross_entropy(forward_mlp(model.header, concat_cols(blocks)), val.labels).item();
    CHECK(evaluate_subset_loss(model, val, mask) == oracle);
  }
}

TEST_CASE("empty subset with a zero header gives log K") {
  auto model = small_model(2, 3);
  for (auto& layer : model.header.layers) {
    for (double& w : layer.weight.values()) w = 0.0;
    for (double& b : layer.bias.values()) b = 0.0;
  }
  const auto val = small_validation(model, 4);
  CHECK(evaluate_subset_loss(model, val, 0) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("single modality: gamma is v({1}) - v(empty)") {
  const std::vector<double> v{1.7, 0.4};
  const auto gamma = shapley_from_values(1, v);
  REQUIRE(gamma.size() == 1);
  CHECK(gamma[0] == doctest::Approx(0.4 - 1.7).epsilon(1e-15));
}

TEST_CASE("interchangeable modalities receive equal raw values") {
  ModelSpec spec;
  spec.input_dims = {4, 4};
  spec.encoder_hidden = {{6}, {6}};
  spec.header_hidden = {8};
  spec.feature_dim = 5;
  spec.classes = 3;
  Rng rng(5);
  GlobalModel twin = make_global_model(spec, rng);
  auto val = small_validation(twin, 6);

  // interchangeable players: same data, same encoder, and a header whose
  // first-layer weights are identical across the two feature blocks
  twin.encoders[1] = clone_mlp(twin.encoders[0]);
  val.features[1] = val.features[0];
  auto& w0 = twin.header.layers[0].weight;
  const int rows = w0.dim(0), cols = w0.dim(1), d = twin.feature_dim;
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < d; ++j) {
      w0.values()[static_cast<std::size_t>(r) * cols + d + j] =
          w0.values()[static_cast<std::size_t>(r) * cols + j];
    }
  }
  const auto result = shapley_values(twin, val);
  CHECK(std::abs(result.raw[0] - result.raw[1]) < 1e-9);
}

TEST_CASE("subset form matches the permutation oracle on injected values") {
  Rng rng(31);
  for (int modalities = 2; modalities <= 4; ++modalities) {
    for (int trial = 0; trial < 25; ++trial) {
      std::vector<double> v(static_cast<std::size_t>(1) << modalities);
      for (double& x : v) x = rng.uniform(-2, 2);
      const auto subset = shapley_from_values(modalities, v);
      const auto perm = permutation_shapley(modalities, v);
      for (int m = 0; m < modalities; ++m) {
        CHECK(std::abs(subset[static_cast<std::size_t>(m)] - perm[static_cast<std::size_t>(m)]) <
              1e-9);
      }
    }
  }
}

TEST_CASE("efficiency: raw values sum to v(full) - v(empty)") {
  Rng rng(37);
  std::vector<double> v(16);
  for (double& x : v) x = rng.uniform(-4, 1);
  const auto gamma = shapley_from_values(4, v);
  const double sum = std::accumulate(gamma.begin(), gamma.end(), 0.0);
  CHECK(std::abs(sum - (v[15] - v[0])) < 1e-9);

  // and on a real model-backed value function
  const auto model = small_model(3, 7);
  const auto val = small_validation(model, 8);
  const auto result = shapley_values(model, val);
  const double sum_model = std::accumulate(result.raw.begin(), result.raw.end(), 0.0);
  CHECK(std::abs(sum_model - (result.subset_loss[7] - result.subset_loss[0])) < 1e-9);
}

TEST_CASE("a dummy modality gets raw value zero") {
  // v depends only on whether modality 1 is present
  std::vector<double> v(8);
  for (unsigned mask = 0; mask < 8; ++mask) v[mask] = (mask & 1u) ? 0.5 : 2.0;
  const auto gamma = shapley_from_values(3, v);
  CHECK(std::abs(gamma[0] - (-1.5)) < 1e-9);
  CHECK(std::abs(gamma[1]) < 1e-9);
  CHECK(std::abs(gamma[2]) < 1e-9);
}

TEST_CASE("enumeration guard rejects too many modalities") {
  std::vector<double> v(static_cast<std::size_t>(1) << 13, 0.0);
  CHECK_THROWS_WITH_AS(shapley_from_values(13, v), doctest::Contains("reduce"),
                       std::invalid_argument);
}

TEST_CASE("normalize_importance negates, clamps and scales") {
  const auto a = normalize_importance({-3.0, -4.0});
  CHECK(a.gamma[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(a.gamma[1] == doctest::Approx(0.8).epsilon(1e-12));

  const auto b = normalize_importance({-5.0, 1.0});  // harmful modality clamps to zero
  CHECK(b.gamma[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b.gamma[1] == 0.0);

  CHECK_THROWS_AS(normalize_importance({0.0, 2.0}), std::runtime_error);
}

TEST_CASE("combination importance sums members and is additive") {
  ImportanceVector iv{{0.7, 0.1, 0.2}};
  CHECK(combination_importance(iv, 0b010) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(combination_importance(iv, 0b111) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(combination_importance(iv, 0b110) ==
        doctest::Approx(combination_importance(iv, 0b010) + combination_importance(iv, 0b100))
            .epsilon(1e-12));
  CHECK_THROWS_AS(combination_importance(iv, 0), std::invalid_argument);
}

TEST_CASE("model-backed shapley agrees with the permutation oracle for small M") {
  for (int modalities = 2; modalities <= 4; ++modalities) {
    const auto model = small_model(modalities, 40 + static_cast<std::uint64_t>(modalities));
    const auto val = small_validation(model, 50 + static_cast<std::uint64_t>(modalities));
    const auto result = shapley_values(model, val);
    const auto perm = permutation_shapley(modalities, result.subset_loss);
    for (int m = 0; m < modalities; ++m) {
      CHECK(std::abs(result.raw[static_cast<std::size_t>(m)] - perm[static_cast<std::size_t>(m)]) <
            1e-9);
    }
  }
}
