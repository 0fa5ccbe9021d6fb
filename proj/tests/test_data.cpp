#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "flexmod/data.hpp"
#include "flexmod/nn.hpp"
#include "flexmod/rng.hpp"

using namespace flexmod;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.modalities = 2;
  spec.classes = 4;
  spec.dims = {6, 5};
  spec.samples = 800;
  spec.informativeness = {1.0, 0.0};
  spec.noise = 1.0;
  return spec;
}

std::string temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "flexmod_data_test";
  std::filesystem::create_directories(dir);
  return dir.string();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

// logistic-regression probe on a single modality
double probe_accuracy(const MultimodalDataset& train, const MultimodalDataset& test,
                      int modality) {
  Rng rng(5);
  MlpParams probe = make_mlp(train.features[static_cast<std::size_t>(modality)].cols, {},
                             train.num_classes, Activation::identity, Activation::identity, rng);
  std::vector<int> rows(static_cast<std::size_t>(train.size()));
  for (int i = 0; i < train.size(); ++i) rows[static_cast<std::size_t>(i)] = i;
  SgdConfig sgd{0.1, 1.0, 1e-6};
  auto params = parameters(probe);
  for (int epoch = 0; epoch < 60; ++epoch) {
    backward(softmax_cross_entropy(forward_mlp(probe, modality_batch(train, modality, rows)),
                                   train.labels));
    sgd_step(params, sgd);
  }
  std::vector<int> test_rows(static_cast<std::size_t>(test.size()));
  for (int i = 0; i < test.size(); ++i) test_rows[static_cast<std::size_t>(i)] = i;
  Tensor logits = forward_mlp(probe, modality_batch(test, modality, test_rows));
  int correct = 0;
  const int k = test.num_classes;
  for (int i = 0; i < test.size(); ++i) {
    const double* row = logits.values().data() + static_cast<std::size_t>(i) * k;
    int arg = 0;
    for (int j = 1; j < k; ++j) {
      if (row[j] > row[arg]) arg = j;
    }
    if (arg == test.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / test.size();
}

}  // namespace

TEST_CASE("synthesis is deterministic in the seed") {
  const auto spec = small_spec();
  const auto a = synthesize(spec, 42);
  const auto b = synthesize(spec, 42);
  CHECK(a.labels == b.labels);
  for (int m = 0; m < spec.modalities; ++m) {
    CHECK(a.features[static_cast<std::size_t>(m)].v == b.features[static_cast<std::size_t>(m)].v);
  }
  const auto c = synthesize(spec, 43);
  CHECK(a.features[0].v != c.features[0].v);
}

TEST_CASE("a zero-informativeness modality carries no label signal") {
  auto spec = small_spec();
  spec.samples = 1200;
  const auto full = synthesize(spec, 7);
  auto [train, test] = split_validation(full, 0.25, 7);
  const double acc = probe_accuracy(train, test, 1);  // informativeness 0.0
  CHECK(std::abs(acc - 1.0 / spec.classes) < 0.1);
  // and the informative modality is well above chance
  CHECK(probe_accuracy(train, test, 0) > 0.5);
}

TEST_CASE("class-mean estimates converge to the configured means") {
  auto spec = small_spec();
  spec.samples = 20000;
  spec.informativeness = {0.8, 0.6};
  const auto ds = synthesize(spec, 11);
  const auto means = synthetic_class_means(spec, 11);
  for (int m = 0; m < spec.modalities; ++m) {
    std::vector<std::vector<double>> sums(static_cast<std::size_t>(spec.classes),
                                          std::vector<double>(spec.dims[m], 0.0));
    std::vector<int> counts(static_cast<std::size_t>(spec.classes), 0);
    for (int i = 0; i < ds.size(); ++i) {
      const int k = ds.labels[static_cast<std::size_t>(i)];
      for (int j = 0; j < spec.dims[m]; ++j) {
        sums[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] +=
            ds.features[static_cast<std::size_t>(m)].at(i, j);
      }
      counts[static_cast<std::size_t>(k)] += 1;
    }
    for (int k = 0; k < spec.classes; ++k) {
      const double tolerance = 3.0 * spec.noise / std::sqrt(static_cast<double>(counts[k]));
      for (int j = 0; j < spec.dims[m]; ++j) {
        const double estimate = sums[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] / counts[k];
        CHECK(std::abs(estimate - means[static_cast<std::size_t>(m)].at(k, j)) < tolerance);
      }
    }
  }
}

TEST_CASE("dirichlet partition yields equal-size shards of valid rows") {
  const auto ds = synthesize(small_spec(), 3);
  const auto shards = partition_dirichlet(ds, 10, 10.0, 3);
  REQUIRE(shards.size() == 10);
  const int target = ds.size() / 10;
  for (const auto& shard : shards) {
    CHECK(static_cast<int>(shard.rows.size()) == target);
    for (int r : shard.rows) {
      CHECK(r >= 0);
      CHECK(r < ds.size());
    }
  }
}

TEST_CASE("huge alpha approaches the global class histogram") {
  auto spec = small_spec();
  spec.samples = 4000;
  const auto ds = synthesize(spec, 9);
  const auto shards = partition_dirichlet(ds, 8, 1e6, 9);
  std::vector<double> global(static_cast<std::size_t>(spec.classes), 0.0);
  for (int y : ds.labels) global[static_cast<std::size_t>(y)] += 1.0 / ds.size();
  for (const auto& shard : shards) {
    std::vector<double> hist(static_cast<std::size_t>(spec.classes), 0.0);
    for (int r : shard.rows) {
      hist[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(r)])] +=
          1.0 / static_cast<double>(shard.rows.size());
    }
    for (int k = 0; k < spec.classes; ++k) {
      CHECK(std::abs(hist[static_cast<std::size_t>(k)] - global[static_cast<std::size_t>(k)]) < 0.05);
    }
  }
}

TEST_CASE("partition golden fixture: alpha=10, N=10 sizes frozen and equal") {
  auto spec = small_spec();
  spec.samples = 997;  // deliberately not divisible
  const auto ds = synthesize(spec, 21);
  const auto shards = partition_dirichlet(ds, 10, 10.0, 21);
  for (const auto& shard : shards) CHECK(shard.rows.size() == 99);  // floor(997/10)
  const auto again = partition_dirichlet(ds, 10, 10.0, 21);
  for (std::size_t c = 0; c < shards.size(); ++c) CHECK(shards[c].rows == again[c].rows);
}

TEST_CASE("single-client partition owns every row") {
  const auto ds = synthesize(small_spec(), 5);
  const auto shards = partition_dirichlet(ds, 1, 1.0, 5);
  REQUIRE(shards.size() == 1);
  CHECK(static_cast<int>(shards[0].rows.size()) == ds.size());
  std::set<int> rows(shards[0].rows.begin(), shards[0].rows.end());
  CHECK(static_cast<int>(rows.size()) == ds.size());
}

TEST_CASE("partition rejects datasets smaller than the client count") {
  auto spec = small_spec();
  spec.samples = 6;
  const auto ds = synthesize(spec, 5);
  CHECK_THROWS_AS(partition_dirichlet(ds, 7, 1.0, 5), std::invalid_argument);
}

TEST_CASE("csv ingestion builds a two-modality dataset") {
  const auto dir = temp_dir();
  write_file(dir + "/m1.csv", "a,b,label\n1.0,2.0,walk\n3.5,4.5,sit\n0.25,0.5,walk\n");
  write_file(dir + "/m2.csv", "u,label,v\n9,walk,8\n7,sit,6\n5,walk,4\n");
  const auto ds = load_csv({dir + "/m1.csv", dir + "/m2.csv"}, "label");
  CHECK(ds.num_modalities == 2);
  CHECK(ds.size() == 3);
  CHECK(ds.num_classes == 2);
  // lexicographic: sit -> 0, walk -> 1
  CHECK(ds.labels == std::vector<int>{1, 0, 1});
  CHECK(ds.features[0].cols == 2);
  CHECK(ds.features[1].cols == 2);
  CHECK(ds.features[1].at(0, 0) == 9.0);
  CHECK(ds.features[1].at(0, 1) == 8.0);
}

TEST_CASE("csv rejects a NaN cell naming row and column") {
  const auto dir = temp_dir();
  write_file(dir + "/bad.csv", "a,b,label\n1.0,2.0,x\n1.0,nan,y\n");
  CHECK_THROWS_WITH_AS(load_csv({dir + "/bad.csv"}, "label"),
                       doctest::Contains("line 3"), std::runtime_error);
  try {
    load_csv({dir + "/bad.csv"}, "label");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("column 'b'") != std::string::npos);
  }
}

TEST_CASE("csv rejects row-count mismatches between modalities") {
  const auto dir = temp_dir();
  write_file(dir + "/r1.csv", "a,label\n1,x\n2,y\n3,x\n");
  write_file(dir + "/r2.csv", "b,label\n1,x\n2,y\n");
  CHECK_THROWS_WITH_AS(load_csv({dir + "/r1.csv", dir + "/r2.csv"}, "label"),
                       doctest::Contains("has 2 rows"), std::runtime_error);
}

TEST_CASE("csv rejects non-numeric cells and missing label columns") {
  const auto dir = temp_dir();
  write_file(dir + "/nn.csv", "a,label\noops,x\n1,y\n");
  CHECK_THROWS_WITH_AS(load_csv({dir + "/nn.csv"}, "label"), doctest::Contains("non-numeric"),
                       std::runtime_error);
  write_file(dir + "/nl.csv", "a,b\n1,2\n");
  CHECK_THROWS_WITH_AS(load_csv({dir + "/nl.csv"}, "label"),
                       doctest::Contains("no label column"), std::runtime_error);
}

TEST_CASE("one percent of 6000 balanced samples is 60 validation rows") {
  auto spec = small_spec();
  spec.samples = 6000;
  const auto ds = synthesize(spec, 13);
  const auto [train, validation] = split_validation(ds, 0.01, 13);
  CHECK(validation.size() == 60);
  CHECK(train.size() == 5940);
}

TEST_CASE("half split of balanced data keeps both halves balanced") {
  auto spec = small_spec();
  spec.samples = 400;
  const auto ds = synthesize(spec, 15);
  const auto [train, validation] = split_validation(ds, 0.5, 15);
  CHECK(train.size() == 200);
  CHECK(validation.size() == 200);
  for (const auto* part : {&train, &validation}) {
    std::vector<int> hist(static_cast<std::size_t>(spec.classes), 0);
    for (int y : part->labels) hist[static_cast<std::size_t>(y)] += 1;
    for (int count : hist) CHECK(count == 50);
  }
}

TEST_CASE("validation split is deterministic and disjoint from training") {
  auto spec = small_spec();
  spec.samples = 600;
  const auto ds = synthesize(spec, 17);
  const auto [train_a, val_a] = split_validation(ds, 0.1, 99);
  const auto [train_b, val_b] = split_validation(ds, 0.1, 99);
  CHECK(val_a.labels == val_b.labels);
  CHECK(val_a.features[0].v == val_b.features[0].v);
  CHECK(train_a.size() + val_a.size() == ds.size());
}

TEST_CASE("a fraction below one sample per class is rejected") {
  auto spec = small_spec();
  spec.samples = 80;  // 20 per class; 1% of 20 < 1
  const auto ds = synthesize(spec, 19);
  CHECK_THROWS_AS(split_validation(ds, 0.01, 19), std::invalid_argument);
}
