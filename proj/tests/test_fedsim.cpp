#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "flexmod/fedsim.hpp"
#include "flexmod/kernels.hpp"
#include "flexmod/rng.hpp"

using namespace flexmod;

namespace {

ModelSpec two_modality_spec() {
  ModelSpec spec;
  spec.input_dims = {6, 5};
  spec.encoder_hidden = {{8}, {8}};
  spec.header_hidden = {10};
  spec.feature_dim = 7;
  spec.classes = 3;
  return spec;
}

MultimodalDataset random_dataset(const ModelSpec& spec, int samples, std::uint64_t seed) {
  Rng rng(seed);
  MultimodalDataset ds;
  ds.num_modalities = spec.modalities();
  ds.num_classes = spec.classes;
  for (int m = 0; m < spec.modalities(); ++m) {
    Matrix f(samples, spec.input_dims[static_cast<std::size_t>(m)]);
    for (double& v : f.v) v = rng.uniform(-1, 1);
    ds.features.push_back(std::move(f));
  }
  for (int i = 0; i < samples; ++i) ds.labels.push_back(i % spec.classes);
  return ds;
}

ExperimentConfig reference_config(int rounds = 2, std::uint64_t seed = 1) {
  ExperimentConfig config;
  config.model.input_dims = {6, 5};
  config.model.encoder_hidden = {{8}, {8}};
  config.model.header_hidden = {10};
  config.model.feature_dim = 7;
  config.model.classes = 3;
  config.dataset.synth = SyntheticSpec{2, 3, {6, 5}, 600, {0.9, 0.3}, 1.0};
  config.dataset.clients = 4;
  config.dataset.alpha = 10.0;
  config.dataset.validation_fraction = 0.05;
  config.schedule.unit_time_by_mask = {0, 4, 3, 5};
  config.schedule.budget = 24;
  config.sgd = SgdConfig{0.01, 0.99, 0.001};
  config.batch_size = 32;
  config.agent.batch_size = 2;
  config.agent.replay_capacity = 64;
  config.run.rounds = rounds;
  config.run.seed = seed;
  config.run.early_stop = false;
  return config;
}

std::vector<double> model_values(const GlobalModel& model) {
  std::vector<double> out = flatten(model.header);
  for (const auto& enc : model.encoders) {
    const auto f = flatten(enc);
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

bool records_equal_except_beta(const RoundRecord& a, const RoundRecord& b) {
  return a.round == b.round && a.allocation == b.allocation && a.schedule == b.schedule &&
         a.omega == b.omega && a.gamma == b.gamma && a.accuracy == b.accuracy &&
         a.loss == b.loss && a.reward == b.reward && a.budget_used == b.budget_used &&
         a.budget == b.budget;
}

}  // namespace

TEST_CASE("single-modality model is header composed with encoder") {
  ModelSpec spec;
  spec.input_dims = {4};
  spec.encoder_hidden = {{6}};
  spec.header_hidden = {5};
  spec.feature_dim = 3;
  spec.classes = 2;
  Rng rng(1);
  const auto model = make_global_model(spec, rng);
  const auto ds = random_dataset(spec, 8, 2);
  std::vector<int> rows(8);
  std::iota(rows.begin(), rows.end(), 0);

  const auto fused = forward_full(model, modality_inputs(model, ds, rows));
  const auto features = forward_mlp(model.encoders[0], modality_batch(ds, 0, rows));
  const auto direct = forward_mlp(model.header, features);
  CHECK(fused.values() == direct.values());
}

TEST_CASE("full forward matches a manual two-stage oracle") {
  const auto spec = two_modality_spec();
  Rng rng(3);
  const auto model = make_global_model(spec, rng);
  const auto ds = random_dataset(spec, 10, 4);
  std::vector<int> rows(10);
  std::iota(rows.begin(), rows.end(), 0);

  std::vector<Tensor> blocks;
  for (int m = 0; m < 2; ++m) {
    blocks.push_back(forward_mlp(model.encoders[static_cast<std::size_t>(m)],
                                 modality_batch(ds, m, rows)));
  }
  const auto oracle = forward_mlp(model.header, concat_cols(blocks));
  const auto fused = forward_full(model, modality_inputs(model, ds, rows));
  CHECK(fused.values() == oracle.values());
  // the full mask reproduces forward_full bit for bit
  const auto masked = forward_subset(model, modality_inputs(model, ds, rows), 0b11);
  CHECK(masked.values() == fused.values());
}

TEST_CASE("aggregate of one model is that model") {
  Rng rng(5);
  const auto model = make_global_model(two_modality_spec(), rng);
  const auto out = aggregate({model});
  CHECK(model_values(out) == model_values(model));
}

TEST_CASE("aggregate of w and -w is zero") {
  Rng rng(7);
  const auto a = make_global_model(two_modality_spec(), rng);
  auto b = clone_model(a);
  for (auto& enc : b.encoders) {
    for (auto& layer : enc.layers) {
      for (double& w : layer.weight.values()) w = -w;
      for (double& x : layer.bias.values()) x = -x;
    }
  }
  for (auto& layer : b.header.layers) {
    for (double& w : layer.weight.values()) w = -w;
    for (double& x : layer.bias.values()) x = -x;
  }
  const auto out = aggregate({a, b});
  for (double v : model_values(out)) CHECK(v == 0.0);
}

TEST_CASE("aggregate of identical copies is bit-identical") {
  Rng rng(9);
  const auto model = make_global_model(two_modality_spec(), rng);
  const auto out = aggregate({model, model, model, model, model, model, model});
  CHECK(model_values(out) == model_values(model));
}

TEST_CASE("aggregate matches a per-parameter mean oracle") {
  Rng rng(11);
  std::vector<GlobalModel> models;
  for (int i = 0; i < 5; ++i) models.push_back(make_global_model(two_modality_spec(), rng));
  const auto out = aggregate(models);

  const auto base = model_values(models[0]);
  std::vector<std::vector<double>> all;
  for (const auto& m : models) all.push_back(model_values(m));
  for (std::size_t i = 0; i < base.size(); ++i) {
    double delta = 0.0;
    for (std::size_t c = 1; c < all.size(); ++c) delta += all[c][i] - base[i];
    const double expected = base[i] + delta / 5.0;
    CHECK(model_values(out)[i] == expected);
    // and within rounding of the naive mean
    double naive = 0.0;
    for (const auto& v : all) naive += v[i];
    naive /= 5.0;
    CHECK(model_values(out)[i] == doctest::Approx(naive).epsilon(1e-12));
  }
}

TEST_CASE("aggregate rejects structurally different models") {
  Rng rng(13);
  const auto a = make_global_model(two_modality_spec(), rng);
  ModelSpec other = two_modality_spec();
  other.feature_dim = 9;
  const auto b = make_global_model(other, rng);
  CHECK_THROWS_AS(aggregate({a, b}), std::invalid_argument);
}

TEST_CASE("evaluate: constant predictor, uniform logits, and an argmax oracle") {
  const auto spec = two_modality_spec();
  Rng rng(15);
  auto model = make_global_model(spec, rng);
  auto ds = random_dataset(spec, 9, 16);

  // force logits constant: zero header output layer, bias favoring class 0
  auto& last = model.header.layers.back();
  for (double& w : last.weight.values()) w = 0.0;
  for (double& b : last.bias.values()) b = 0.0;
  last.bias.values()[0] = 5.0;
  for (auto& y : ds.labels) y = 0;
  CHECK(evaluate(model, ds).accuracy == 1.0);

  // uniform logits on balanced labels: ties break to class 0, giving 1/K
  last.bias.values()[0] = 0.0;
  for (int i = 0; i < ds.size(); ++i) ds.labels[static_cast<std::size_t>(i)] = i % 3;
  CHECK(evaluate(model, ds).accuracy == doctest::Approx(1.0 / 3).epsilon(1e-12));

  // random model vs a manual argmax loop
  Rng rng2(17);
  const auto random_model = make_global_model(spec, rng2);
  const auto ds2 = random_dataset(spec, 40, 18);
  std::vector<int> rows(40);
  std::iota(rows.begin(), rows.end(), 0);
  const auto logits = forward_full(random_model, modality_inputs(random_model, ds2, rows));
  int correct = 0;
  for (int i = 0; i < 40; ++i) {
    int arg = 0;
    for (int j = 1; j < 3; ++j) {
      if (logits.values()[static_cast<std::size_t>(i) * 3 + j] >
          logits.values()[static_cast<std::size_t>(i) * 3 + arg]) {
        arg = j;
      }
    }
    if (arg == ds2.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  CHECK(evaluate(random_model, ds2).accuracy == doctest::Approx(correct / 40.0).epsilon(1e-12));
  CHECK_THROWS_AS(evaluate(random_model, MultimodalDataset{}), std::invalid_argument);
}

TEST_CASE("empty schedule leaves the model untouched") {
  const auto spec = two_modality_spec();
  Rng rng(19);
  const auto model = make_global_model(spec, rng);
  const auto ds = random_dataset(spec, 20, 20);
  std::vector<int> rows(20);
  std::iota(rows.begin(), rows.end(), 0);
  const auto result = local_train(model, ds, rows, Schedule{}, 8, SgdConfig{0.1, 1.0, 1e-6},
                                  Rng(1));
  CHECK(model_values(result.model) == model_values(model));
}

TEST_CASE("a singleton schedule freezes the other encoder bit-exactly") {
  const auto spec = two_modality_spec();
  Rng rng(21);
  const auto model = make_global_model(spec, rng);
  const auto ds = random_dataset(spec, 24, 22);
  std::vector<int> rows(24);
  std::iota(rows.begin(), rows.end(), 0);

  Schedule schedule;
  schedule.slots = {0b01, 0b01};  // modality 1 only
  const auto result = local_train(model, ds, rows, schedule, 8, SgdConfig{0.05, 1.0, 1e-6},
                                  Rng(2));
  CHECK(flatten(result.model.encoders[1]) == flatten(model.encoders[1]));  // frozen
  CHECK(flatten(result.model.encoders[0]) != flatten(model.encoders[0]));
  CHECK(flatten(result.model.header) != flatten(model.header));
}

TEST_CASE("masked training equals an oracle that zeroes unselected gradients") {
  const auto spec = two_modality_spec();
  Rng rng(23);
  const auto model = make_global_model(spec, rng);
  const auto ds = random_dataset(spec, 8, 24);
  std::vector<int> rows(8);
  std::iota(rows.begin(), rows.end(), 0);

  // one slot, one batch (batch size = shard size), same shuffle stream
  Schedule schedule;
  schedule.slots = {0b10};  // modality 2 only
  SgdConfig sgd{0.05, 1.0, 1e-6};
  const auto trained = local_train(model, ds, rows, schedule, 8, sgd, Rng(77));

  // oracle: full backward, hand-zero the non-member encoder's gradients, step
  GlobalModel oracle = clone_model(model);
  std::vector<int> order(rows);
  Rng shuffle_rng(77);
  shuffle_rng.shuffle(order);
  Tensor loss = softmax_cross_entropy(
      forward_full(oracle, modality_inputs(oracle, ds, order)), label_batch(ds, order));
  backward(loss);
  for (auto& p : parameters(oracle.encoders[0])) {
    for (double& g : p.grad()) g = 0.0;
  }
  SgdConfig oracle_sgd{0.05, 1.0, 1e-6};
  auto all = model_parameters(oracle);
  sgd_step(all, oracle_sgd);

  CHECK(model_values(trained.model) == model_values(oracle));
}

TEST_CASE("full-combination schedule equals unrestricted training bit-exactly") {
  const auto spec = two_modality_spec();
  Rng rng(25);
  const auto model = make_global_model(spec, rng);
  const auto ds = random_dataset(spec, 30, 26);
  std::vector<int> rows(30);
  std::iota(rows.begin(), rows.end(), 0);

  Schedule schedule;
  schedule.slots = {0b11, 0b11, 0b11};
  const auto masked = local_train(model, ds, rows, schedule, 10, SgdConfig{0.05, 0.99, 1e-4},
                                  Rng(31));

  // unrestricted: step every parameter each batch, same batch stream
  GlobalModel plain = clone_model(model);
  SgdConfig sgd{0.05, 0.99, 1e-4};
  Rng batch_rng(31);
  std::vector<int> order(rows);
  auto params = model_parameters(plain);
  for (int slot = 0; slot < 3; ++slot) {
    batch_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += 10) {
      std::vector<int> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(start + 10));
      backward(softmax_cross_entropy(forward_full(plain, modality_inputs(plain, ds, batch)),
                                     label_batch(ds, batch)));
      sgd_step(params, sgd);
    }
  }
  CHECK(model_values(masked.model) == model_values(plain));
  CHECK(masked.sgd.learning_rate == sgd.learning_rate);
}

TEST_CASE("local training records positive gradient norms") {
  const auto spec = two_modality_spec();
  Rng rng(27);
  const auto model = make_global_model(spec, rng);
  const auto ds = random_dataset(spec, 16, 28);
  std::vector<int> rows(16);
  std::iota(rows.begin(), rows.end(), 0);
  Schedule schedule;
  schedule.slots = {0b11};
  const auto result = local_train(model, ds, rows, schedule, 8, SgdConfig{0.01, 1.0, 1e-6},
                                  Rng(3));
  CHECK(result.max_encoder_grad_norm > 0.0);
}

TEST_CASE("entire_update fills the budget with full slots and idles the rest") {
  auto config = reference_config(1, 41);
  config.schedule.strategy = StrategyKind::parse("entire_update", 2);
  Simulation sim(config);
  const auto record = sim.run_round();
  CHECK(record.allocation[3] == 4);  // floor(24 / 5)
  CHECK(record.allocation[1] == 0);
  CHECK(record.allocation[2] == 0);
  CHECK(record.budget_used == 20);
  CHECK(record.schedule.size() == 4);
}

TEST_CASE("entire_update with budget below the full cost trains nothing") {
  auto config = reference_config(1, 43);
  config.schedule.strategy = StrategyKind::parse("entire_update", 2);
  config.schedule.budget = 4;  // t_full = 5
  Simulation sim(config);
  const auto before = model_values(sim.model());
  const auto record = sim.run_round();
  CHECK(record.schedule.empty());
  CHECK(record.budget_used == 0);
  CHECK(model_values(sim.model()) == before);
}

TEST_CASE("single-modality strategy spends the budget on that modality") {
  auto config = reference_config(1, 45);
  config.schedule.strategy = StrategyKind::parse("single_modality:2", 2);
  Simulation sim(config);
  const auto record = sim.run_round();
  CHECK(record.allocation[2] == 8);  // floor(24 / 3)
  CHECK(record.allocation[1] == 0);
  CHECK(record.allocation[3] == 0);
}

TEST_CASE("every executed schedule respects budget and descending order") {
  auto config = reference_config(3, 47);
  const auto result = run_experiment(config);
  REQUIRE(result.rounds.size() == 3);
  for (const auto& record : result.rounds) {
    CHECK(record.budget_used <= record.budget);
    long long recomputed = 0;
    for (int mask : record.schedule) {
      recomputed += config.schedule.unit_time_by_mask[static_cast<std::size_t>(mask)];
    }
    CHECK(recomputed == record.budget_used);
    for (std::size_t i = 1; i < record.schedule.size(); ++i) {
      CHECK(cardinality(record.schedule[i - 1]) >= cardinality(record.schedule[i]));
    }
  }
}

TEST_CASE("zero rounds returns the initial model and no records") {
  auto config = reference_config(0, 49);
  Rng init = substream(config.run.seed, "model.init");
  const auto expected = make_global_model(config.model, init);
  const auto result = run_experiment(config);
  CHECK(result.rounds.empty());
  CHECK(model_values(result.final_model) == model_values(expected));
}

TEST_CASE("identical config and seed reproduce identical record streams") {
  auto config = reference_config(3, 51);
  const auto a = run_experiment(config);
  const auto b = run_experiment(config);
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t i = 0; i < a.rounds.size(); ++i) {
    CHECK(a.rounds[i].beta == b.rounds[i].beta);
    CHECK(a.rounds[i].accuracy == b.rounds[i].accuracy);
    CHECK(a.rounds[i].loss == b.rounds[i].loss);
    CHECK(a.rounds[i].allocation == b.rounds[i].allocation);
    CHECK(a.rounds[i].omega == b.rounds[i].omega);
    CHECK(a.rounds[i].gamma == b.rounds[i].gamma);
  }
  CHECK(model_values(a.final_model) == model_values(b.final_model));
}

TEST_CASE("records are identical with the parallel kernels on and off") {
  auto config = reference_config(2, 53);
  kernels::set_parallel(false);
  const auto serial = run_experiment(config);
  kernels::set_parallel(true);
  const auto parallel = run_experiment(config);
  REQUIRE(serial.rounds.size() == parallel.rounds.size());
  for (std::size_t i = 0; i < serial.rounds.size(); ++i) {
    CHECK(serial.rounds[i].accuracy == parallel.rounds[i].accuracy);
    CHECK(serial.rounds[i].loss == parallel.rounds[i].loss);
    CHECK(serial.rounds[i].omega == parallel.rounds[i].omega);
    CHECK(serial.rounds[i].gamma == parallel.rounds[i].gamma);
  }
  CHECK(model_values(serial.final_model) == model_values(parallel.final_model));
}

TEST_CASE("pinned flexmod reproduces entire_update except for beta") {
  auto pinned = reference_config(3, 55);
  pinned.schedule.pin_full_combination = true;

  auto entire = reference_config(3, 55);
  entire.schedule.strategy = StrategyKind::parse("entire_update", 2);

  const auto a = run_experiment(pinned);
  const auto b = run_experiment(entire);
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t i = 0; i < a.rounds.size(); ++i) {
    CHECK(records_equal_except_beta(a.rounds[i], b.rounds[i]));
  }
  CHECK(model_values(a.final_model) == model_values(b.final_model));
}

TEST_CASE("early stop halts at the target accuracy") {
  auto config = reference_config(50, 57);
  config.run.early_stop = true;
  config.agent.target_accuracy = 0.05;  // trivially reachable
  const auto result = run_experiment(config);
  CHECK(result.rounds.size() < 50);
  CHECK(result.rounds_to_target == static_cast<int>(result.rounds.size()));
}

TEST_CASE("fixed beta strategies bypass the agent") {
  auto config = reference_config(2, 59);
  config.schedule.strategy = StrategyKind::parse("fixed_beta:0.25", 2);
  const auto result = run_experiment(config);
  for (const auto& record : result.rounds) CHECK(record.beta == 0.25);
  CHECK(!result.agent.has_value());
}
