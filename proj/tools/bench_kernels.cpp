// Times the serial matrix kernels against their OpenMP variants and a full
// simulated round with the client loop run serial vs parallel. The two paths
// must compute identical bytes; this target only reports speed.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "flexmod/config.hpp"
#include "flexmod/fedsim.hpp"
#include "flexmod/kernels.hpp"
#include "flexmod/rng.hpp"

using namespace flexmod;

namespace {

double seconds_of(const std::function<void()>& fn, int repeats) {
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < repeats; ++i) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(stop - start).count() / repeats;
}

void bench_matmuls(int size, int repeats) {
  Rng rng(7);
  std::vector<double> a(static_cast<std::size_t>(size) * size);
  std::vector<double> b(a.size()), c(a.size()), c_ref(a.size());
  for (double& x : a) x = rng.uniform(-1, 1);
  for (double& x : b) x = rng.uniform(-1, 1);

  struct Variant {
    const char* name;
    void (*serial)(const double*, const double*, double*, int, int, int);
    void (*omp)(const double*, const double*, double*, int, int, int);
  };
  const Variant variants[] = {
      {"matmul_nt", kernels::matmul_nt_serial, kernels::matmul_nt_omp},
      {"matmul_nn", kernels::matmul_nn_serial, kernels::matmul_nn_omp},
      {"matmul_tn", kernels::matmul_tn_serial, kernels::matmul_tn_omp},
  };
  for (const auto& v : variants) {
    const double ts = seconds_of([&] { v.serial(a.data(), b.data(), c_ref.data(), size, size, size); },
                                 repeats);
    const double tp = seconds_of([&] { v.omp(a.data(), b.data(), c.data(), size, size, size); },
                                 repeats);
    const bool identical = std::memcmp(c.data(), c_ref.data(), c.size() * sizeof(double)) == 0;
    std::printf("%-10s %4dx%-4d serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n", v.name,
                size, size, ts * 1e3, tp * 1e3, ts / tp, identical ? "bitwise-equal" : "MISMATCH");
  }
}

ExperimentConfig round_config() {
  ExperimentConfig config;
  config.model.input_dims = {8, 8};
  config.model.encoder_hidden = {{32}, {32}};
  config.model.header_hidden = {32};
  config.model.feature_dim = 16;
  config.model.classes = 4;
  config.dataset.synth = SyntheticSpec{2, 4, {8, 8}, 3000, {0.9, 0.3}, 1.0};
  config.dataset.clients = 10;
  config.dataset.alpha = 10.0;
  config.dataset.validation_fraction = 0.01;
  config.schedule.unit_time_by_mask = {0, 4, 3, 5};
  config.schedule.budget = 24;
  config.schedule.strategy = StrategyKind{};  // flexmod
  config.sgd = SgdConfig{0.01, 0.99, 0.001};
  config.batch_size = 64;
  config.run.rounds = 2;
  config.run.seed = 11;
  return config;
}

void bench_round() {
  const auto config = round_config();
  kernels::set_parallel(false);
#ifdef _OPENMP
  omp_set_num_threads(1);
#endif
  const double ts = seconds_of([&] { run_experiment(config); }, 1);
#ifdef _OPENMP
  omp_set_num_threads(omp_get_num_procs());
#endif
  kernels::set_parallel(true);
  const double tp = seconds_of([&] { run_experiment(config); }, 1);
  std::printf("%-10s 2 rounds x 10 clients: serial %8.3f ms   omp %8.3f ms   speedup %5.2fx\n",
              "fed round", ts * 1e3, tp * 1e3, ts / tp);
}

}  // namespace

int main(int argc, char** argv) {
  int size = 192;
  int repeats = 5;
  if (argc > 1) size = std::atoi(argv[1]);
  if (argc > 2) repeats = std::atoi(argv[2]);
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#endif
  bench_matmuls(size, repeats);
  bench_round();
  return 0;
}
