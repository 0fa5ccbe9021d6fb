#include "flexmod/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace flexmod::kernels {

namespace {
std::atomic<bool> g_parallel{true};

inline bool use_omp(std::size_t work) {
  if (!g_parallel.load(std::memory_order_relaxed) || work < kParallelThreshold) return false;
#ifdef _OPENMP
  // inside an outer region (e.g. the per-client loop) a nested team only adds
  // overhead
  if (omp_in_parallel()) return false;
#endif
  return true;
}
}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool enabled) { g_parallel.store(enabled, std::memory_order_relaxed); }

// Every output element is written by exactly one iteration and the inner
// accumulation order is fixed, so the omp variants match the serial ones
// bitwise for any thread count.

void matmul_nt_serial(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      const double* ai = a + static_cast<std::size_t>(i) * k;
      const double* bj = b + static_cast<std::size_t>(j) * k;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
}

void matmul_nt_omp(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      const double* ai = a + static_cast<std::size_t>(i) * k;
      const double* bj = b + static_cast<std::size_t>(j) * k;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  const std::size_t work = static_cast<std::size_t>(m) * n * k;
  if (use_omp(work)) {
    matmul_nt_omp(a, b, c, m, k, n);
  } else {
    matmul_nt_serial(a, b, c, m, k, n);
  }
}

void matmul_nn_serial(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_nn_omp(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  const std::size_t work = static_cast<std::size_t>(m) * n * k;
  if (use_omp(work)) {
    matmul_nn_omp(a, b, c, m, k, n);
  } else {
    matmul_nn_serial(a, b, c, m, k, n);
  }
}

void matmul_tn_serial(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        acc += a[static_cast<std::size_t>(p) * m + i] * b[static_cast<std::size_t>(p) * n + j];
      }
      c[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
}

void matmul_tn_omp(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        acc += a[static_cast<std::size_t>(p) * m + i] * b[static_cast<std::size_t>(p) * n + j];
      }
      c[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  const std::size_t work = static_cast<std::size_t>(m) * n * k;
  if (use_omp(work)) {
    matmul_tn_omp(a, b, c, m, k, n);
  } else {
    matmul_tn_serial(a, b, c, m, k, n);
  }
}

}  // namespace flexmod::kernels
