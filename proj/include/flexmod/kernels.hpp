// Dense matrix kernels behind the tensor ops. Each kernel has a serial
// reference and an OpenMP variant with an identical loop body, so the two
// produce bitwise-equal results; the dispatching wrappers pick a variant from
// the global switch. tools/bench_kernels compares the two.
#pragma once

#include <cstddef>

namespace flexmod::kernels {

bool parallel_enabled();
void set_parallel(bool enabled);

// Work below this many multiply-adds is not worth a parallel region.
inline constexpr std::size_t kParallelThreshold = 16 * 1024;

// C[m x n] = A[m x k] * B[n x k]^T
void matmul_nt_serial(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt_omp(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);

// C[m x n] = A[m x k] * B[k x n]
void matmul_nn_serial(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nn_omp(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n);

// C[m x n] = A[k x m]^T * B[k x n]
void matmul_tn_serial(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn_omp(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);

}  // namespace flexmod::kernels
