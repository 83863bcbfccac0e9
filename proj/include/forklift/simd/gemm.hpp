#pragma once

#include <cstddef>
#include <string_view>

namespace forklift::simd {

enum class Backend { Scalar, Avx2 };

std::string_view to_string(Backend b);

// Operand layout for C(m x n) = C0 + A(m x k) * B(k x n).
//   A(i, p) = a[i * a_row_stride + p * a_col_stride]  (any strides, so A^T is free)
//   B(p, j) = b[p * ldb + j]                          (row-major, unit column stride)
//   C(i, j) = c[i * ldc + j]
// C0 is the current content of C when `accumulate` is set, zero otherwise.
//
// Every C(i, j) is produced by one fused multiply-add chain over p = 0..k-1 in
// increasing order. The result is therefore independent of m, n, tiling and
// backend: the AVX2 kernels match the scalar reference bit for bit.
template <class T>
struct GemmArgs {
  std::ptrdiff_t m = 0, n = 0, k = 0;
  const T* a = nullptr;
  std::ptrdiff_t a_row_stride = 0, a_col_stride = 1;
  const T* b = nullptr;
  std::ptrdiff_t ldb = 0;
  T* c = nullptr;
  std::ptrdiff_t ldc = 0;
  bool accumulate = false;
};

void gemm(const GemmArgs<float>& args);
void gemm(const GemmArgs<double>& args);

// Explicit backends, for equivalence tests and benchmarks.
void gemm_scalar(const GemmArgs<float>& args);
void gemm_scalar(const GemmArgs<double>& args);
void gemm_avx2(const GemmArgs<float>& args);
void gemm_avx2(const GemmArgs<double>& args);

bool avx2_supported();

// Backend used by gemm(). Chosen on first use: AVX2+FMA when the CPU has it,
// unless FORKLIFT_SIMD=scalar is set in the environment.
Backend active_backend();
void set_backend(Backend b);

}  // namespace forklift::simd
