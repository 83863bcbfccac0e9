// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <cmath>

#include "forklift/simd/gemm.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace forklift::simd {

namespace {

template <class T>
struct Lanes;

template <>
struct Lanes<float> {
  using V = __m256;
  static constexpr int kWidth = 8;
  static V zero() { return _mm256_setzero_ps(); }
  static V load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, V v) { _mm256_storeu_ps(p, v); }
  static V splat(float x) { return _mm256_set1_ps(x); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
};

template <>
struct Lanes<double> {
  using V = __m256d;
  static constexpr int kWidth = 4;
  static V zero() { return _mm256_setzero_pd(); }
  static V load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, V v) { _mm256_storeu_pd(p, v); }
  static V splat(double x) { return _mm256_set1_pd(x); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
};

// MR rows by NV vectors of columns, full k chain per register.
template <class T, int MR, int NV>
void tile(const GemmArgs<T>& g, std::ptrdiff_t i0, std::ptrdiff_t j0) {
  using L = Lanes<T>;
  typename L::V acc[MR][NV];
  for (int r = 0; r < MR; ++r) {
    for (int v = 0; v < NV; ++v) {
      acc[r][v] = g.accumulate ? L::load(g.c + (i0 + r) * g.ldc + j0 + v * L::kWidth) : L::zero();
    }
  }
  const T* arow[MR];
  for (int r = 0; r < MR; ++r) arow[r] = g.a + (i0 + r) * g.a_row_stride;
  const T* bcol = g.b + j0;
  for (std::ptrdiff_t p = 0; p < g.k; ++p) {
    typename L::V bv[NV];
    for (int v = 0; v < NV; ++v) bv[v] = L::load(bcol + v * L::kWidth);
    for (int r = 0; r < MR; ++r) {
      const typename L::V av = L::splat(arow[r][p * g.a_col_stride]);
      for (int v = 0; v < NV; ++v) acc[r][v] = L::fma(av, bv[v], acc[r][v]);
    }
    bcol += g.ldb;
  }
  for (int r = 0; r < MR; ++r) {
    for (int v = 0; v < NV; ++v) L::store(g.c + (i0 + r) * g.ldc + j0 + v * L::kWidth, acc[r][v]);
  }
}

template <class T, int NV>
void row_block(const GemmArgs<T>& g, std::ptrdiff_t j0) {
  std::ptrdiff_t i = 0;
  for (; i + 4 <= g.m; i += 4) tile<T, 4, NV>(g, i, j0);
  switch (g.m - i) {
    case 3: tile<T, 3, NV>(g, i, j0); break;
    case 2: tile<T, 2, NV>(g, i, j0); break;
    case 1: tile<T, 1, NV>(g, i, j0); break;
    default: break;
  }
}

// Leftover columns narrower than one vector: same chain, scalar fma.
template <class T>
void column_tail(const GemmArgs<T>& g, std::ptrdiff_t j0) {
  for (std::ptrdiff_t i = 0; i < g.m; ++i) {
    const T* arow = g.a + i * g.a_row_stride;
    T* crow = g.c + i * g.ldc;
    for (std::ptrdiff_t j = j0; j < g.n; ++j) {
      T acc = g.accumulate ? crow[j] : T(0);
      for (std::ptrdiff_t p = 0; p < g.k; ++p) acc = std::fma(arow[p * g.a_col_stride], g.b[p * g.ldb + j], acc);
      crow[j] = acc;
    }
  }
}

template <class T>
void gemm_tiled(const GemmArgs<T>& g) {
  constexpr int W = Lanes<T>::kWidth;
  std::ptrdiff_t j = 0;
  for (; j + 3 * W <= g.n; j += 3 * W) row_block<T, 3>(g, j);
  if (j + 2 * W <= g.n) {
    row_block<T, 2>(g, j);
    j += 2 * W;
  }
  if (j + W <= g.n) {
    row_block<T, 1>(g, j);
    j += W;
  }
  if (j < g.n) column_tail(g, j);
}

}  // namespace

void gemm_avx2(const GemmArgs<float>& args) { gemm_tiled(args); }
void gemm_avx2(const GemmArgs<double>& args) { gemm_tiled(args); }

}  // namespace forklift::simd

#else

namespace forklift::simd {
// Non-x86 builds: the dispatcher never selects this, keep the symbol linkable.
void gemm_avx2(const GemmArgs<float>& args) { gemm_scalar(args); }
void gemm_avx2(const GemmArgs<double>& args) { gemm_scalar(args); }
}  // namespace forklift::simd

#endif
