#include <cmath>

#include "forklift/simd/gemm.hpp"

namespace forklift::simd {

namespace {

template <class T>
void gemm_reference(const GemmArgs<T>& g) {
  for (std::ptrdiff_t i = 0; i < g.m; ++i) {
    const T* arow = g.a + i * g.a_row_stride;
    T* crow = g.c + i * g.ldc;
    if (!g.accumulate) {
      for (std::ptrdiff_t j = 0; j < g.n; ++j) crow[j] = T(0);
    }
    // p outermost keeps B rows contiguous; each crow[j] still sees p in order.
    for (std::ptrdiff_t p = 0; p < g.k; ++p) {
      const T ap = arow[p * g.a_col_stride];
      const T* brow = g.b + p * g.ldb;
      for (std::ptrdiff_t j = 0; j < g.n; ++j) crow[j] = std::fma(ap, brow[j], crow[j]);
    }
  }
}

}  // namespace

void gemm_scalar(const GemmArgs<float>& args) { gemm_reference(args); }
void gemm_scalar(const GemmArgs<double>& args) { gemm_reference(args); }

}  // namespace forklift::simd
