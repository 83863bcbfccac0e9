#include <atomic>
#include <cstdlib>
#include <string_view>

#include "forklift/simd/gemm.hpp"

namespace forklift::simd {

namespace {

Backend detect() {
  if (const char* env = std::getenv("FORKLIFT_SIMD"); env && std::string_view(env) == "scalar") {
    return Backend::Scalar;
  }
  return avx2_supported() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& backend_slot() {
  static std::atomic<Backend> slot{detect()};
  return slot;
}

}  // namespace

std::string_view to_string(Backend b) { return b == Backend::Avx2 ? "avx2" : "scalar"; }

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() { return backend_slot().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_supported()) b = Backend::Scalar;
  backend_slot().store(b, std::memory_order_relaxed);
}

void gemm(const GemmArgs<float>& args) {
  if (args.m == 0 || args.n == 0) return;
  active_backend() == Backend::Avx2 ? gemm_avx2(args) : gemm_scalar(args);
}

void gemm(const GemmArgs<double>& args) {
  if (args.m == 0 || args.n == 0) return;
  active_backend() == Backend::Avx2 ? gemm_avx2(args) : gemm_scalar(args);
}

}  // namespace forklift::simd
