#include "kernels.hpp"

#include "isa_impl.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace sndcnn::kern {

namespace {

std::atomic<std::uint64_t> g_multiplies{0};

Isa detect_best() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq") &&
      __builtin_cpu_supports("avx512vl"))
    return Isa::avx512;
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return Isa::avx2;
#endif
  return Isa::scalar;
}

Isa clamp_to_cpu(Isa want) {
  const Isa best = detect_best();
  return static_cast<int>(want) < static_cast<int>(best) ? want : best;
}

Isa initial_isa() {
  if (const char* env = std::getenv("SNDCNN_ISA")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
    if (std::strcmp(env, "avx2") == 0) return clamp_to_cpu(Isa::avx2);
    if (std::strcmp(env, "avx512") == 0) return clamp_to_cpu(Isa::avx512);
  }
  return detect_best();
}

std::atomic<Isa>& isa_slot() {
  static std::atomic<Isa> slot{initial_isa()};
  return slot;
}

} // namespace

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::avx512: return "avx512";
    case Isa::avx2: return "avx2";
    default: return "scalar";
  }
}

Isa active_isa() { return isa_slot().load(std::memory_order_relaxed); }

void set_isa_limit(Isa isa) {
  isa_slot().store(clamp_to_cpu(isa), std::memory_order_relaxed);
}

std::uint64_t multiplies() { return g_multiplies.load(std::memory_order_relaxed); }
void reset_multiplies() { g_multiplies.store(0, std::memory_order_relaxed); }
void count_multiplies(std::uint64_t n) {
  g_multiplies.fetch_add(n, std::memory_order_relaxed);
}

#define SNDCNN_DISPATCH(fn, ...)                      \
  switch (active_isa()) {                             \
    case Isa::avx512: return avx512::fn(__VA_ARGS__); \
    case Isa::avx2: return avx2::fn(__VA_ARGS__);     \
    default: return scalar::fn(__VA_ARGS__);          \
  }

void gemm(int m, int n, int k, const float* a, int lda, bool ta, const float* b,
          int ldb, bool tb, float* c, int ldc, bool accumulate) {
  count_multiplies(std::uint64_t(m) * n * k);
  SNDCNN_DISPATCH(gemm, m, n, k, a, lda, ta, b, ldb, tb, c, ldc, accumulate)
}
void gemm(int m, int n, int k, const double* a, int lda, bool ta, const double* b,
          int ldb, bool tb, double* c, int ldc, bool accumulate) {
  count_multiplies(std::uint64_t(m) * n * k);
  SNDCNN_DISPATCH(gemm, m, n, k, a, lda, ta, b, ldb, tb, c, ldc, accumulate)
}

void dense_cols(int k, const float* h, const float* w, int ldw, const float* bias,
                const std::uint32_t* idx, int nidx, float* out) {
  count_multiplies(std::uint64_t(nidx) * k);
  SNDCNN_DISPATCH(dense_cols, k, h, w, ldw, bias, idx, nidx, out)
}
void dense_cols(int k, const double* h, const double* w, int ldw, const double* bias,
                const std::uint32_t* idx, int nidx, double* out) {
  count_multiplies(std::uint64_t(nidx) * k);
  SNDCNN_DISPATCH(dense_cols, k, h, w, ldw, bias, idx, nidx, out)
}

void selu_fwd(const float* x, float* y, std::size_t n, float alpha, float lambda) {
  SNDCNN_DISPATCH(selu_fwd, x, y, n, alpha, lambda)
}
void selu_fwd(const double* x, double* y, std::size_t n, double alpha, double lambda) {
  scalar::selu_fwd(x, y, n, alpha, lambda);
}
void selu_bwd(const float* x, const float* g, float* dx, std::size_t n, float alpha,
              float lambda) {
  SNDCNN_DISPATCH(selu_bwd, x, g, dx, n, alpha, lambda)
}
void selu_bwd(const double* x, const double* g, double* dx, std::size_t n,
              double alpha, double lambda) {
  scalar::selu_bwd(x, g, dx, n, alpha, lambda);
}

void relu_fwd(const float* x, float* y, std::size_t n) {
  SNDCNN_DISPATCH(relu_fwd, x, y, n)
}
void relu_fwd(const double* x, double* y, std::size_t n) {
  SNDCNN_DISPATCH(relu_fwd, x, y, n)
}
void relu_bwd(const float* x, const float* g, float* dx, std::size_t n) {
  SNDCNN_DISPATCH(relu_bwd, x, g, dx, n)
}
void relu_bwd(const double* x, const double* g, double* dx, std::size_t n) {
  SNDCNN_DISPATCH(relu_bwd, x, g, dx, n)
}

void add(const float* a, const float* b, float* y, std::size_t n) {
  SNDCNN_DISPATCH(add, a, b, y, n)
}
void add(const double* a, const double* b, double* y, std::size_t n) {
  SNDCNN_DISPATCH(add, a, b, y, n)
}

void col_mean_var(const float* x, int rows, int cols, float* mean, float* var) {
  SNDCNN_DISPATCH(col_mean_var, x, rows, cols, mean, var)
}
void col_mean_var(const double* x, int rows, int cols, double* mean, double* var) {
  SNDCNN_DISPATCH(col_mean_var, x, rows, cols, mean, var)
}

} // namespace sndcnn::kern
