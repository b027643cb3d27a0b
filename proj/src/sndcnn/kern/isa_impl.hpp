#pragma once
// Internal: per-ISA entry points wired up by dispatch.cpp. Each set lives in
// its own translation unit compiled with the matching -m flags; a symbol is
// only reached after the CPU check in active_isa().

#include <cstddef>
#include <cstdint>

#define SNDCNN_DECLARE_ISA_KERNELS(ns)                                          \
  namespace sndcnn::kern::ns {                                                  \
  void gemm(int m, int n, int k, const float* a, int lda, bool ta,              \
            const float* b, int ldb, bool tb, float* c, int ldc, bool acc);     \
  void gemm(int m, int n, int k, const double* a, int lda, bool ta,             \
            const double* b, int ldb, bool tb, double* c, int ldc, bool acc);   \
  void dense_cols(int k, const float* h, const float* w, int ldw,               \
                  const float* bias, const std::uint32_t* idx, int nidx,        \
                  float* out);                                                  \
  void dense_cols(int k, const double* h, const double* w, int ldw,             \
                  const double* bias, const std::uint32_t* idx, int nidx,       \
                  double* out);                                                 \
  void selu_fwd(const float* x, float* y, std::size_t n, float alpha,           \
                float lambda);                                                  \
  void selu_bwd(const float* x, const float* g, float* dx, std::size_t n,       \
                float alpha, float lambda);                                     \
  void relu_fwd(const float* x, float* y, std::size_t n);                       \
  void relu_fwd(const double* x, double* y, std::size_t n);                     \
  void relu_bwd(const float* x, const float* g, float* dx, std::size_t n);      \
  void relu_bwd(const double* x, const double* g, double* dx, std::size_t n);   \
  void add(const float* a, const float* b, float* y, std::size_t n);            \
  void add(const double* a, const double* b, double* y, std::size_t n);         \
  void col_mean_var(const float* x, int rows, int cols, float* mean,            \
                    float* var);                                                \
  void col_mean_var(const double* x, int rows, int cols, double* mean,          \
                    double* var);                                               \
  }

SNDCNN_DECLARE_ISA_KERNELS(scalar)
SNDCNN_DECLARE_ISA_KERNELS(avx2)
SNDCNN_DECLARE_ISA_KERNELS(avx512)

namespace sndcnn::kern::scalar {
// f64 selu has no SIMD variant; both precisions live here.
void selu_fwd(const double* x, double* y, std::size_t n, double alpha, double lambda);
void selu_bwd(const double* x, const double* g, double* dx, std::size_t n,
              double alpha, double lambda);
}
