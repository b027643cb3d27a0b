#pragma once
// Arithmetic kernels with scalar reference implementations and SIMD variants
// (AVX2+FMA, AVX-512) selected at runtime. Every GEMM-family kernel follows
// one accumulation contract: each output element is a fused-multiply-add
// chain in ascending reduction-index order. SIMD variants vectorize across
// independent output elements, never across the reduction, so their results
// are bit-identical to the scalar reference.

#include <cstddef>
#include <cstdint>

namespace sndcnn::kern {

enum class Isa { scalar = 0, avx2 = 1, avx512 = 2 };

const char* isa_name(Isa isa);

// Best ISA the CPU supports, possibly narrowed by set_isa_limit or the
// SNDCNN_ISA environment variable (scalar|avx2|avx512).
Isa active_isa();

// Narrow the dispatch target at runtime (equivalence tests, benchmarks).
// Requests above what the CPU supports are clamped.
void set_isa_limit(Isa isa);

// Multiply accounting. gemm and dense_cols add the exact count of scalar
// multiplies they perform; safe to read from any thread.
std::uint64_t multiplies();
void reset_multiplies();
void count_multiplies(std::uint64_t n);

// C[m x n] (+)= Aop[m x k] * Bop[k x n], row-major with leading dimensions
// in elements; ta/tb select the transposed view of the stored matrix.
void gemm(int m, int n, int k, const float* a, int lda, bool ta,
          const float* b, int ldb, bool tb, float* c, int ldc, bool accumulate);
void gemm(int m, int n, int k, const double* a, int lda, bool ta,
          const double* b, int ldb, bool tb, double* c, int ldc, bool accumulate);

// out[i] = dot(h, W[:, idx[i]]) + bias[idx[i]] over the k rows of row-major
// W (leading dimension ldw). The chain order matches gemm, so a lazily
// computed column equals the corresponding full-output element bitwise.
// bias may be null.
void dense_cols(int k, const float* h, const float* w, int ldw,
                const float* bias, const std::uint32_t* idx, int nidx, float* out);
void dense_cols(int k, const double* h, const double* w, int ldw,
                const double* bias, const std::uint32_t* idx, int nidx, double* out);

// Elementwise activations. The f32 SIMD selu variants use a polynomial exp
// and may differ from the scalar path by a few ulp in the saturating branch;
// f64 selu always dispatches to the scalar reference.
void selu_fwd(const float* x, float* y, std::size_t n, float alpha, float lambda);
void selu_fwd(const double* x, double* y, std::size_t n, double alpha, double lambda);
void selu_bwd(const float* x, const float* g, float* dx, std::size_t n,
              float alpha, float lambda);
void selu_bwd(const double* x, const double* g, double* dx, std::size_t n,
              double alpha, double lambda);

void relu_fwd(const float* x, float* y, std::size_t n);
void relu_fwd(const double* x, double* y, std::size_t n);
void relu_bwd(const float* x, const float* g, float* dx, std::size_t n);
void relu_bwd(const double* x, const double* g, double* dx, std::size_t n);

// y[i] = a[i] + b[i]
void add(const float* a, const float* b, float* y, std::size_t n);
void add(const double* a, const double* b, double* y, std::size_t n);

// Per-column population mean and variance of row-major x[rows x cols],
// accumulated in ascending-row order (two-pass), divided by rows.
void col_mean_var(const float* x, int rows, int cols, float* mean, float* var);
void col_mean_var(const double* x, int rows, int cols, double* mean, double* var);

} // namespace sndcnn::kern
