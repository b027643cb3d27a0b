// Scalar reference kernels. These define the numeric contract: fma chains in
// ascending reduction order, two-pass column statistics, branch selection for
// the activations. SIMD variants must reproduce gemm/dense_cols/relu/add/
// col_mean_var bitwise.

#include "isa_impl.hpp"

#include <cmath>

namespace sndcnn::kern::scalar {

namespace {

template <class S>
inline S view_at(const S* a, int ld, bool trans, int row, int col) {
  return trans ? a[static_cast<std::size_t>(col) * ld + row]
               : a[static_cast<std::size_t>(row) * ld + col];
}

template <class S>
void gemm_impl(int m, int n, int k, const S* a, int lda, bool ta, const S* b,
               int ldb, bool tb, S* c, int ldc, bool acc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      S sum = acc ? c[static_cast<std::size_t>(i) * ldc + j] : S(0);
      for (int p = 0; p < k; ++p)
        sum = std::fma(view_at(a, lda, ta, i, p), view_at(b, ldb, tb, p, j), sum);
      c[static_cast<std::size_t>(i) * ldc + j] = sum;
    }
  }
}

template <class S>
void dense_cols_impl(int k, const S* h, const S* w, int ldw, const S* bias,
                     const std::uint32_t* idx, int nidx, S* out) {
  for (int i = 0; i < nidx; ++i) {
    const std::uint32_t j = idx[i];
    S sum = S(0);
    for (int p = 0; p < k; ++p)
      sum = std::fma(h[p], w[static_cast<std::size_t>(p) * ldw + j], sum);
    out[i] = bias ? sum + bias[j] : sum;
  }
}

template <class S>
void col_mean_var_impl(const S* x, int rows, int cols, S* mean, S* var) {
  const S inv = S(rows);
  for (int j = 0; j < cols; ++j) mean[j] = S(0);
  for (int r = 0; r < rows; ++r) {
    const S* row = x + static_cast<std::size_t>(r) * cols;
    for (int j = 0; j < cols; ++j) mean[j] += row[j];
  }
  for (int j = 0; j < cols; ++j) mean[j] /= inv;
  for (int j = 0; j < cols; ++j) var[j] = S(0);
  for (int r = 0; r < rows; ++r) {
    const S* row = x + static_cast<std::size_t>(r) * cols;
    for (int j = 0; j < cols; ++j) {
      const S d = row[j] - mean[j];
      var[j] = std::fma(d, d, var[j]);
    }
  }
  for (int j = 0; j < cols; ++j) var[j] /= inv;
}

} // namespace

void gemm(int m, int n, int k, const float* a, int lda, bool ta, const float* b,
          int ldb, bool tb, float* c, int ldc, bool acc) {
  gemm_impl(m, n, k, a, lda, ta, b, ldb, tb, c, ldc, acc);
}
void gemm(int m, int n, int k, const double* a, int lda, bool ta, const double* b,
          int ldb, bool tb, double* c, int ldc, bool acc) {
  gemm_impl(m, n, k, a, lda, ta, b, ldb, tb, c, ldc, acc);
}

void dense_cols(int k, const float* h, const float* w, int ldw, const float* bias,
                const std::uint32_t* idx, int nidx, float* out) {
  dense_cols_impl(k, h, w, ldw, bias, idx, nidx, out);
}
void dense_cols(int k, const double* h, const double* w, int ldw, const double* bias,
                const std::uint32_t* idx, int nidx, double* out) {
  dense_cols_impl(k, h, w, ldw, bias, idx, nidx, out);
}

void selu_fwd(const float* x, float* y, std::size_t n, float alpha, float lambda) {
  for (std::size_t i = 0; i < n; ++i)
    y[i] = x[i] > 0.f ? lambda * x[i] : lambda * alpha * std::expm1(x[i]);
}
void selu_fwd(const double* x, double* y, std::size_t n, double alpha, double lambda) {
  for (std::size_t i = 0; i < n; ++i)
    y[i] = x[i] > 0. ? lambda * x[i] : lambda * alpha * std::expm1(x[i]);
}

// derivative at x == 0 takes the saturating branch: lambda * alpha
void selu_bwd(const float* x, const float* g, float* dx, std::size_t n,
              float alpha, float lambda) {
  for (std::size_t i = 0; i < n; ++i)
    dx[i] = g[i] * (x[i] > 0.f ? lambda : lambda * alpha * std::exp(x[i]));
}
void selu_bwd(const double* x, const double* g, double* dx, std::size_t n,
              double alpha, double lambda) {
  for (std::size_t i = 0; i < n; ++i)
    dx[i] = g[i] * (x[i] > 0. ? lambda : lambda * alpha * std::exp(x[i]));
}

void relu_fwd(const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.f ? x[i] : 0.f;
}
void relu_fwd(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0. ? x[i] : 0.;
}

// subgradient 0 at x == 0
void relu_bwd(const float* x, const float* g, float* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.f ? g[i] : 0.f;
}
void relu_bwd(const double* x, const double* g, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > 0. ? g[i] : 0.;
}

void add(const float* a, const float* b, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}
void add(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void col_mean_var(const float* x, int rows, int cols, float* mean, float* var) {
  col_mean_var_impl(x, rows, cols, mean, var);
}
void col_mean_var(const double* x, int rows, int cols, double* mean, double* var) {
  col_mean_var_impl(x, rows, cols, mean, var);
}

} // namespace sndcnn::kern::scalar
