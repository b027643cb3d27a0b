// AVX-512 kernel variants. Compiled with -mavx512f -mavx512dq -mavx512vl
// -mfma; reached only after the runtime CPU check in dispatch.cpp.

#include "gemm_driver.hpp"
#include "isa_impl.hpp"

#include <cmath>
#include <immintrin.h>

namespace sndcnn::kern::avx512 {

namespace {

struct OpsF32 {
  using Scalar = float;
  using Vec = __m512;
  static constexpr int W = 16, MR = 6, NR = 4;
  static Vec load(const float* p) { return _mm512_loadu_ps(p); }
  static void store(float* p, Vec v) { _mm512_storeu_ps(p, v); }
  static Vec bcast(float s) { return _mm512_set1_ps(s); }
  static Vec zero() { return _mm512_setzero_ps(); }
  static Vec fma(Vec a, Vec b, Vec c) { return _mm512_fmadd_ps(a, b, c); }
};

struct OpsF64 {
  using Scalar = double;
  using Vec = __m512d;
  static constexpr int W = 8, MR = 6, NR = 4;
  static Vec load(const double* p) { return _mm512_loadu_pd(p); }
  static void store(double* p, Vec v) { _mm512_storeu_pd(p, v); }
  static Vec bcast(double s) { return _mm512_set1_pd(s); }
  static Vec zero() { return _mm512_setzero_pd(); }
  static Vec fma(Vec a, Vec b, Vec c) { return _mm512_fmadd_pd(a, b, c); }
};

// Same polynomial as the AVX2 variant; 2^n scaling via scalef.
inline __m512 exp512_ps(__m512 x) {
  const __m512 hi = _mm512_set1_ps(88.72283905206835f);
  const __m512 lo = _mm512_set1_ps(-87.33654475055310f);
  const __m512 log2e = _mm512_set1_ps(1.44269504088896341f);
  const __m512 ln2_hi = _mm512_set1_ps(0.693359375f);
  const __m512 ln2_lo = _mm512_set1_ps(-2.12194440e-4f);
  const __m512 one = _mm512_set1_ps(1.0f);

  x = _mm512_min_ps(x, hi);
  x = _mm512_max_ps(x, lo);

  __m512 fx = _mm512_roundscale_ps(_mm512_mul_ps(x, log2e), _MM_FROUND_TO_NEAREST_INT);
  __m512 r = _mm512_fnmadd_ps(fx, ln2_hi, x);
  r = _mm512_fnmadd_ps(fx, ln2_lo, r);

  __m512 y = _mm512_set1_ps(1.9875691500e-4f);
  y = _mm512_fmadd_ps(y, r, _mm512_set1_ps(1.3981999507e-3f));
  y = _mm512_fmadd_ps(y, r, _mm512_set1_ps(8.3334519073e-3f));
  y = _mm512_fmadd_ps(y, r, _mm512_set1_ps(4.1665795894e-2f));
  y = _mm512_fmadd_ps(y, r, _mm512_set1_ps(1.6666665459e-1f));
  y = _mm512_fmadd_ps(y, r, _mm512_set1_ps(5.0000001201e-1f));
  const __m512 r2 = _mm512_mul_ps(r, r);
  y = _mm512_fmadd_ps(y, r2, _mm512_add_ps(r, one));
  return _mm512_scalef_ps(y, fx);
}

} // namespace

void gemm(int m, int n, int k, const float* a, int lda, bool ta, const float* b,
          int ldb, bool tb, float* c, int ldc, bool acc) {
  detail::GemmDriver<OpsF32>::run(m, n, k, a, lda, ta, b, ldb, tb, c, ldc, acc);
}
void gemm(int m, int n, int k, const double* a, int lda, bool ta, const double* b,
          int ldb, bool tb, double* c, int ldc, bool acc) {
  detail::GemmDriver<OpsF64>::run(m, n, k, a, lda, ta, b, ldb, tb, c, ldc, acc);
}

void dense_cols(int k, const float* h, const float* w, int ldw, const float* bias,
                const std::uint32_t* idx, int nidx, float* out) {
  int i = 0;
  for (; i + 16 <= nidx; i += 16) {
    const __m512i vidx =
        _mm512_loadu_si512(reinterpret_cast<const void*>(idx + i));
    __m512 acc = _mm512_setzero_ps();
    for (int p = 0; p < k; ++p) {
      const __m512 vw =
          _mm512_i32gather_ps(vidx, w + static_cast<std::size_t>(p) * ldw, 4);
      acc = _mm512_fmadd_ps(_mm512_set1_ps(h[p]), vw, acc);
    }
    if (bias) acc = _mm512_add_ps(acc, _mm512_i32gather_ps(vidx, bias, 4));
    _mm512_storeu_ps(out + i, acc);
  }
  if (i < nidx) scalar::dense_cols(k, h, w, ldw, bias, idx + i, nidx - i, out + i);
}
void dense_cols(int k, const double* h, const double* w, int ldw, const double* bias,
                const std::uint32_t* idx, int nidx, double* out) {
  int i = 0;
  for (; i + 8 <= nidx; i += 8) {
    const __m256i vidx =
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(idx + i));
    __m512d acc = _mm512_setzero_pd();
    for (int p = 0; p < k; ++p) {
      const __m512d vw =
          _mm512_i32gather_pd(vidx, w + static_cast<std::size_t>(p) * ldw, 8);
      acc = _mm512_fmadd_pd(_mm512_set1_pd(h[p]), vw, acc);
    }
    if (bias) acc = _mm512_add_pd(acc, _mm512_i32gather_pd(vidx, bias, 8));
    _mm512_storeu_pd(out + i, acc);
  }
  if (i < nidx) scalar::dense_cols(k, h, w, ldw, bias, idx + i, nidx - i, out + i);
}

void selu_fwd(const float* x, float* y, std::size_t n, float alpha, float lambda) {
  const __m512 vl = _mm512_set1_ps(lambda);
  const __m512 vla = _mm512_set1_ps(lambda * alpha);
  const __m512 zero = _mm512_setzero_ps();
  const __m512 one = _mm512_set1_ps(1.0f);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 v = _mm512_loadu_ps(x + i);
    const __mmask16 pos = _mm512_cmp_ps_mask(v, zero, _CMP_GT_OQ);
    const __m512 neg = _mm512_mul_ps(vla, _mm512_sub_ps(exp512_ps(v), one));
    _mm512_storeu_ps(y + i, _mm512_mask_mul_ps(neg, pos, vl, v));
  }
  if (i < n) scalar::selu_fwd(x + i, y + i, n - i, alpha, lambda);
}

void selu_bwd(const float* x, const float* g, float* dx, std::size_t n,
              float alpha, float lambda) {
  const __m512 vl = _mm512_set1_ps(lambda);
  const __m512 vla = _mm512_set1_ps(lambda * alpha);
  const __m512 zero = _mm512_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 v = _mm512_loadu_ps(x + i);
    const __m512 vg = _mm512_loadu_ps(g + i);
    const __mmask16 pos = _mm512_cmp_ps_mask(v, zero, _CMP_GT_OQ);
    const __m512 slope = _mm512_mask_mov_ps(_mm512_mul_ps(vla, exp512_ps(v)), pos, vl);
    _mm512_storeu_ps(dx + i, _mm512_mul_ps(vg, slope));
  }
  if (i < n) scalar::selu_bwd(x + i, g + i, dx + i, n - i, alpha, lambda);
}

void relu_fwd(const float* x, float* y, std::size_t n) {
  const __m512 zero = _mm512_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(y + i, _mm512_max_ps(_mm512_loadu_ps(x + i), zero));
  if (i < n) scalar::relu_fwd(x + i, y + i, n - i);
}
void relu_fwd(const double* x, double* y, std::size_t n) {
  const __m512d zero = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(y + i, _mm512_max_pd(_mm512_loadu_pd(x + i), zero));
  if (i < n) scalar::relu_fwd(x + i, y + i, n - i);
}

void relu_bwd(const float* x, const float* g, float* dx, std::size_t n) {
  const __m512 zero = _mm512_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __mmask16 pos =
        _mm512_cmp_ps_mask(_mm512_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm512_storeu_ps(dx + i, _mm512_maskz_mov_ps(pos, _mm512_loadu_ps(g + i)));
  }
  if (i < n) scalar::relu_bwd(x + i, g + i, dx + i, n - i);
}
void relu_bwd(const double* x, const double* g, double* dx, std::size_t n) {
  const __m512d zero = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __mmask8 pos =
        _mm512_cmp_pd_mask(_mm512_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm512_storeu_pd(dx + i, _mm512_maskz_mov_pd(pos, _mm512_loadu_pd(g + i)));
  }
  if (i < n) scalar::relu_bwd(x + i, g + i, dx + i, n - i);
}

void add(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(y + i,
                     _mm512_add_ps(_mm512_loadu_ps(a + i), _mm512_loadu_ps(b + i)));
  if (i < n) scalar::add(a + i, b + i, y + i, n - i);
}
void add(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(y + i,
                     _mm512_add_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i)));
  if (i < n) scalar::add(a + i, b + i, y + i, n - i);
}

namespace {

template <class S, int W, class V, class Load, class Store, class Set1, class Add,
          class Div, class Sub, class Fma>
void col_mean_var_impl(const S* x, int rows, int cols, S* mean, S* var, Load vload,
                       Store vstore, Set1 vset1, Add vadd, Div vdiv, Sub vsub,
                       Fma vfma) {
  const int full = cols / W * W;
  for (int j = 0; j < full; j += W) vstore(mean + j, vset1(S(0)));
  for (int r = 0; r < rows; ++r) {
    const S* row = x + static_cast<std::size_t>(r) * cols;
    for (int j = 0; j < full; j += W)
      vstore(mean + j, vadd(vload(mean + j), vload(row + j)));
  }
  const V vrows = vset1(S(rows));
  for (int j = 0; j < full; j += W) vstore(mean + j, vdiv(vload(mean + j), vrows));
  for (int j = 0; j < full; j += W) vstore(var + j, vset1(S(0)));
  for (int r = 0; r < rows; ++r) {
    const S* row = x + static_cast<std::size_t>(r) * cols;
    for (int j = 0; j < full; j += W) {
      const V d = vsub(vload(row + j), vload(mean + j));
      vstore(var + j, vfma(d, d, vload(var + j)));
    }
  }
  for (int j = 0; j < full; j += W) vstore(var + j, vdiv(vload(var + j), vrows));
  for (int j = full; j < cols; ++j) {
    S mj = S(0);
    for (int r = 0; r < rows; ++r) mj += x[static_cast<std::size_t>(r) * cols + j];
    mj /= S(rows);
    S vj = S(0);
    for (int r = 0; r < rows; ++r) {
      const S d = x[static_cast<std::size_t>(r) * cols + j] - mj;
      vj = std::fma(d, d, vj);
    }
    mean[j] = mj;
    var[j] = vj / S(rows);
  }
}

} // namespace

void col_mean_var(const float* x, int rows, int cols, float* mean, float* var) {
  col_mean_var_impl<float, 16, __m512>(
      x, rows, cols, mean, var, [](const float* p) { return _mm512_loadu_ps(p); },
      [](float* p, __m512 v) { _mm512_storeu_ps(p, v); },
      [](float s) { return _mm512_set1_ps(s); },
      [](__m512 a, __m512 b) { return _mm512_add_ps(a, b); },
      [](__m512 a, __m512 b) { return _mm512_div_ps(a, b); },
      [](__m512 a, __m512 b) { return _mm512_sub_ps(a, b); },
      [](__m512 a, __m512 b, __m512 c) { return _mm512_fmadd_ps(a, b, c); });
}
void col_mean_var(const double* x, int rows, int cols, double* mean, double* var) {
  col_mean_var_impl<double, 8, __m512d>(
      x, rows, cols, mean, var, [](const double* p) { return _mm512_loadu_pd(p); },
      [](double* p, __m512d v) { _mm512_storeu_pd(p, v); },
      [](double s) { return _mm512_set1_pd(s); },
      [](__m512d a, __m512d b) { return _mm512_add_pd(a, b); },
      [](__m512d a, __m512d b) { return _mm512_div_pd(a, b); },
      [](__m512d a, __m512d b) { return _mm512_sub_pd(a, b); },
      [](__m512d a, __m512d b, __m512d c) { return _mm512_fmadd_pd(a, b, c); });
}

} // namespace sndcnn::kern::avx512
