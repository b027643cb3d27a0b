// AVX2+FMA kernel variants. Compiled with -mavx2 -mfma; reached only after
// the runtime CPU check in dispatch.cpp.

#include "gemm_driver.hpp"
#include "isa_impl.hpp"

#include <cmath>
#include <immintrin.h>

namespace sndcnn::kern::avx2 {

namespace {

struct OpsF32 {
  using Scalar = float;
  using Vec = __m256;
  static constexpr int W = 8, MR = 6, NR = 2;
  static Vec load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, Vec v) { _mm256_storeu_ps(p, v); }
  static Vec bcast(float s) { return _mm256_set1_ps(s); }
  static Vec zero() { return _mm256_setzero_ps(); }
  static Vec fma(Vec a, Vec b, Vec c) { return _mm256_fmadd_ps(a, b, c); }
};

struct OpsF64 {
  using Scalar = double;
  using Vec = __m256d;
  static constexpr int W = 4, MR = 6, NR = 2;
  static Vec load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, Vec v) { _mm256_storeu_pd(p, v); }
  static Vec bcast(double s) { return _mm256_set1_pd(s); }
  static Vec zero() { return _mm256_setzero_pd(); }
  static Vec fma(Vec a, Vec b, Vec c) { return _mm256_fmadd_pd(a, b, c); }
};

// Cephes-style exp, ~1 ulp over the clamped range. Inputs are clamped to
// [-87.33, 88.72] so the 2^n scaling stays in normal range.
inline __m256 exp256_ps(__m256 x) {
  const __m256 hi = _mm256_set1_ps(88.72283905206835f);
  const __m256 lo = _mm256_set1_ps(-87.33654475055310f);
  const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
  const __m256 ln2_hi = _mm256_set1_ps(0.693359375f);
  const __m256 ln2_lo = _mm256_set1_ps(-2.12194440e-4f);
  const __m256 one = _mm256_set1_ps(1.0f);

  x = _mm256_min_ps(x, hi);
  x = _mm256_max_ps(x, lo);

  __m256 fx = _mm256_round_ps(_mm256_mul_ps(x, log2e),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256 r = _mm256_fnmadd_ps(fx, ln2_hi, x);
  r = _mm256_fnmadd_ps(fx, ln2_lo, r);

  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, r, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, r, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, r, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, r, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, r, _mm256_set1_ps(5.0000001201e-1f));
  __m256 r2 = _mm256_mul_ps(r, r);
  y = _mm256_fmadd_ps(y, r2, _mm256_add_ps(r, one));

  __m256i n = _mm256_cvtps_epi32(fx);
  n = _mm256_add_epi32(n, _mm256_set1_epi32(127));
  n = _mm256_slli_epi32(n, 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(n));
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
  for (; i + 8 <= nidx; i += 8) {
    const __m256i vidx =
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(idx + i));
    __m256 acc = _mm256_setzero_ps();
    for (int p = 0; p < k; ++p) {
      const __m256 vw =
          _mm256_i32gather_ps(w + static_cast<std::size_t>(p) * ldw, vidx, 4);
      acc = _mm256_fmadd_ps(_mm256_set1_ps(h[p]), vw, acc);
    }
    if (bias) acc = _mm256_add_ps(acc, _mm256_i32gather_ps(bias, vidx, 4));
    _mm256_storeu_ps(out + i, acc);
  }
  if (i < nidx) scalar::dense_cols(k, h, w, ldw, bias, idx + i, nidx - i, out + i);
}
void dense_cols(int k, const double* h, const double* w, int ldw, const double* bias,
                const std::uint32_t* idx, int nidx, double* out) {
  int i = 0;
  for (; i + 4 <= nidx; i += 4) {
    const __m128i vidx = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + i));
    __m256d acc = _mm256_setzero_pd();
    for (int p = 0; p < k; ++p) {
      const __m256d vw =
          _mm256_i32gather_pd(w + static_cast<std::size_t>(p) * ldw, vidx, 8);
      acc = _mm256_fmadd_pd(_mm256_set1_pd(h[p]), vw, acc);
    }
    if (bias) acc = _mm256_add_pd(acc, _mm256_i32gather_pd(bias, vidx, 8));
    _mm256_storeu_pd(out + i, acc);
  }
  if (i < nidx) scalar::dense_cols(k, h, w, ldw, bias, idx + i, nidx - i, out + i);
}

void selu_fwd(const float* x, float* y, std::size_t n, float alpha, float lambda) {
  const __m256 vl = _mm256_set1_ps(lambda);
  const __m256 vla = _mm256_set1_ps(lambda * alpha);
  const __m256 zero = _mm256_setzero_ps();
  const __m256 one = _mm256_set1_ps(1.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 pos = _mm256_mul_ps(vl, v);
    const __m256 neg = _mm256_mul_ps(vla, _mm256_sub_ps(exp256_ps(v), one));
    const __m256 mask = _mm256_cmp_ps(v, zero, _CMP_GT_OQ);
    _mm256_storeu_ps(y + i, _mm256_blendv_ps(neg, pos, mask));
  }
  if (i < n) scalar::selu_fwd(x + i, y + i, n - i, alpha, lambda);
}

void selu_bwd(const float* x, const float* g, float* dx, std::size_t n,
              float alpha, float lambda) {
  const __m256 vl = _mm256_set1_ps(lambda);
  const __m256 vla = _mm256_set1_ps(lambda * alpha);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 vg = _mm256_loadu_ps(g + i);
    const __m256 neg = _mm256_mul_ps(vla, exp256_ps(v));
    const __m256 mask = _mm256_cmp_ps(v, zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_mul_ps(vg, _mm256_blendv_ps(neg, vl, mask)));
  }
  if (i < n) scalar::selu_bwd(x + i, g + i, dx + i, n - i, alpha, lambda);
}

void relu_fwd(const float* x, float* y, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  if (i < n) scalar::relu_fwd(x + i, y + i, n - i);
}
void relu_fwd(const double* x, double* y, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  if (i < n) scalar::relu_fwd(x + i, y + i, n - i);
}

void relu_bwd(const float* x, const float* g, float* dx, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(g + i)));
  }
  if (i < n) scalar::relu_bwd(x + i, g + i, dx + i, n - i);
}
void relu_bwd(const double* x, const double* g, double* dx, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(dx + i, _mm256_and_pd(mask, _mm256_loadu_pd(g + i)));
  }
  if (i < n) scalar::relu_bwd(x + i, g + i, dx + i, n - i);
}

void add(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  if (i < n) scalar::add(a + i, b + i, y + i, n - i);
}
void add(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  if (i < n) scalar::add(a + i, b + i, y + i, n - i);
}

void col_mean_var(const float* x, int rows, int cols, float* mean, float* var) {
  const int full = cols / 8 * 8;
  for (int j = 0; j < full; j += 8) _mm256_storeu_ps(mean + j, _mm256_setzero_ps());
  for (int r = 0; r < rows; ++r) {
    const float* row = x + static_cast<std::size_t>(r) * cols;
    for (int j = 0; j < full; j += 8)
      _mm256_storeu_ps(mean + j,
                       _mm256_add_ps(_mm256_loadu_ps(mean + j), _mm256_loadu_ps(row + j)));
  }
  const __m256 vrows = _mm256_set1_ps(float(rows));
  for (int j = 0; j < full; j += 8)
    _mm256_storeu_ps(mean + j, _mm256_div_ps(_mm256_loadu_ps(mean + j), vrows));
  for (int j = 0; j < full; j += 8) _mm256_storeu_ps(var + j, _mm256_setzero_ps());
  for (int r = 0; r < rows; ++r) {
    const float* row = x + static_cast<std::size_t>(r) * cols;
    for (int j = 0; j < full; j += 8) {
      const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(row + j), _mm256_loadu_ps(mean + j));
      _mm256_storeu_ps(var + j, _mm256_fmadd_ps(d, d, _mm256_loadu_ps(var + j)));
    }
  }
  for (int j = 0; j < full; j += 8)
    _mm256_storeu_ps(var + j, _mm256_div_ps(_mm256_loadu_ps(var + j), vrows));
  if (full < cols) {
    // column tail: strided view, reuse the scalar reference per column
    for (int j = full; j < cols; ++j) {
      float mj = 0.f;
      for (int r = 0; r < rows; ++r) mj += x[static_cast<std::size_t>(r) * cols + j];
      mj /= float(rows);
      float vj = 0.f;
      for (int r = 0; r < rows; ++r) {
        const float d = x[static_cast<std::size_t>(r) * cols + j] - mj;
        vj = std::fma(d, d, vj);
      }
      mean[j] = mj;
      var[j] = vj / float(rows);
    }
  }
}

void col_mean_var(const double* x, int rows, int cols, double* mean, double* var) {
  const int full = cols / 4 * 4;
  for (int j = 0; j < full; j += 4) _mm256_storeu_pd(mean + j, _mm256_setzero_pd());
  for (int r = 0; r < rows; ++r) {
    const double* row = x + static_cast<std::size_t>(r) * cols;
    for (int j = 0; j < full; j += 4)
      _mm256_storeu_pd(mean + j,
                       _mm256_add_pd(_mm256_loadu_pd(mean + j), _mm256_loadu_pd(row + j)));
  }
  const __m256d vrows = _mm256_set1_pd(double(rows));
  for (int j = 0; j < full; j += 4)
    _mm256_storeu_pd(mean + j, _mm256_div_pd(_mm256_loadu_pd(mean + j), vrows));
  for (int j = 0; j < full; j += 4) _mm256_storeu_pd(var + j, _mm256_setzero_pd());
  for (int r = 0; r < rows; ++r) {
    const double* row = x + static_cast<std::size_t>(r) * cols;
    for (int j = 0; j < full; j += 4) {
      const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(row + j), _mm256_loadu_pd(mean + j));
      _mm256_storeu_pd(var + j, _mm256_fmadd_pd(d, d, _mm256_loadu_pd(var + j)));
    }
  }
  for (int j = 0; j < full; j += 4)
    _mm256_storeu_pd(var + j, _mm256_div_pd(_mm256_loadu_pd(var + j), vrows));
  if (full < cols) {
    for (int j = full; j < cols; ++j) {
      double mj = 0.;
      for (int r = 0; r < rows; ++r) mj += x[static_cast<std::size_t>(r) * cols + j];
      mj /= double(rows);
      double vj = 0.;
      for (int r = 0; r < rows; ++r) {
        const double d = x[static_cast<std::size_t>(r) * cols + j] - mj;
        vj = std::fma(d, d, vj);
      }
      mean[j] = mj;
      var[j] = vj / double(rows);
    }
  }
}

} // namespace sndcnn::kern::avx2
