#pragma once
// Blocked GEMM driver shared by the SIMD translation units. The driver is
// parameterized over a vector-ops policy VO and vectorizes across output
// columns only: each output element accumulates its fma chain in ascending-k
// order, split across KC blocks with exact store/reload at block boundaries.
// That keeps results bit-identical to the scalar reference regardless of
// vector width or tile shape.

#include <cstddef>
#include <vector>

namespace sndcnn::kern::detail {

template <class S>
inline S view_at(const S* a, int ld, bool trans, int row, int col) {
  return trans ? a[static_cast<std::size_t>(col) * ld + row]
               : a[static_cast<std::size_t>(row) * ld + col];
}

template <class VO>
struct GemmDriver {
  using S = typename VO::Scalar;
  using V = typename VO::Vec;
  static constexpr int MR = VO::MR;
  static constexpr int NR = VO::NR;
  static constexpr int W = VO::W;
  static constexpr int TW = NR * W; // tile width in elements
  static constexpr int KC = 256;
  static constexpr int MC = 16 * MR;
  static constexpr int NC = 128 * TW > 4096 ? 128 * TW : 4096;

  // c tile [MR x TW], row stride ldc. ap: [kc][MR], bp: [kc][TW].
  // start=true continues chains from the values already in c.
  static void ukernel(int kc, const S* ap, const S* bp, S* c, int ldc, bool start) {
    V acc[MR][NR];
    for (int i = 0; i < MR; ++i)
      for (int j = 0; j < NR; ++j)
        acc[i][j] = start ? VO::load(c + static_cast<std::size_t>(i) * ldc + j * W)
                          : VO::zero();
    auto step = [&](const S* a1, const S* b1) {
      V b[NR];
      for (int j = 0; j < NR; ++j) b[j] = VO::load(b1 + j * W);
      for (int i = 0; i < MR; ++i) {
        V a = VO::bcast(a1[i]);
        for (int j = 0; j < NR; ++j) acc[i][j] = VO::fma(a, b[j], acc[i][j]);
      }
    };
    int p = 0;
    for (; p + 4 <= kc; p += 4) {
      step(ap, bp);
      step(ap + MR, bp + TW);
      step(ap + 2 * MR, bp + 2 * TW);
      step(ap + 3 * MR, bp + 3 * TW);
      ap += 4 * MR;
      bp += 4 * TW;
    }
    for (; p < kc; ++p) {
      step(ap, bp);
      ap += MR;
      bp += TW;
    }
    for (int i = 0; i < MR; ++i)
      for (int j = 0; j < NR; ++j)
        VO::store(c + static_cast<std::size_t>(i) * ldc + j * W, acc[i][j]);
  }

  static std::vector<S>& scratch(int which, std::size_t need) {
    thread_local std::vector<S> bufs[3];
    if (bufs[which].size() < need) bufs[which].resize(need);
    return bufs[which];
  }

  static void run(int m, int n, int k, const S* a, int lda, bool ta, const S* b,
                  int ldb, bool tb, S* c, int ldc, bool accumulate) {
    auto& apack = scratch(0, static_cast<std::size_t>(MC) * KC);
    auto& bpack = scratch(1, static_cast<std::size_t>(KC) * NC);
    auto& tile = scratch(2, static_cast<std::size_t>(MR) * TW);

    for (int jc = 0; jc < n; jc += NC) {
      const int nc = n - jc < NC ? n - jc : NC;
      const int ncp = (nc + TW - 1) / TW * TW;
      for (int pc = 0; pc < k; pc += KC) {
        const int kc = k - pc < KC ? k - pc : KC;
        const bool start = accumulate || pc > 0;
        // pack B into TW-wide panels, zero-padding the column edge
        for (int jr = 0; jr < ncp; jr += TW) {
          S* dst = bpack.data() + static_cast<std::size_t>(jr) * kc;
          const int jw = nc - jr < TW ? nc - jr : TW;
          for (int p = 0; p < kc; ++p) {
            for (int j = 0; j < jw; ++j)
              dst[static_cast<std::size_t>(p) * TW + j] =
                  view_at(b, ldb, tb, pc + p, jc + jr + j);
            for (int j = jw; j < TW; ++j)
              dst[static_cast<std::size_t>(p) * TW + j] = S(0);
          }
        }
        for (int ic = 0; ic < m; ic += MC) {
          const int mc = m - ic < MC ? m - ic : MC;
          const int mcp = (mc + MR - 1) / MR * MR;
          for (int ir = 0; ir < mcp; ir += MR) {
            S* dst = apack.data() + static_cast<std::size_t>(ir) * kc;
            const int iw = mc - ir < MR ? mc - ir : MR;
            for (int p = 0; p < kc; ++p) {
              for (int i = 0; i < iw; ++i)
                dst[static_cast<std::size_t>(p) * MR + i] =
                    view_at(a, lda, ta, ic + ir + i, pc + p);
              for (int i = iw; i < MR; ++i)
                dst[static_cast<std::size_t>(p) * MR + i] = S(0);
            }
          }
          for (int jr = 0; jr < ncp; jr += TW) {
            const int jw = nc - jr < TW ? nc - jr : TW;
            for (int ir = 0; ir < mcp; ir += MR) {
              const int iw = mc - ir < MR ? mc - ir : MR;
              S* ctile = c + static_cast<std::size_t>(ic + ir) * ldc + jc + jr;
              const S* ap = apack.data() + static_cast<std::size_t>(ir) * kc;
              const S* bp = bpack.data() + static_cast<std::size_t>(jr) * kc;
              if (iw == MR && jw == TW) {
                ukernel(kc, ap, bp, ctile, ldc, start);
              } else {
                // edge tile: run on a scratch tile, copy the valid region
                for (int i = 0; i < iw; ++i)
                  for (int j = 0; j < TW; ++j)
                    tile[static_cast<std::size_t>(i) * TW + j] =
                        (start && j < jw)
                            ? ctile[static_cast<std::size_t>(i) * ldc + j]
                            : S(0);
                for (int i = iw; i < MR; ++i)
                  for (int j = 0; j < TW; ++j)
                    tile[static_cast<std::size_t>(i) * TW + j] = S(0);
                ukernel(kc, ap, bp, tile.data(), TW, true);
                for (int i = 0; i < iw; ++i)
                  for (int j = 0; j < jw; ++j)
                    ctile[static_cast<std::size_t>(i) * ldc + j] =
                        tile[static_cast<std::size_t>(i) * TW + j];
              }
            }
          }
        }
      }
    }
  }
};

} // namespace sndcnn::kern::detail
