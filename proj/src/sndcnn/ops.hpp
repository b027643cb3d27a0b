#pragma once
// Tensor-level operations. conv2d runs as im2col + GEMM with the kernels
// matrix consumed through a transposed view, so the reduction order per
// output element is ascending (c_in, kh, kw), matching the naive loop.

#include "kern/kernels.hpp"
#include "tensor.hpp"

#include <utility>
#include <vector>

namespace sndcnn {

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw DimensionError("matmul expects rank-2 operands, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  Tensor<S> c({a.dim(0), b.dim(1)});
  kern::gemm(a.dim(0), b.dim(1), a.dim(1), a.data(), a.dim(1), false, b.data(),
             b.dim(1), false, c.data(), b.dim(1), false);
  return c;
}

struct ConvGeom {
  int h_out = 0, w_out = 0, patch = 0; // patch = c_in * kh * kw
};

inline ConvGeom conv_geometry(int h, int w, int c_in, int kh, int kw, int stride,
                              int pad) {
  if (stride < 1) throw DimensionError("conv2d stride must be >= 1");
  if (pad < 0) throw DimensionError("conv2d padding must be >= 0");
  const int hn = h + 2 * pad - kh;
  const int wn = w + 2 * pad - kw;
  if (hn < 0 || wn < 0 || hn % stride != 0 || wn % stride != 0)
    throw DimensionError("conv2d output extent is not a positive integer for input " +
                         shape_str({c_in, h, w}) + ", kernel " + shape_str({kh, kw}) +
                         ", stride " + std::to_string(stride) + ", pad " +
                         std::to_string(pad));
  return {hn / stride + 1, wn / stride + 1, c_in * kh * kw};
}

// cols: [h_out*w_out x (c_in*kh*kw)], row per output position, patch index
// ascending (c_in, kh, kw). Out-of-bounds taps are zero.
template <class S>
void im2col(const S* x, int c_in, int h, int w, int kh, int kw, int stride, int pad,
            int h_out, int w_out, S* cols) {
  const int patch = c_in * kh * kw;
  for (int oh = 0; oh < h_out; ++oh) {
    for (int ow = 0; ow < w_out; ++ow) {
      S* row = cols + (static_cast<std::size_t>(oh) * w_out + ow) * patch;
      const int ih0 = oh * stride - pad;
      const int iw0 = ow * stride - pad;
      for (int ci = 0; ci < c_in; ++ci) {
        const S* plane = x + static_cast<std::size_t>(ci) * h * w;
        for (int r = 0; r < kh; ++r) {
          const int ih = ih0 + r;
          S* dst = row + (static_cast<std::size_t>(ci) * kh + r) * kw;
          if (ih < 0 || ih >= h) {
            for (int c = 0; c < kw; ++c) dst[c] = S(0);
            continue;
          }
          const S* src = plane + static_cast<std::size_t>(ih) * w;
          for (int c = 0; c < kw; ++c) {
            const int iw = iw0 + c;
            dst[c] = (iw >= 0 && iw < w) ? src[iw] : S(0);
          }
        }
      }
    }
  }
}

// scatter-add the column gradient back onto the input image
template <class S>
void col2im_add(const S* cols, int c_in, int h, int w, int kh, int kw, int stride,
                int pad, int h_out, int w_out, S* dx) {
  const int patch = c_in * kh * kw;
  for (int oh = 0; oh < h_out; ++oh) {
    for (int ow = 0; ow < w_out; ++ow) {
      const S* row = cols + (static_cast<std::size_t>(oh) * w_out + ow) * patch;
      const int ih0 = oh * stride - pad;
      const int iw0 = ow * stride - pad;
      for (int ci = 0; ci < c_in; ++ci) {
        S* plane = dx + static_cast<std::size_t>(ci) * h * w;
        for (int r = 0; r < kh; ++r) {
          const int ih = ih0 + r;
          if (ih < 0 || ih >= h) continue;
          const S* src = row + (static_cast<std::size_t>(ci) * kh + r) * kw;
          S* dst = plane + static_cast<std::size_t>(ih) * w;
          for (int c = 0; c < kw; ++c) {
            const int iw = iw0 + c;
            if (iw >= 0 && iw < w) dst[iw] += src[c];
          }
        }
      }
    }
  }
}

// input [c_in x h x w], kernels [c_out x c_in x kh x kw] -> [c_out x h' x w']
template <class S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernels, int stride,
                 int pad) {
  if (input.ndim() != 3 || kernels.ndim() != 4)
    throw DimensionError("conv2d expects input [c,h,w] and kernels [o,c,kh,kw], got " +
                         shape_str(input.shape()) + " and " + shape_str(kernels.shape()));
  if (input.dim(0) != kernels.dim(1))
    throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape()) +
                         " vs kernels " + shape_str(kernels.shape()));
  const int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int c_out = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  const ConvGeom g = conv_geometry(h, w, c_in, kh, kw, stride, pad);

  std::vector<S> cols(static_cast<std::size_t>(g.h_out) * g.w_out * g.patch);
  im2col(input.data(), c_in, h, w, kh, kw, stride, pad, g.h_out, g.w_out, cols.data());

  Tensor<S> out({c_out, g.h_out, g.w_out});
  // out[o][pos] = sum_k kernels[o][k] * cols[pos][k]: B is the transposed view
  kern::gemm(c_out, g.h_out * g.w_out, g.patch, kernels.data(), g.patch, false,
             cols.data(), g.patch, true, out.data(), g.h_out * g.w_out, false);
  return out;
}

// per-column population mean and variance of x[batch x d]
template <class S>
std::pair<Tensor<S>, Tensor<S>> reduce_mean_var(const Tensor<S>& x) {
  if (x.ndim() != 2)
    throw DimensionError("reduce_mean_var expects [batch x d], got " +
                         shape_str(x.shape()));
  Tensor<S> mean({x.dim(1)});
  Tensor<S> var({x.dim(1)});
  kern::col_mean_var(x.data(), x.dim(0), x.dim(1), mean.data(), var.data());
  return {std::move(mean), std::move(var)};
}

} // namespace sndcnn
