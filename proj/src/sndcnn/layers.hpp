#pragma once
// Forward and backward passes for every layer the ablation grid needs:
// SELU / RELU activations, batch normalization with the exact backward
// through the batch statistics, dense and conv layers, softmax cross-entropy,
// and the two initialization schemes.

#include "ops.hpp"
#include "rng.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace sndcnn {

template <class S>
struct SeluParams {
  S alpha = S(1.6732632423543772);
  S lambda = S(1.0507009873554805);
};

template <class S>
Tensor<S> selu_forward(const Tensor<S>& x, const SeluParams<S>& p = {}) {
  Tensor<S> y(x.shape());
  kern::selu_fwd(x.data(), y.data(), x.size(), p.alpha, p.lambda);
  return y;
}

template <class S>
Tensor<S> selu_backward(const Tensor<S>& x, const Tensor<S>& grad_out,
                        const SeluParams<S>& p = {}) {
  if (!x.same_shape(grad_out))
    throw DimensionError("selu_backward shape mismatch: " + shape_str(x.shape()) +
                         " vs " + shape_str(grad_out.shape()));
  Tensor<S> dx(x.shape());
  kern::selu_bwd(x.data(), grad_out.data(), dx.data(), x.size(), p.alpha, p.lambda);
  return dx;
}

template <class S>
Tensor<S> relu_forward(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  kern::relu_fwd(x.data(), y.data(), x.size());
  return y;
}

template <class S>
Tensor<S> relu_backward(const Tensor<S>& x, const Tensor<S>& grad_out) {
  if (!x.same_shape(grad_out))
    throw DimensionError("relu_backward shape mismatch: " + shape_str(x.shape()) +
                         " vs " + shape_str(grad_out.shape()));
  Tensor<S> dx(x.shape());
  kern::relu_bwd(x.data(), grad_out.data(), dx.data(), x.size());
  return dx;
}

// ---------------------------------------------------------------------------
// batch normalization over [batch x d]

template <class S>
struct BnParams {
  Tensor<S> gamma; // [d]
  Tensor<S> beta;  // [d]
  S epsilon = S(1e-5);

  struct Cache {
    Tensor<S> mean, var, inv_std, xhat;
  };
  std::optional<Cache> cache; // populated by the training-mode forward

  explicit BnParams(int d) : gamma({d}), beta({d}) {
    for (int j = 0; j < d; ++j) gamma.at(j) = S(1);
  }
  int dim() const { return gamma.dim(0); }
};

template <class S>
Tensor<S> bn_forward(const Tensor<S>& x, BnParams<S>& p) {
  if (x.ndim() != 2 || x.dim(1) != p.dim())
    throw DimensionError("bn_forward expects [batch x " + std::to_string(p.dim()) +
                         "], got " + shape_str(x.shape()));
  const int b = x.dim(0), d = x.dim(1);
  if (b < 2)
    throw BatchError("bn_forward needs batch >= 2 in training mode, got " +
                     std::to_string(b));
  if (!(p.epsilon > S(0))) throw ConfigError("bn epsilon must be positive");

  typename BnParams<S>::Cache c{Tensor<S>({d}), Tensor<S>({d}), Tensor<S>({d}),
                                Tensor<S>({b, d})};
  kern::col_mean_var(x.data(), b, d, c.mean.data(), c.var.data());
  for (int j = 0; j < d; ++j)
    c.inv_std.at(j) = S(1) / std::sqrt(c.var.at(j) + p.epsilon);

  Tensor<S> y({b, d});
  const S* g = p.gamma.data();
  const S* be = p.beta.data();
  for (int i = 0; i < b; ++i) {
    const S* xi = x.data() + std::size_t(i) * d;
    S* xh = c.xhat.data() + std::size_t(i) * d;
    S* yi = y.data() + std::size_t(i) * d;
    for (int j = 0; j < d; ++j) {
      xh[j] = (xi[j] - c.mean.at(j)) * c.inv_std.at(j);
      yi[j] = g[j] * xh[j] + be[j];
    }
  }
  p.cache = std::move(c);
  return y;
}

template <class S>
struct BnGrads {
  Tensor<S> dx, dgamma, dbeta;
};

// exact gradient through the batch mean and variance
template <class S>
BnGrads<S> bn_backward(const Tensor<S>& grad_out, BnParams<S>& p) {
  if (!p.cache)
    throw StateError("bn_backward called before a training-mode bn_forward");
  const auto& c = *p.cache;
  const int b = c.xhat.dim(0), d = c.xhat.dim(1);
  if (grad_out.ndim() != 2 || grad_out.dim(0) != b || grad_out.dim(1) != d)
    throw DimensionError("bn_backward grad shape " + shape_str(grad_out.shape()) +
                         " vs cached " + shape_str(c.xhat.shape()));

  BnGrads<S> out{Tensor<S>({b, d}), Tensor<S>({d}), Tensor<S>({d})};
  std::vector<S> sum_dxhat(d, S(0)), sum_dxhat_xhat(d, S(0)), sum_xhat(d, S(0));
  for (int i = 0; i < b; ++i) {
    const S* go = grad_out.data() + std::size_t(i) * d;
    const S* xh = c.xhat.data() + std::size_t(i) * d;
    for (int j = 0; j < d; ++j) {
      out.dbeta.at(j) += go[j];
      out.dgamma.at(j) += go[j] * xh[j];
      const S dxhat = go[j] * p.gamma.at(j);
      sum_dxhat[j] += dxhat;
      sum_dxhat_xhat[j] += dxhat * xh[j];
      sum_xhat[j] += xh[j];
    }
  }
  // dvar_j = -1/2 inv^2 sum(dxhat * xhat); dmean_j = -inv sum(dxhat)
  //          + dvar * (-2/m) sum(x - mu)
  const S m = S(b);
  std::vector<S> dvar(d), dmean(d);
  for (int j = 0; j < d; ++j) {
    const S inv = c.inv_std.at(j);
    dvar[j] = S(-0.5) * inv * inv * sum_dxhat_xhat[j];
    const S sum_xmu = sum_xhat[j] / inv; // sum of (x - mu) over the batch
    dmean[j] = -inv * sum_dxhat[j] + dvar[j] * (S(-2) / m) * sum_xmu;
  }
  for (int i = 0; i < b; ++i) {
    const S* go = grad_out.data() + std::size_t(i) * d;
    const S* xh = c.xhat.data() + std::size_t(i) * d;
    S* dx = out.dx.data() + std::size_t(i) * d;
    for (int j = 0; j < d; ++j) {
      const S inv = c.inv_std.at(j);
      const S xmu = xh[j] / inv;
      dx[j] = go[j] * p.gamma.at(j) * inv + dvar[j] * S(2) * xmu / m + dmean[j] / m;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// dense

template <class S>
struct DenseParams {
  Tensor<S> weights; // [d_in x d_out]
  Tensor<S> bias;    // [d_out]
  DenseParams() = default;
  DenseParams(int d_in, int d_out) : weights({d_in, d_out}), bias({d_out}) {}
  int d_in() const { return weights.dim(0); }
  int d_out() const { return weights.dim(1); }
};

template <class S>
Tensor<S> dense_forward(const Tensor<S>& x, const DenseParams<S>& p) {
  if (x.ndim() != 2 || x.dim(1) != p.d_in())
    throw DimensionError("dense_forward input " + shape_str(x.shape()) +
                         " vs weights " + shape_str(p.weights.shape()));
  const int b = x.dim(0), n = p.d_out();
  Tensor<S> y({b, n});
  kern::gemm(b, n, p.d_in(), x.data(), p.d_in(), false, p.weights.data(), n, false,
             y.data(), n, false);
  for (int i = 0; i < b; ++i) {
    S* yi = y.data() + std::size_t(i) * n;
    for (int j = 0; j < n; ++j) yi[j] += p.bias.at(j);
  }
  return y;
}

template <class S>
struct DenseGrads {
  Tensor<S> dx, dweights, dbias;
};

template <class S>
DenseGrads<S> dense_backward(const Tensor<S>& x, const Tensor<S>& grad_out,
                             const DenseParams<S>& p, bool need_dx = true) {
  const int b = x.dim(0), d = p.d_in(), n = p.d_out();
  if (grad_out.ndim() != 2 || grad_out.dim(0) != b || grad_out.dim(1) != n)
    throw DimensionError("dense_backward grad " + shape_str(grad_out.shape()) +
                         " vs expected [" + std::to_string(b) + "x" +
                         std::to_string(n) + "]");
  DenseGrads<S> out;
  out.dweights = Tensor<S>({d, n});
  kern::gemm(d, n, b, x.data(), d, true, grad_out.data(), n, false,
             out.dweights.data(), n, false);
  out.dbias = Tensor<S>({n});
  for (int i = 0; i < b; ++i) {
    const S* go = grad_out.data() + std::size_t(i) * n;
    for (int j = 0; j < n; ++j) out.dbias.at(j) += go[j];
  }
  if (need_dx) {
    out.dx = Tensor<S>({b, d});
    kern::gemm(b, d, n, grad_out.data(), n, false, p.weights.data(), n, true,
               out.dx.data(), d, false);
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv

template <class S>
struct ConvParams {
  Tensor<S> kernels; // [c_out x c_in x kh x kw]
  Tensor<S> bias;    // [c_out]; empty when the layer runs without bias
  int stride = 1;
  int pad = 0;
  ConvParams() = default;
  ConvParams(int c_out, int c_in, int kh, int kw, int stride_, int pad_, bool with_bias)
      : kernels({c_out, c_in, kh, kw}), stride(stride_), pad(pad_) {
    if (with_bias) bias = Tensor<S>({c_out});
  }
  int c_out() const { return kernels.dim(0); }
  int c_in() const { return kernels.dim(1); }
  int patch() const { return kernels.dim(1) * kernels.dim(2) * kernels.dim(3); }
};

namespace detail {
// group enough samples per GEMM that the n extent stays wide even for small
// spatial outputs, with a cap on the im2col scratch
inline int conv_group(int batch, int hw_out, int patch) {
  const long target = 2048;
  long g = (target + hw_out - 1) / hw_out;
  const long cap = (4l << 20) / patch / hw_out; // <= 4M elements of scratch
  if (g > cap) g = cap;
  if (g < 1) g = 1;
  if (g > batch) g = batch;
  return static_cast<int>(g);
}
} // namespace detail

// x [b x c_in x h x w] -> y [b x c_out x h' x w']
template <class S>
Tensor<S> conv_forward(const Tensor<S>& x, const ConvParams<S>& p) {
  if (x.ndim() != 4 || x.dim(1) != p.c_in())
    throw DimensionError("conv_forward input " + shape_str(x.shape()) +
                         " vs kernels " + shape_str(p.kernels.shape()));
  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int kh = p.kernels.dim(2), kw = p.kernels.dim(3);
  const ConvGeom g = conv_geometry(h, w, p.c_in(), kh, kw, p.stride, p.pad);
  const int hw = g.h_out * g.w_out;
  const std::size_t in_plane = std::size_t(p.c_in()) * h * w;
  const std::size_t out_plane = std::size_t(p.c_out()) * hw;

  Tensor<S> y({b, p.c_out(), g.h_out, g.w_out});
  const int group = detail::conv_group(b, hw, g.patch);
  std::vector<S> cols(std::size_t(group) * hw * g.patch);
  std::vector<S> prod(std::size_t(p.c_out()) * group * hw);

  for (int s0 = 0; s0 < b; s0 += group) {
    const int gs = std::min(group, b - s0);
    for (int s = 0; s < gs; ++s)
      im2col(x.data() + (s0 + s) * in_plane, p.c_in(), h, w, kh, kw, p.stride, p.pad,
             g.h_out, g.w_out, cols.data() + std::size_t(s) * hw * g.patch);
    kern::gemm(p.c_out(), gs * hw, g.patch, p.kernels.data(), g.patch, false,
               cols.data(), g.patch, true, prod.data(), gs * hw, false);
    for (int s = 0; s < gs; ++s) {
      S* dst = y.data() + (s0 + s) * out_plane;
      for (int o = 0; o < p.c_out(); ++o) {
        const S* src = prod.data() + (std::size_t(o) * gs + s) * hw;
        const S bias = p.bias.empty() ? S(0) : p.bias.at(o);
        for (int q = 0; q < hw; ++q) dst[std::size_t(o) * hw + q] = src[q] + bias;
      }
    }
  }
  return y;
}

template <class S>
struct ConvGrads {
  Tensor<S> dx, dkernels, dbias;
};

template <class S>
ConvGrads<S> conv_backward(const Tensor<S>& x, const Tensor<S>& grad_out,
                           const ConvParams<S>& p, bool need_dx = true) {
  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int kh = p.kernels.dim(2), kw = p.kernels.dim(3);
  const ConvGeom g = conv_geometry(h, w, p.c_in(), kh, kw, p.stride, p.pad);
  const int hw = g.h_out * g.w_out;
  if (grad_out.ndim() != 4 || grad_out.dim(0) != b || grad_out.dim(1) != p.c_out() ||
      grad_out.dim(2) != g.h_out || grad_out.dim(3) != g.w_out)
    throw DimensionError("conv_backward grad " + shape_str(grad_out.shape()));
  const std::size_t in_plane = std::size_t(p.c_in()) * h * w;
  const std::size_t out_plane = std::size_t(p.c_out()) * hw;

  ConvGrads<S> out;
  out.dkernels = Tensor<S>(p.kernels.shape());
  if (!p.bias.empty()) out.dbias = Tensor<S>({p.c_out()});
  if (need_dx) out.dx = Tensor<S>(x.shape());

  const int group = detail::conv_group(b, hw, g.patch);
  std::vector<S> cols(std::size_t(group) * hw * g.patch);
  std::vector<S> dy(std::size_t(p.c_out()) * group * hw);
  std::vector<S> dcols(std::size_t(group) * hw * g.patch);

  for (int s0 = 0; s0 < b; s0 += group) {
    const int gs = std::min(group, b - s0);
    for (int s = 0; s < gs; ++s)
      im2col(x.data() + (s0 + s) * in_plane, p.c_in(), h, w, kh, kw, p.stride, p.pad,
             g.h_out, g.w_out, cols.data() + std::size_t(s) * hw * g.patch);
    // gather grad_out into [c_out x (gs*hw)]
    for (int s = 0; s < gs; ++s) {
      const S* src = grad_out.data() + (s0 + s) * out_plane;
      for (int o = 0; o < p.c_out(); ++o) {
        S* dst = dy.data() + (std::size_t(o) * gs + s) * hw;
        const S* so = src + std::size_t(o) * hw;
        for (int q = 0; q < hw; ++q) dst[q] = so[q];
      }
    }
    kern::gemm(p.c_out(), g.patch, gs * hw, dy.data(), gs * hw, false, cols.data(),
               g.patch, false, out.dkernels.data(), g.patch, true);
    if (!p.bias.empty()) {
      for (int o = 0; o < p.c_out(); ++o) {
        S acc = out.dbias.at(o);
        const S* row = dy.data() + std::size_t(o) * gs * hw;
        for (int q = 0; q < gs * hw; ++q) acc += row[q];
        out.dbias.at(o) = acc;
      }
    }
    if (need_dx) {
      kern::gemm(gs * hw, g.patch, p.c_out(), dy.data(), gs * hw, true,
                 p.kernels.data(), g.patch, false, dcols.data(), g.patch, false);
      for (int s = 0; s < gs; ++s)
        col2im_add(dcols.data() + std::size_t(s) * hw * g.patch, p.c_in(), h, w, kh,
                   kw, p.stride, p.pad, g.h_out, g.w_out,
                   out.dx.data() + (s0 + s) * in_plane);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax cross-entropy head

template <class S>
struct XentResult {
  S loss;
  Tensor<S> grad_logits;
};

template <class S>
XentResult<S> softmax_xent(const Tensor<S>& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2 || static_cast<std::size_t>(logits.dim(0)) != labels.size())
    throw DimensionError("softmax_xent logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  const int b = logits.dim(0), n = logits.dim(1);
  XentResult<S> out{S(0), Tensor<S>({b, n})};
  for (int i = 0; i < b; ++i) {
    if (labels[i] < 0 || labels[i] >= n)
      throw IndexError("label " + std::to_string(labels[i]) + " out of range [0, " +
                       std::to_string(n) + ") at row " + std::to_string(i));
    const S* li = logits.data() + std::size_t(i) * n;
    S* gi = out.grad_logits.data() + std::size_t(i) * n;
    S mx = li[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, li[j]);
    S z = S(0);
    for (int j = 0; j < n; ++j) {
      gi[j] = std::exp(li[j] - mx);
      z += gi[j];
    }
    out.loss += -(li[labels[i]] - mx - std::log(z));
    const S inv = S(1) / (z * S(b));
    for (int j = 0; j < n; ++j) gi[j] *= inv;
    gi[labels[i]] -= S(1) / S(b);
  }
  out.loss /= S(b);
  return out;
}

// ---------------------------------------------------------------------------
// initialization

enum class InitScheme { lecun_normal, he_normal };

// shape [d_in x d_out] for dense, [c_out x c_in x kh x kw] for conv;
// fan_in is d_in resp. c_in*kh*kw
template <class S>
Tensor<S> init_weights(const std::vector<int>& shape, InitScheme scheme,
                       std::uint64_t seed) {
  if (shape.size() != 2 && shape.size() != 4)
    throw DimensionError("init_weights expects dense or conv shape, got " +
                         shape_str(shape));
  const long fan_in = shape.size() == 2
                          ? shape[0]
                          : static_cast<long>(shape[1]) * shape[2] * shape[3];
  if (fan_in < 1) throw DimensionError("init_weights fan_in must be >= 1");
  const double std_dev = scheme == InitScheme::lecun_normal
                             ? 1.0 / std::sqrt(double(fan_in))
                             : std::sqrt(2.0 / double(fan_in));
  Tensor<S> t(shape);
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<S>(rng.next_normal() * std_dev);
  return t;
}

} // namespace sndcnn
