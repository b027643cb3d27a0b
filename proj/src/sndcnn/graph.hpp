#pragma once
// Model construction and training over the ablation grid: plain dense stacks
// and bottleneck CNN stacks with independent activation / shortcut / batchnorm
// toggles, SGD, and the Newbob learning-rate schedule.
//
// CNN geometry: stem 3x3/s1/p1, four stages of bottleneck blocks with the
// classic [3,4,6,3] fill and expansion 4. The 41x40 input has mixed parity,
// so stage-entry downsampling uses rectangular stride-2 kernels ((3,2) into
// stage 2, (2,2) afterwards, pad 0) to keep every conv output extent integral.
// Batch normalization follows the per-dimension formulation: conv maps are
// normalized over the flattened c*h*w dimensions.

#include "layers.hpp"
#include "stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sndcnn {

enum class StackKind { dnn, cnn_bottleneck };
enum class Activation { relu, selu };
enum class RunMode { train, infer };

struct ModelConfig {
  StackKind stack = StackKind::dnn;
  int depth = 6; // weight layers: conv + dense, including the output layer
  std::vector<int> widths = {256}; // dnn hidden width | cnn per-stage mid channels
  Activation activation = Activation::relu;
  bool shortcut = false;
  bool batchnorm = false;
  int input_dim = 1640;
  int output_dim = 16;
  int input_h = 41; // cnn input image extents; input_dim must equal h*w
  int input_w = 40;
  std::optional<bool> conv_bias;           // default: bias iff batchnorm is off
  std::optional<InitScheme> init_override; // default: selu->lecun, relu->he

  bool conv_bias_effective() const { return conv_bias.value_or(!batchnorm); }
  InitScheme init_scheme() const {
    if (init_override) return *init_override;
    return activation == Activation::selu ? InitScheme::lecun_normal
                                          : InitScheme::he_normal;
  }

  void validate() const {
    if (depth < 1) throw ConfigError("depth must be >= 1");
    if (input_dim < 1 || output_dim < 1)
      throw ConfigError("input_dim and output_dim must be >= 1");
    if (stack == StackKind::dnn) {
      if (widths.size() != 1 && widths.size() != static_cast<std::size_t>(depth) - 1)
        throw ConfigError("dnn widths must have 1 entry or depth-1 entries, got " +
                          std::to_string(widths.size()));
      for (std::size_t i = 0; i < widths.size(); ++i)
        if (widths[i] < 1)
          throw ConfigError("dnn width at layer " + std::to_string(i + 1) +
                            " must be >= 1");
    } else {
      if (depth < 2) throw ConfigError("cnn-bottleneck depth must be >= 2");
      if (widths.size() != 4)
        throw ConfigError("cnn-bottleneck needs 4 stage widths, got " +
                          std::to_string(widths.size()));
      for (std::size_t s = 0; s < 4; ++s)
        if (widths[s] < 1)
          throw ConfigError("stage " + std::to_string(s + 1) + " width must be >= 1");
      if (input_h * input_w != input_dim)
        throw ConfigError("cnn input_dim " + std::to_string(input_dim) +
                          " != input_h*input_w = " + std::to_string(input_h * input_w));
    }
  }
};

struct LayerCensus {
  int weight_layers = 0; // main-path conv + dense, including the output layer
  int projections = 0;   // shortcut projection convs, counted separately
  int bn_nodes = 0;
  int shortcut_adds = 0;
  long main_weight_params = 0; // conv/dense weight elements on the main path
  long proj_weight_params = 0;
  long bn_params = 0;
  long bias_params = 0;
};

// ---------------------------------------------------------------------------
// Newbob: halve the rate when relative improvement drops under the threshold;
// once halving has begun, two consecutive sub-threshold evaluations stop the
// run.

class NewbobSchedule {
 public:
  explicit NewbobSchedule(double threshold = 0.005) : threshold_(threshold) {}

  struct Decision {
    double lr;
    bool stop;
  };

  Decision step(double val_loss, double lr) {
    Decision d{lr, false};
    if (have_prev_) {
      const double improvement = (prev_loss_ - val_loss) / prev_loss_;
      if (improvement < threshold_) {
        if (halving_) {
          if (++bad_streak_ >= 2) d.stop = true;
        } else {
          halving_ = true;
          bad_streak_ = 0;
        }
        d.lr = lr / 2;
      } else {
        bad_streak_ = 0;
      }
    }
    prev_loss_ = val_loss;
    have_prev_ = true;
    return d;
  }

 private:
  double threshold_;
  double prev_loss_ = 0;
  bool have_prev_ = false;
  bool halving_ = false;
  int bad_streak_ = 0;
};

// replay the automaton over a full validation-loss history
inline NewbobSchedule::Decision newbob_schedule(const std::vector<double>& history,
                                                double lr, double threshold = 0.005) {
  if (history.empty()) throw StateError("newbob_schedule needs at least one loss");
  NewbobSchedule nb(threshold);
  NewbobSchedule::Decision d{lr, false};
  for (double v : history) {
    d = nb.step(v, d.lr);
    if (d.stop) break;
  }
  return d;
}

// ---------------------------------------------------------------------------

namespace graph_detail {

template <class S>
struct BnNode {
  BnParams<S> p{1};
};

template <class S>
struct ConvNode {
  ConvParams<S> p;
  std::optional<BnNode<S>> bn;
  int layer_index = 0; // 1-based weight-layer position; 0 for projections
};

template <class S>
struct DenseNode {
  DenseParams<S> p;
  std::optional<BnNode<S>> bn;
  int layer_index = 0;
};

template <class S>
struct CnnBlock {
  std::vector<ConvNode<S>> units; // 1..3 convs; partial blocks for odd depths
  bool shortcut = false;          // complete blocks only
  std::optional<ConvNode<S>> proj;
};

template <class S>
struct DnnBlock {
  DenseNode<S> dense;
  bool shortcut = false;
  std::optional<DenseNode<S>> proj;
};

// stage block counts for a requested number of in-block convs; fills the
// [3,4,6,3] pattern, extends the last stage for deeper nets, and leaves a
// partial block (1 or 2 convs) when the count is not a multiple of 3
struct StagePlan {
  int full_blocks[4] = {0, 0, 0, 0};
  int partial_stage = -1;
  int partial_convs = 0;
};

inline StagePlan plan_stages(int block_convs) {
  const int pattern[4] = {3, 4, 6, 3};
  StagePlan plan;
  int full = block_convs / 3;
  const int rem = block_convs % 3;
  for (int s = 0; s < 4 && full > 0; ++s) {
    plan.full_blocks[s] = std::min(pattern[s], full);
    full -= plan.full_blocks[s];
  }
  plan.full_blocks[3] += full; // beyond the 50-layer pattern: grow the last stage
  if (rem > 0) {
    int placed = 3;
    for (int s = 0; s < 4; ++s)
      if (plan.full_blocks[s] < pattern[s]) {
        placed = s;
        break;
      }
    plan.partial_stage = placed;
    plan.partial_convs = rem;
  }
  return plan;
}

} // namespace graph_detail

template <class S>
class Network {
 public:
  Network(ModelConfig cfg, std::uint64_t seed);

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  const ModelConfig& config() const { return cfg_; }
  LayerCensus census() const;

  // batch: [b x input_dim], or [b x 1 x h x w] for cnn stacks
  Tensor<S> forward(const Tensor<S>& batch, RunMode mode,
                    StatsRecorder* recorder = nullptr, long step = 0) {
    return forward_impl(batch, mode == RunMode::train, recorder, step, false);
  }

  // gradients in params() order; requires a train-mode forward this step
  std::vector<Tensor<S>> backward(const Tensor<S>& grad_logits);

  void sgd_step(const std::vector<Tensor<S>>& grads, S lr);

  // everything up to (excluding) the output layer; no trace is recorded.
  // For batchnorm models this recomputes batch statistics and writes the
  // bn caches, so at most one thread may run it at a time.
  Tensor<S> hidden_forward(const Tensor<S>& batch) {
    return forward_impl(batch, false, nullptr, 0, true);
  }
  const DenseParams<S>& output_layer() const { return head_.p; }
  int hidden_dim() const { return head_.p.d_in(); }

  std::vector<Tensor<S>*> params();
  std::vector<const Tensor<S>*> params() const;
  std::vector<std::string> param_names() const;

 private:
  using ConvNode = graph_detail::ConvNode<S>;
  using DenseNode = graph_detail::DenseNode<S>;
  using BnNode = graph_detail::BnNode<S>;
  using CnnBlock = graph_detail::CnnBlock<S>;
  using DnnBlock = graph_detail::DnnBlock<S>;

  struct Trace {
    std::vector<Tensor<S>> unit_in; // inputs to conv/dense nodes, execution order
    std::vector<Tensor<S>> preact;  // activation inputs, execution order
    Tensor<S> gap_in;
    Tensor<S> head_in;
    bool valid = false;
  };

  Tensor<S> forward_impl(const Tensor<S>& batch, bool train, StatsRecorder* rec,
                         long step, bool stop_before_head);

  Tensor<S> activate(const Tensor<S>& x) const {
    return cfg_.activation == Activation::selu ? selu_forward(x, selu_)
                                               : relu_forward(x);
  }
  Tensor<S> activate_backward(const Tensor<S>& pre, const Tensor<S>& g) const {
    return cfg_.activation == Activation::selu ? selu_backward(pre, g, selu_)
                                               : relu_backward(pre, g);
  }

  static int flat_units(const Tensor<S>& x) {
    int units = 1;
    for (int i = 1; i < x.ndim(); ++i) units *= x.dim(i);
    return units;
  }

  static Tensor<S> bn_apply(BnParams<S>& bn, Tensor<S> x) {
    const auto shape = x.shape();
    if (x.ndim() > 2) x.reshape({x.dim(0), flat_units(x)});
    Tensor<S> y = bn_forward(x, bn);
    y.reshape(shape);
    return y;
  }

  // bn backward through an arbitrarily shaped activation gradient
  template <class Put>
  Tensor<S> bn_unapply(BnNode& node, Tensor<S> g, Put&& put) {
    const auto shape = g.shape();
    if (g.ndim() > 2) g.reshape({g.dim(0), flat_units(g)});
    auto bg = bn_backward(g, node.p);
    put(std::move(bg.dbeta));
    put(std::move(bg.dgamma));
    Tensor<S> dx = std::move(bg.dx);
    dx.reshape(shape);
    return dx;
  }

  void build_dnn(std::uint64_t seed);
  void build_cnn(std::uint64_t seed);
  void collect(std::vector<const Tensor<S>*>& out) const;

  ModelConfig cfg_;
  SeluParams<S> selu_;
  std::optional<ConvNode> stem_;   // cnn
  std::vector<CnnBlock> cnn_blocks_;
  std::vector<DnnBlock> dnn_blocks_; // dnn
  DenseNode head_;
  Trace trace_;
};

// ---------------------------------------------------------------------------
// construction

template <class S>
Network<S>::Network(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.stack == StackKind::dnn)
    build_dnn(seed);
  else
    build_cnn(seed);
}

template <class S>
void Network<S>::build_dnn(std::uint64_t seed) {
  Rng rng(seed);
  const InitScheme scheme = cfg_.init_scheme();
  int prev = cfg_.input_dim;
  for (int l = 0; l < cfg_.depth - 1; ++l) {
    const int w = cfg_.widths.size() == 1 ? cfg_.widths[0]
                                          : cfg_.widths[static_cast<std::size_t>(l)];
    DnnBlock blk;
    blk.dense.p = DenseParams<S>(prev, w);
    blk.dense.p.weights = init_weights<S>({prev, w}, scheme, rng.next_u64());
    blk.dense.layer_index = l + 1;
    if (cfg_.batchnorm) blk.dense.bn = BnNode{BnParams<S>(w)};
    if (cfg_.shortcut) {
      blk.shortcut = true;
      if (prev != w) {
        DenseNode proj;
        proj.p = DenseParams<S>(prev, w);
        proj.p.weights = init_weights<S>({prev, w}, scheme, rng.next_u64());
        if (cfg_.batchnorm) proj.bn = BnNode{BnParams<S>(w)};
        blk.proj = std::move(proj);
      }
    }
    dnn_blocks_.push_back(std::move(blk));
    prev = w;
  }
  head_.p = DenseParams<S>(prev, cfg_.output_dim);
  head_.p.weights = init_weights<S>({prev, cfg_.output_dim}, scheme, rng.next_u64());
  head_.layer_index = cfg_.depth;
}

template <class S>
void Network<S>::build_cnn(std::uint64_t seed) {
  Rng rng(seed);
  const InitScheme scheme = cfg_.init_scheme();
  const bool conv_bias = cfg_.conv_bias_effective();
  auto make_conv = [&](int c_out, int c_in, int kh, int kw, int stride, int pad,
                       int layer_index) {
    ConvNode node;
    node.p = ConvParams<S>(c_out, c_in, kh, kw, stride, pad, conv_bias);
    node.p.kernels = init_weights<S>({c_out, c_in, kh, kw}, scheme, rng.next_u64());
    node.layer_index = layer_index;
    return node;
  };
  auto attach_bn = [&](ConvNode& node, int c, int hh, int ww) {
    if (cfg_.batchnorm) node.bn = BnNode{BnParams<S>(c * hh * ww)};
  };

  int layer = 1;
  int ch = cfg_.widths[0];
  int h = cfg_.input_h, w = cfg_.input_w;
  stem_ = make_conv(ch, 1, 3, 3, 1, 1, layer++);
  attach_bn(*stem_, ch, h, w);

  const auto plan = graph_detail::plan_stages(cfg_.depth - 2);
  const int down_kh[4] = {0, 3, 2, 2};
  const int down_kw[4] = {0, 2, 2, 2};

  for (int s = 0; s < 4; ++s) {
    const int mid = cfg_.widths[static_cast<std::size_t>(s)];
    const int out = 4 * mid;
    const int blocks_here = plan.full_blocks[s] + (plan.partial_stage == s ? 1 : 0);
    for (int b = 0; b < blocks_here; ++b) {
      const bool partial = plan.partial_stage == s && b == plan.full_blocks[s];
      const bool strided = b == 0 && s > 0;
      const int nconvs = partial ? plan.partial_convs : 3;
      const int ch_in = ch;
      CnnBlock blk;

      blk.units.push_back(make_conv(mid, ch, 1, 1, 1, 0, layer++));
      attach_bn(blk.units.back(), mid, h, w);
      if (nconvs >= 2) {
        if (strided) {
          blk.units.push_back(
              make_conv(mid, mid, down_kh[s], down_kw[s], 2, 0, layer++));
          h = (h - down_kh[s]) / 2 + 1;
          w = (w - down_kw[s]) / 2 + 1;
        } else {
          blk.units.push_back(make_conv(mid, mid, 3, 3, 1, 1, layer++));
        }
        attach_bn(blk.units.back(), mid, h, w);
      }
      if (nconvs >= 3) {
        blk.units.push_back(make_conv(out, mid, 1, 1, 1, 0, layer++));
        attach_bn(blk.units.back(), out, h, w);
      }
      if (cfg_.shortcut && nconvs == 3) {
        blk.shortcut = true;
        if (ch_in != out || strided) {
          ConvNode proj = strided
                              ? make_conv(out, ch_in, down_kh[s], down_kw[s], 2, 0, 0)
                              : make_conv(out, ch_in, 1, 1, 1, 0, 0);
          attach_bn(proj, out, h, w);
          blk.proj = std::move(proj);
        }
      }
      ch = nconvs >= 3 ? out : mid;
      cnn_blocks_.push_back(std::move(blk));
    }
  }
  head_.p = DenseParams<S>(ch, cfg_.output_dim);
  head_.p.weights = init_weights<S>({ch, cfg_.output_dim}, scheme, rng.next_u64());
  head_.layer_index = cfg_.depth;
}

// ---------------------------------------------------------------------------
// parameter traversal (defines checkpoint build order)

template <class S>
void Network<S>::collect(std::vector<const Tensor<S>*>& out) const {
  auto push_bn = [&](const std::optional<BnNode>& bn) {
    if (bn) {
      out.push_back(&bn->p.gamma);
      out.push_back(&bn->p.beta);
    }
  };
  auto push_conv = [&](const ConvNode& c) {
    out.push_back(&c.p.kernels);
    if (!c.p.bias.empty()) out.push_back(&c.p.bias);
    push_bn(c.bn);
  };
  auto push_dense = [&](const DenseNode& d) {
    out.push_back(&d.p.weights);
    out.push_back(&d.p.bias);
    push_bn(d.bn);
  };
  if (cfg_.stack == StackKind::cnn_bottleneck) {
    push_conv(*stem_);
    for (const auto& blk : cnn_blocks_) {
      for (const auto& u : blk.units) push_conv(u);
      if (blk.proj) push_conv(*blk.proj);
    }
  } else {
    for (const auto& blk : dnn_blocks_) {
      push_dense(blk.dense);
      if (blk.proj) push_dense(*blk.proj);
    }
  }
  push_dense(head_);
}

template <class S>
std::vector<const Tensor<S>*> Network<S>::params() const {
  std::vector<const Tensor<S>*> out;
  collect(out);
  return out;
}

template <class S>
std::vector<Tensor<S>*> Network<S>::params() {
  std::vector<const Tensor<S>*> tmp;
  collect(tmp);
  std::vector<Tensor<S>*> out(tmp.size());
  for (std::size_t i = 0; i < tmp.size(); ++i) out[i] = const_cast<Tensor<S>*>(tmp[i]);
  return out;
}

template <class S>
std::vector<std::string> Network<S>::param_names() const {
  std::vector<std::string> out;
  auto tag = [](int layer, const std::string& what) {
    return "L" + std::to_string(layer) + "." + what;
  };
  auto push_bn = [&](const std::optional<BnNode>& bn, int layer, const char* prefix) {
    if (bn) {
      out.push_back(tag(layer, std::string(prefix) + "bn.gamma"));
      out.push_back(tag(layer, std::string(prefix) + "bn.beta"));
    }
  };
  auto push_conv = [&](const ConvNode& c, int layer, bool proj) {
    const char* prefix = proj ? "proj." : "";
    out.push_back(tag(layer, std::string(prefix) + "kernels"));
    if (!c.p.bias.empty()) out.push_back(tag(layer, std::string(prefix) + "bias"));
    push_bn(c.bn, layer, prefix);
  };
  auto push_dense = [&](const DenseNode& d, int layer, bool proj) {
    const char* prefix = proj ? "proj." : "";
    out.push_back(tag(layer, std::string(prefix) + "weights"));
    out.push_back(tag(layer, std::string(prefix) + "bias"));
    push_bn(d.bn, layer, prefix);
  };
  if (cfg_.stack == StackKind::cnn_bottleneck) {
    push_conv(*stem_, stem_->layer_index, false);
    for (const auto& blk : cnn_blocks_) {
      for (const auto& u : blk.units) push_conv(u, u.layer_index, false);
      if (blk.proj) push_conv(*blk.proj, blk.units.back().layer_index, true);
    }
  } else {
    for (const auto& blk : dnn_blocks_) {
      push_dense(blk.dense, blk.dense.layer_index, false);
      if (blk.proj) push_dense(*blk.proj, blk.dense.layer_index, true);
    }
  }
  push_dense(head_, head_.layer_index, false);
  return out;
}

template <class S>
LayerCensus Network<S>::census() const {
  LayerCensus c;
  auto count_bn = [&](const std::optional<BnNode>& bn) {
    if (bn) {
      ++c.bn_nodes;
      c.bn_params += static_cast<long>(bn->p.gamma.size() + bn->p.beta.size());
    }
  };
  auto count_conv = [&](const ConvNode& u, bool proj) {
    (proj ? c.proj_weight_params : c.main_weight_params) +=
        static_cast<long>(u.p.kernels.size());
    if (!u.p.bias.empty()) c.bias_params += static_cast<long>(u.p.bias.size());
    count_bn(u.bn);
  };
  auto count_dense = [&](const DenseNode& d, bool proj) {
    (proj ? c.proj_weight_params : c.main_weight_params) +=
        static_cast<long>(d.p.weights.size());
    c.bias_params += static_cast<long>(d.p.bias.size());
    count_bn(d.bn);
  };
  if (cfg_.stack == StackKind::cnn_bottleneck) {
    ++c.weight_layers;
    count_conv(*stem_, false);
    for (const auto& blk : cnn_blocks_) {
      for (const auto& u : blk.units) {
        ++c.weight_layers;
        count_conv(u, false);
      }
      if (blk.shortcut) ++c.shortcut_adds;
      if (blk.proj) {
        ++c.projections;
        count_conv(*blk.proj, true);
      }
    }
  } else {
    for (const auto& blk : dnn_blocks_) {
      ++c.weight_layers;
      count_dense(blk.dense, false);
      if (blk.shortcut) ++c.shortcut_adds;
      if (blk.proj) {
        ++c.projections;
        count_dense(*blk.proj, true);
      }
    }
  }
  ++c.weight_layers;
  count_dense(head_, false);
  return c;
}

// ---------------------------------------------------------------------------
// forward

template <class S>
Tensor<S> Network<S>::forward_impl(const Tensor<S>& batch, bool train,
                                   StatsRecorder* rec, long step,
                                   bool stop_before_head) {
  Tensor<S> cur = batch;
  if (cur.ndim() < 2) throw DimensionError("forward input must be batched");
  const int b = cur.dim(0);
  if (cfg_.stack == StackKind::cnn_bottleneck) {
    if (cur.ndim() == 2) {
      if (cur.dim(1) != cfg_.input_dim)
        throw DimensionError("forward input " + shape_str(cur.shape()) +
                             " vs input_dim " + std::to_string(cfg_.input_dim));
      cur.reshape({b, 1, cfg_.input_h, cfg_.input_w});
    } else if (cur.ndim() != 4 || cur.dim(1) != 1 || cur.dim(2) != cfg_.input_h ||
               cur.dim(3) != cfg_.input_w) {
      throw DimensionError("forward input " + shape_str(cur.shape()) +
                           " vs expected [b x 1 x " + std::to_string(cfg_.input_h) +
                           " x " + std::to_string(cfg_.input_w) + "]");
    }
  } else if (cur.ndim() != 2 || cur.dim(1) != cfg_.input_dim) {
    throw DimensionError("forward input " + shape_str(cur.shape()) +
                         " vs input_dim " + std::to_string(cfg_.input_dim));
  }

  Trace trace;
  const bool want_stats = rec && rec->wants(step);

  // applies the activation, records stats, and stashes the preact for backward
  auto run_act = [&](Tensor<S> pre, int layer_index) {
    Tensor<S> post = activate(pre);
    if (want_stats && layer_index > 0)
      rec->record(layer_index, step, rec->pre_activation() ? pre : post);
    if (train) trace.preact.push_back(std::move(pre));
    return post;
  };
  auto save_in = [&](const Tensor<S>& x) {
    if (train) trace.unit_in.push_back(x);
  };

  if (cfg_.stack == StackKind::cnn_bottleneck) {
    save_in(cur);
    cur = conv_forward(cur, stem_->p);
    if (stem_->bn) cur = bn_apply(stem_->bn->p, std::move(cur));
    cur = run_act(std::move(cur), stem_->layer_index);

    for (auto& blk : cnn_blocks_) {
      Tensor<S> block_in = cur;
      const std::size_t nunits = blk.units.size();
      for (std::size_t u = 0; u < nunits; ++u) {
        auto& unit = blk.units[u];
        save_in(cur);
        cur = conv_forward(cur, unit.p);
        if (unit.bn) cur = bn_apply(unit.bn->p, std::move(cur));
        if (u + 1 == nunits && blk.shortcut) {
          Tensor<S> sc;
          if (blk.proj) {
            save_in(block_in);
            sc = conv_forward(block_in, blk.proj->p);
            if (blk.proj->bn) sc = bn_apply(blk.proj->bn->p, std::move(sc));
          } else {
            sc = std::move(block_in);
          }
          if (!cur.same_shape(sc))
            throw ConfigError("shortcut shape mismatch " + shape_str(cur.shape()) +
                              " vs " + shape_str(sc.shape()));
          Tensor<S> summed(cur.shape());
          kern::add(cur.data(), sc.data(), summed.data(), cur.size());
          cur = std::move(summed);
        }
        cur = run_act(std::move(cur), unit.layer_index);
      }
    }

    // global average pool
    if (train) trace.gap_in = cur;
    const int c = cur.dim(1), hw = cur.dim(2) * cur.dim(3);
    Tensor<S> pooled({b, c});
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < c; ++j) {
        const S* src = cur.data() + (std::size_t(i) * c + j) * hw;
        S acc = S(0);
        for (int q = 0; q < hw; ++q) acc += src[q];
        pooled.at(i, j) = acc / S(hw);
      }
    cur = std::move(pooled);
  } else {
    for (auto& blk : dnn_blocks_) {
      Tensor<S> block_in = cur;
      save_in(cur);
      cur = dense_forward(cur, blk.dense.p);
      if (blk.dense.bn) cur = bn_apply(blk.dense.bn->p, std::move(cur));
      if (blk.shortcut) {
        Tensor<S> sc;
        if (blk.proj) {
          save_in(block_in);
          sc = dense_forward(block_in, blk.proj->p);
          if (blk.proj->bn) sc = bn_apply(blk.proj->bn->p, std::move(sc));
        } else {
          sc = std::move(block_in);
        }
        Tensor<S> summed(cur.shape());
        kern::add(cur.data(), sc.data(), summed.data(), cur.size());
        cur = std::move(summed);
      }
      cur = run_act(std::move(cur), blk.dense.layer_index);
    }
  }

  if (stop_before_head) return cur;

  if (train) trace.head_in = cur;
  Tensor<S> logits = dense_forward(cur, head_.p);
  if (train) {
    trace.valid = true;
    trace_ = std::move(trace);
  }
  return logits;
}

// ---------------------------------------------------------------------------
// backward + sgd

template <class S>
std::vector<Tensor<S>> Network<S>::backward(const Tensor<S>& grad_logits) {
  if (!trace_.valid)
    throw StateError("backward requires a train-mode forward this step");
  Trace trace = std::move(trace_);
  trace_ = Trace{};

  const std::size_t nparams = params().size();
  std::vector<Tensor<S>> grads(nparams);
  std::size_t gi = nparams; // grads are produced in reverse parameter order
  auto put = [&](Tensor<S> g) { grads[--gi] = std::move(g); };

  auto pop_in = [&]() {
    Tensor<S> t = std::move(trace.unit_in.back());
    trace.unit_in.pop_back();
    return t;
  };
  auto pop_preact = [&]() {
    Tensor<S> t = std::move(trace.preact.back());
    trace.preact.pop_back();
    return t;
  };

  auto head_g = dense_backward(trace.head_in, grad_logits, head_.p, true);
  put(std::move(head_g.dbias));
  put(std::move(head_g.dweights));
  Tensor<S> g = std::move(head_g.dx);

  if (cfg_.stack == StackKind::cnn_bottleneck) {
    // undo global average pool
    const int b = trace.gap_in.dim(0), c = trace.gap_in.dim(1);
    const int hw = trace.gap_in.dim(2) * trace.gap_in.dim(3);
    Tensor<S> gimg(trace.gap_in.shape());
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < c; ++j) {
        const S v = g.at(i, j) / S(hw);
        S* dst = gimg.data() + (std::size_t(i) * c + j) * hw;
        for (int q = 0; q < hw; ++q) dst[q] = v;
      }
    g = std::move(gimg);

    for (auto blk = cnn_blocks_.rbegin(); blk != cnn_blocks_.rend(); ++blk) {
      Tensor<S> shortcut_g;
      for (std::size_t ui = blk->units.size(); ui-- > 0;) {
        auto& unit = blk->units[ui];
        const bool last = ui + 1 == blk->units.size();
        g = activate_backward(pop_preact(), g);
        if (last && blk->shortcut) {
          if (blk->proj) {
            Tensor<S> pg = g;
            if (blk->proj->bn) pg = bn_unapply(*blk->proj->bn, std::move(pg), put);
            auto cg = conv_backward(pop_in(), pg, blk->proj->p, true);
            if (!blk->proj->p.bias.empty()) put(std::move(cg.dbias));
            put(std::move(cg.dkernels));
            shortcut_g = std::move(cg.dx);
          } else {
            shortcut_g = g;
          }
        }
        if (unit.bn) g = bn_unapply(*unit.bn, std::move(g), put);
        auto cg = conv_backward(pop_in(), g, unit.p, true);
        if (!unit.p.bias.empty()) put(std::move(cg.dbias));
        put(std::move(cg.dkernels));
        g = std::move(cg.dx);
      }
      if (!shortcut_g.empty()) {
        Tensor<S> merged(g.shape());
        kern::add(g.data(), shortcut_g.data(), merged.data(), g.size());
        g = std::move(merged);
      }
    }
    // stem (input gradient not needed)
    g = activate_backward(pop_preact(), g);
    if (stem_->bn) g = bn_unapply(*stem_->bn, std::move(g), put);
    auto cg = conv_backward(pop_in(), g, stem_->p, false);
    if (!stem_->p.bias.empty()) put(std::move(cg.dbias));
    put(std::move(cg.dkernels));
  } else {
    for (auto blk = dnn_blocks_.rbegin(); blk != dnn_blocks_.rend(); ++blk) {
      const bool first = blk + 1 == dnn_blocks_.rend();
      g = activate_backward(pop_preact(), g);
      Tensor<S> shortcut_g;
      if (blk->shortcut) {
        if (blk->proj) {
          Tensor<S> pg = g;
          if (blk->proj->bn) pg = bn_unapply(*blk->proj->bn, std::move(pg), put);
          auto dg = dense_backward(pop_in(), pg, blk->proj->p, !first);
          put(std::move(dg.dbias));
          put(std::move(dg.dweights));
          shortcut_g = std::move(dg.dx);
        } else {
          shortcut_g = g;
        }
      }
      if (blk->dense.bn) g = bn_unapply(*blk->dense.bn, std::move(g), put);
      auto dg = dense_backward(pop_in(), g, blk->dense.p, !first);
      put(std::move(dg.dbias));
      put(std::move(dg.dweights));
      g = std::move(dg.dx);
      if (!shortcut_g.empty() && !g.empty()) {
        Tensor<S> merged(g.shape());
        kern::add(g.data(), shortcut_g.data(), merged.data(), g.size());
        g = std::move(merged);
      }
    }
  }

  if (gi != 0) throw StateError("backward parameter bookkeeping mismatch");
  return grads;
}

template <class S>
void Network<S>::sgd_step(const std::vector<Tensor<S>>& grads, S lr) {
  auto ps = params();
  if (grads.size() != ps.size())
    throw DimensionError("sgd_step gradient count " + std::to_string(grads.size()) +
                         " vs " + std::to_string(ps.size()) + " parameters");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    S* w = ps[i]->data();
    const S* gr = grads[i].data();
    for (std::size_t j = 0; j < ps[i]->size(); ++j) w[j] -= lr * gr[j];
  }
}

} // namespace sndcnn
