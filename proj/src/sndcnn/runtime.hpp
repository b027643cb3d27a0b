#pragma once
// Latency-oriented scoring path: context stacking over filterbank frames,
// frame skipping with hold-last duplication, lazy evaluation of decoder-
// requested output units, and the two-thread front/back pipeline. The lazy
// column kernel shares the fma chain order with the full GEMM, so lazy scores
// equal the corresponding full-output elements bitwise, and the pipeline is
// bit-identical to the single-threaded reference by construction.

#include "graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

namespace sndcnn {

template <class S>
struct FrameStream {
  Tensor<S> frames; // [T x dim]
  int left = 20;
  int right = 20;

  long total() const { return frames.dim(0); }
  int dim() const { return frames.dim(1); }
  int stacked_dim() const { return (left + 1 + right) * frames.dim(1); }
};

// concatenation of frames t-left .. t+right with replicate padding at the
// stream edges
template <class S>
void stack_context_into(const FrameStream<S>& stream, long t, S* out) {
  const long total = stream.total();
  const int dim = stream.dim();
  if (t < 0 || t >= total)
    throw IndexError("frame " + std::to_string(t) + " out of range [0, " +
                     std::to_string(total) + ")");
  for (int k = -stream.left; k <= stream.right; ++k) {
    long src = t + k;
    if (src < 0) src = 0;
    if (src >= total) src = total - 1;
    const S* row = stream.frames.data() + std::size_t(src) * dim;
    std::copy(row, row + dim, out);
    out += dim;
  }
}

template <class S>
Tensor<S> stack_context(const FrameStream<S>& stream, long t) {
  Tensor<S> out({stream.stacked_dim()});
  stack_context_into(stream, t, out.data());
  return out;
}

template <class S>
Tensor<S> stack_context_rows(const FrameStream<S>& stream, const long* ts, int n) {
  Tensor<S> out({n, stream.stacked_dim()});
  for (int i = 0; i < n; ++i)
    stack_context_into(stream, ts[i], out.data() + std::size_t(i) * stream.stacked_dim());
  return out;
}

// ---------------------------------------------------------------------------

struct SkipSchedule {
  int k = 1;
  long total = 0;

  static SkipSchedule make(long total, int k) {
    if (k < 1) throw ConfigError("skip factor must be >= 1");
    if (total < 1) throw ConfigError("frame count must be >= 1");
    return {k, total};
  }
  long computed_count() const { return (total + k - 1) / k; }
  bool is_computed(long t) const { return t % k == 0; }
  long source_of(long t) const { return t / k * k; }
  std::vector<long> computed_frames() const {
    std::vector<long> out;
    out.reserve(std::size_t(computed_count()));
    for (long t = 0; t < total; t += k) out.push_back(t);
    return out;
  }
};

// outputs for frame t duplicate computed frame floor(t/k)*k; length is total
template <class V>
std::vector<V> expand(const SkipSchedule& sched, const std::vector<V>& computed) {
  if (computed.size() != std::size_t(sched.computed_count()))
    throw DimensionError("expand got " + std::to_string(computed.size()) +
                         " computed frames, schedule needs " +
                         std::to_string(sched.computed_count()));
  std::vector<V> out;
  out.reserve(std::size_t(sched.total));
  for (long t = 0; t < sched.total; ++t)
    out.push_back(computed[std::size_t(t / sched.k)]);
  return out;
}

// ---------------------------------------------------------------------------

class ActiveSet {
 public:
  ActiveSet() = default;

  // sorts, deduplicates, bounds-checks
  static ActiveSet from_indices(std::vector<std::uint32_t> idx, int output_dim) {
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    if (!idx.empty() && idx.back() >= std::uint32_t(output_dim))
      throw IndexError("active unit " + std::to_string(idx.back()) +
                       " out of range [0, " + std::to_string(output_dim) + ")");
    ActiveSet s;
    s.idx_ = std::move(idx);
    s.output_dim_ = output_dim;
    return s;
  }

  static ActiveSet all(int output_dim) {
    std::vector<std::uint32_t> idx(static_cast<std::size_t>(output_dim));
    for (int i = 0; i < output_dim; ++i) idx[std::size_t(i)] = std::uint32_t(i);
    return from_indices(std::move(idx), output_dim);
  }

  // seeded draw of round(fraction * output_dim) distinct units
  static ActiveSet fraction(int output_dim, double p, Rng& rng) {
    const long want = std::lround(p * output_dim);
    std::vector<std::uint32_t> pool(static_cast<std::size_t>(output_dim));
    for (int i = 0; i < output_dim; ++i) pool[std::size_t(i)] = std::uint32_t(i);
    for (long i = 0; i < want; ++i) {
      const auto j = i + long(rng.next_below(std::uint64_t(output_dim - i)));
      std::swap(pool[std::size_t(i)], pool[std::size_t(j)]);
    }
    pool.resize(std::size_t(want));
    return from_indices(std::move(pool), output_dim);
  }

  const std::vector<std::uint32_t>& indices() const { return idx_; }
  std::size_t size() const { return idx_.size(); }
  int output_dim() const { return output_dim_; }

 private:
  std::vector<std::uint32_t> idx_;
  int output_dim_ = 0;
};

template <class S>
struct FrameScores {
  long frame = 0;
  std::vector<std::uint32_t> units;
  std::vector<S> values;
};

// score_j = dot(hidden, W[:, j]) + bias_j for each active j, same chain order
// as the full output GEMM; unrequested units are never touched
template <class S>
FrameScores<S> lazy_output(const Tensor<S>& hidden, const DenseParams<S>& out_layer,
                           const ActiveSet& active) {
  if (hidden.size() != std::size_t(out_layer.d_in()))
    throw DimensionError("lazy_output hidden " + shape_str(hidden.shape()) +
                         " vs output layer d_in " + std::to_string(out_layer.d_in()));
  if (!active.indices().empty() &&
      active.indices().back() >= std::uint32_t(out_layer.d_out()))
    throw IndexError("active unit " + std::to_string(active.indices().back()) +
                     " out of range [0, " + std::to_string(out_layer.d_out()) + ")");
  FrameScores<S> out;
  out.units = active.indices();
  out.values.resize(out.units.size());
  if (!out.units.empty())
    kern::dense_cols(out_layer.d_in(), hidden.data(), out_layer.weights.data(),
                     out_layer.d_out(), out_layer.bias.data(), out.units.data(),
                     int(out.units.size()), out.values.data());
  return out;
}

// ---------------------------------------------------------------------------
// two-thread pipeline: a front worker computes hidden vectors for the
// computed frames (in batches), a back worker evaluates the requested output
// units. Hand-off is a bounded FIFO with back-pressure.

using ActiveFn = std::function<ActiveSet(long frame)>;

struct PipelineOptions {
  int queue_capacity = 4;
  int front_batch = 1; // batchnorm models need >= 2 (batch statistics)
};

struct PipelineCounters {
  std::uint64_t hidden_multiplies = 0;
  std::uint64_t output_multiplies = 0;
  long frames_scored = 0; // computed frames (before duplication)
};

namespace runtime_detail {

template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T item) {
    std::unique_lock<std::mutex> lock(m_);
    cv_room_.wait(lock, [&] { return q_.size() < capacity_ || closed_; });
    if (closed_) return;
    q_.push(std::move(item));
    lock.unlock();
    cv_item_.notify_one();
  }

  bool pop(T& item) {
    std::unique_lock<std::mutex> lock(m_);
    cv_item_.wait(lock, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return false;
    item = std::move(q_.front());
    q_.pop();
    lock.unlock();
    cv_room_.notify_one();
    return true;
  }

  void close() {
    {
      std::lock_guard<std::mutex> lock(m_);
      closed_ = true;
    }
    cv_item_.notify_all();
    cv_room_.notify_all();
  }

 private:
  std::mutex m_;
  std::condition_variable cv_item_, cv_room_;
  std::queue<T> q_;
  std::size_t capacity_;
  bool closed_ = false;
};

} // namespace runtime_detail

template <class S>
struct PipelineResult {
  std::vector<FrameScores<S>> frames; // length = schedule.total, expanded
  PipelineCounters counters;
};

template <class S>
PipelineResult<S> run_scoring(Network<S>& net, const FrameStream<S>& stream,
                              const SkipSchedule& sched, const ActiveFn& active_fn,
                              const PipelineOptions& opt, bool threaded) {
  if (stream.stacked_dim() != net.config().input_dim)
    throw DimensionError("stream stacked dim " + std::to_string(stream.stacked_dim()) +
                         " vs model input_dim " +
                         std::to_string(net.config().input_dim));
  if (opt.front_batch < 1 || opt.queue_capacity < 1)
    throw ConfigError("pipeline needs front_batch >= 1 and queue_capacity >= 1");
  if (net.census().bn_nodes > 0 && opt.front_batch < 2)
    throw ConfigError("batchnorm model needs front_batch >= 2 for batch statistics");

  const std::vector<long> computed = sched.computed_frames();
  const std::size_t n = computed.size();
  std::vector<FrameScores<S>> results(n);

  PipelineCounters counters;
  counters.frames_scored = long(n);
  const std::uint64_t mult_before = kern::multiplies();
  std::atomic<std::uint64_t> output_mults{0};

  struct Item {
    std::size_t ci = 0;
    Tensor<S> hidden;
  };

  auto front_produce = [&](const std::function<void(Item)>& sink, long* cur_frame) {
    for (std::size_t i0 = 0; i0 < n; i0 += std::size_t(opt.front_batch)) {
      if (cur_frame) *cur_frame = computed[i0];
      const int bs = int(std::min<std::size_t>(std::size_t(opt.front_batch), n - i0));
      Tensor<S> stacked = stack_context_rows(stream, computed.data() + i0, bs);
      Tensor<S> hidden = net.hidden_forward(stacked);
      const int hd = hidden.dim(1);
      for (int r = 0; r < bs; ++r) {
        Tensor<S> row({hd});
        std::copy(hidden.data() + std::size_t(r) * hd,
                  hidden.data() + std::size_t(r + 1) * hd, row.data());
        sink(Item{i0 + std::size_t(r), std::move(row)});
      }
    }
  };
  auto back_consume = [&](Item item) {
    const long frame = computed[item.ci];
    const ActiveSet active = active_fn(frame);
    const std::uint64_t before = kern::multiplies();
    FrameScores<S> fs = lazy_output(item.hidden, net.output_layer(), active);
    output_mults.fetch_add(kern::multiplies() - before, std::memory_order_relaxed);
    fs.frame = frame;
    results[item.ci] = std::move(fs);
  };

  if (!threaded) {
    front_produce(back_consume, nullptr);
  } else {
    runtime_detail::BoundedQueue<Item> queue(std::size_t(opt.queue_capacity));
    std::exception_ptr front_err, back_err;
    long front_frame = -1;
    std::atomic<long> back_frame{-1};

    std::thread back([&] {
      Item item;
      long cur = -1;
      try {
        while (queue.pop(item)) {
          cur = computed[item.ci];
          back_consume(std::move(item));
        }
      } catch (...) {
        back_err = std::current_exception();
        back_frame.store(cur);
        queue.close();
      }
    });
    try {
      front_produce([&](Item item) { queue.push(std::move(item)); }, &front_frame);
    } catch (...) {
      front_err = std::current_exception();
    }
    queue.close();
    back.join();

    auto rethrow = [](std::exception_ptr err, const char* who, long frame) {
      if (!err) return;
      try {
        std::rethrow_exception(err);
      } catch (const std::exception& e) {
        throw PipelineError(std::string(who) + " worker failed at frame " +
                            std::to_string(frame) + ": " + e.what());
      }
    };
    rethrow(back_err, "back", back_frame.load());
    rethrow(front_err, "front", front_frame);
  }

  counters.output_multiplies = output_mults.load();
  counters.hidden_multiplies =
      kern::multiplies() - mult_before - counters.output_multiplies;

  PipelineResult<S> out;
  out.counters = counters;
  out.frames = expand(sched, results);
  for (long t = 0; t < sched.total; ++t) out.frames[std::size_t(t)].frame = t;
  return out;
}

// Fig. 6 arrangement: front thread feeds the bounded FIFO, back thread scores
// requested units
template <class S>
PipelineResult<S> pipeline_run(Network<S>& net, const FrameStream<S>& stream,
                               const SkipSchedule& sched, const ActiveFn& active_fn,
                               const PipelineOptions& opt = {}) {
  return run_scoring(net, stream, sched, active_fn, opt, true);
}

// single-threaded replay of the identical computation
template <class S>
PipelineResult<S> reference_run(Network<S>& net, const FrameStream<S>& stream,
                                const SkipSchedule& sched, const ActiveFn& active_fn,
                                const PipelineOptions& opt = {}) {
  return run_scoring(net, stream, sched, active_fn, opt, false);
}

} // namespace sndcnn
