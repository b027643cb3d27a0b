#pragma once
// Training driver shared by the CLI and the test suites: seeded batch
// sampling over a context-stacked frame stream, SGD with the Newbob schedule,
// per-layer statistics capture, and divergence detection.

#include "runtime.hpp"
#include "synth.hpp"

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

namespace sndcnn {

struct TrainSettings {
  double lr = 0.02;
  int batch = 256;
  long max_steps = 2000;
  int eval_every = 100;
  int eval_frames = 2048;
  bool newbob = true;
  double newbob_threshold = 0.005;
  int stats_cadence = 10;
  bool stats_pre_activation = false;
};

enum class TrainStatus { completed, stopped_early, diverged };

inline const char* train_status_name(TrainStatus s) {
  switch (s) {
    case TrainStatus::completed: return "completed";
    case TrainStatus::stopped_early: return "stopped_early";
    default: return "diverged";
  }
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  TrainStatus status = TrainStatus::completed;
  long steps_run = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double final_lr = 0.0;
  std::vector<double> losses;              // per executed step
  std::vector<double> layer_grad_inf_norm; // index = weight layer - 1, at step 0
  std::vector<LayerStats> stats;
  EvalResult dev;
};

template <class S>
Tensor<S> stack_batch(const FrameStream<S>& stream, const std::vector<long>& idx) {
  return stack_context_rows(stream, idx.data(), int(idx.size()));
}

template <class S>
std::vector<long> sample_indices(Rng& rng, long begin, long end, int n) {
  std::vector<long> idx(static_cast<std::size_t>(n));
  for (auto& v : idx) v = begin + long(rng.next_below(std::uint64_t(end - begin)));
  return idx;
}

template <class S>
EvalResult evaluate(Network<S>& net, const SyntheticData<S>& data,
                    const FrameStream<S>& stream, long begin, long end, int max_frames) {
  const long count = std::min<long>(end - begin, max_frames);
  std::vector<long> idx(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) idx[std::size_t(i)] = begin + i;
  Tensor<S> x = stack_batch(stream, idx);
  std::vector<int> labels(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) labels[std::size_t(i)] = data.labels[std::size_t(idx[std::size_t(i)])];
  Tensor<S> logits = net.forward(x, RunMode::infer);
  auto xe = softmax_xent(logits, labels);
  long hits = 0;
  const int n = logits.dim(1);
  for (long i = 0; i < count; ++i) {
    const S* row = logits.data() + std::size_t(i) * n;
    int best = 0;
    for (int j = 1; j < n; ++j)
      if (row[j] > row[best]) best = j;
    if (best == labels[std::size_t(i)]) ++hits;
  }
  return {double(xe.loss), double(hits) / double(count)};
}

// per-weight-layer infinity norm over every parameter gradient of that layer
template <class S>
std::vector<double> layer_grad_norms(const Network<S>& net,
                                     const std::vector<Tensor<S>>& grads) {
  const auto names = net.param_names();
  std::vector<double> norms(std::size_t(net.config().depth), 0.0);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto dot = names[i].find('.');
    const int layer = std::stoi(names[i].substr(1, dot - 1));
    double mx = norms[std::size_t(layer - 1)];
    for (std::size_t j = 0; j < grads[i].size(); ++j)
      mx = std::max(mx, std::abs(double(grads[i].data()[j])));
    norms[std::size_t(layer - 1)] = mx;
  }
  return norms;
}

template <class S>
TrainResult train_model(Network<S>& net, const SyntheticData<S>& data,
                        const DataSplit& split, const TrainSettings& ts,
                        std::uint64_t seed, std::ostream* log = nullptr) {
  if (ts.batch < 1 || ts.max_steps < 0) throw ConfigError("bad training settings");
  FrameStream<S> stream{data.features};
  if (stream.stacked_dim() != net.config().input_dim)
    throw ConfigError("stacked dim " + std::to_string(stream.stacked_dim()) +
                      " vs model input_dim " + std::to_string(net.config().input_dim));

  TrainResult out;
  StatsRecorder recorder(ts.stats_cadence, ts.stats_pre_activation);
  NewbobSchedule newbob(ts.newbob_threshold);
  Rng rng(seed);
  double lr = ts.lr;

  for (long step = 0; step < ts.max_steps; ++step) {
    const auto idx =
        sample_indices<S>(rng, split.train_begin, split.train_end, ts.batch);
    Tensor<S> x = stack_batch(stream, idx);
    std::vector<int> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      labels[i] = data.labels[std::size_t(idx[i])];

    Tensor<S> logits = net.forward(x, RunMode::train, &recorder, step);
    auto xe = softmax_xent(logits, labels);
    const double loss = double(xe.loss);
    out.losses.push_back(loss);
    if (step == 0) out.initial_loss = loss;
    if (log) (*log) << "step " << step << " loss " << loss << " lr " << lr << "\n";

    if (!std::isfinite(loss)) {
      out.status = TrainStatus::diverged;
      out.steps_run = step + 1;
      out.final_loss = loss;
      out.final_lr = lr;
      out.stats = recorder.records();
      if (log) (*log) << "status: diverged\n";
      return out;
    }

    auto grads = net.backward(xe.grad_logits);
    if (step == 0) {
      out.layer_grad_inf_norm = layer_grad_norms(net, grads);
      if (log)
        for (std::size_t l = 0; l < out.layer_grad_inf_norm.size(); ++l)
          (*log) << "grad_inf_norm L" << (l + 1) << " " << out.layer_grad_inf_norm[l]
                 << "\n";
    }
    net.sgd_step(grads, S(lr));
    out.steps_run = step + 1;
    out.final_loss = loss;

    if (ts.newbob && ts.eval_every > 0 && (step + 1) % ts.eval_every == 0) {
      const EvalResult dev =
          evaluate(net, data, stream, split.dev_begin, split.dev_end, ts.eval_frames);
      const auto decision = newbob.step(dev.loss, lr);
      if (log)
        (*log) << "eval step " << step << " dev_loss " << dev.loss << " dev_acc "
               << dev.accuracy << " lr " << decision.lr
               << (decision.stop ? " stop" : "") << "\n";
      lr = decision.lr;
      if (decision.stop) {
        out.status = TrainStatus::stopped_early;
        break;
      }
    }
  }

  out.final_lr = lr;
  out.stats = recorder.records();
  out.dev = evaluate(net, data, stream, split.dev_begin, split.dev_end, ts.eval_frames);
  if (log)
    (*log) << "status: " << train_status_name(out.status) << "\nfinal_dev_loss "
           << out.dev.loss << "\nfinal_dev_acc " << out.dev.accuracy << "\n";
  return out;
}

} // namespace sndcnn
