#pragma once
// The benchmark workload: the four-topology grid (training and inference
// metrics, relative to the standard ResNet-50 row) plus the frame-skipping
// and lazy-output comparisons on SNDCNN-50. Used by both the CLI bench
// command and the acceptance suite so the measured workload is identical.

#include "bench.hpp"
#include "train.hpp"

namespace sndcnn {

struct BenchSettings {
  int reps = 10;
  int warmup = 3;
  int batch = 64;           // training batch and pipeline front batch
  long frames = 240;        // inference stream length (divisible by skip)
  int skip = 3;
  double active_fraction = 0.05;
  int queue_capacity = 4;
  int output_dim = 10000;
  std::vector<int> widths = {16, 32, 64, 128};
  std::uint64_t seed = 1;
};

struct BenchOutcome {
  std::vector<BenchRow> rows;
  // named metrics for the acceptance gate
  double resnet_infer_fps = 0, sndcnn_infer_fps = 0;
  std::uint64_t resnet_census_total = 0, sndcnn_census_total = 0;
  std::uint64_t resnet_census_gemm = 0, sndcnn_census_gemm = 0;
  std::uint64_t skip1_hidden_mults = 0, skip3_hidden_mults = 0;
  long skip3_frames_scored = 0;
  double skip1_seconds = 0, skip3_seconds = 0;
  std::uint64_t lazy_full_output_mults = 0, lazy_frac_output_mults = 0;
  double lazy_full_seconds = 0, lazy_frac_seconds = 0;
};

inline ModelConfig bench_model_config(const BenchSettings& bs, Activation act,
                                      bool shortcut, bool batchnorm) {
  ModelConfig cfg;
  cfg.stack = StackKind::cnn_bottleneck;
  cfg.depth = 50;
  cfg.widths = bs.widths;
  cfg.activation = act;
  cfg.shortcut = shortcut;
  cfg.batchnorm = batchnorm;
  cfg.input_dim = 1640;
  cfg.output_dim = bs.output_dim;
  return cfg;
}

template <class S>
BenchOutcome run_bench_suite(const BenchSettings& bs, std::ostream* progress = nullptr) {
  BenchOutcome out;
  struct GridEntry {
    const char* label;
    Activation act;
    bool sc, bn;
  };
  const GridEntry grid[4] = {
      {"ResNet-50", Activation::relu, true, true},
      {"ResNet-50-w/o-SC-w/-BN", Activation::relu, false, true},
      {"ResNet-50-w/-SC-w/o-BN", Activation::relu, true, false},
      {"SNDCNN-50", Activation::selu, false, false},
  };

  SynthSpec spec;
  spec.frames = std::max<long>(bs.frames, 8192);
  const auto data = gen_synthetic<S>(bs.seed, spec);
  FrameStream<S> stream{data.features};

  Tensor<S> bench_stream_frames({int(bs.frames), data.features.dim(1)});
  std::copy(data.features.data(),
            data.features.data() + bench_stream_frames.size(),
            bench_stream_frames.data());
  FrameStream<S> infer_stream{std::move(bench_stream_frames)};

  double train_baseline_ms = 0, infer_baseline_fps = 0;

  for (const auto& entry : grid) {
    const ModelConfig cfg = bench_model_config(bs, entry.act, entry.sc, entry.bn);
    Network<S> net(cfg, bs.seed);
    const MultiplyCensus census = census_multiplies(cfg, bs.batch);

    // training: forward + backward + update on a fixed stacked batch;
    // lr 0 keeps the parameters bit-stable across repetitions
    Rng rng(bs.seed + 17);
    const auto idx = sample_indices<S>(rng, 0, spec.frames, bs.batch);
    Tensor<S> x = stack_batch(stream, idx);
    std::vector<int> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      labels[i] = data.labels[std::size_t(idx[i])];
    const std::uint64_t m0 = kern::multiplies();
    auto train_iter = [&] {
      Tensor<S> logits = net.forward(x, RunMode::train);
      auto xe = softmax_xent(logits, labels);
      auto grads = net.backward(xe.grad_logits);
      net.sgd_step(grads, S(0));
    };
    train_iter();
    const std::uint64_t train_mults = kern::multiplies() - m0;
    const double train_sec = median_seconds(train_iter, bs.reps, bs.warmup);
    if (progress)
      (*progress) << entry.label << " training " << train_sec * 1e3 << " ms/batch\n";

    // inference: the two-thread pipeline, skip 1, all outputs requested
    const SkipSchedule sched1 = SkipSchedule::make(bs.frames, 1);
    const ActiveSet all_units = ActiveSet::all(cfg.output_dim);
    PipelineOptions popt{bs.queue_capacity, bs.batch};
    PipelineCounters last_counters;
    auto infer_iter = [&] {
      auto r = pipeline_run(net, infer_stream, sched1, [&](long) { return all_units; },
                            popt);
      last_counters = r.counters;
    };
    const double infer_sec = median_seconds(infer_iter, bs.reps, bs.warmup);
    const double fps = double(bs.frames) / infer_sec;
    if (progress) (*progress) << entry.label << " inference " << fps << " fps\n";

    const bool is_baseline = std::string(entry.label) == "ResNet-50";
    if (is_baseline) {
      train_baseline_ms = train_sec * 1e3;
      infer_baseline_fps = fps;
      out.resnet_infer_fps = fps;
      out.resnet_census_total = census.total();
      out.resnet_census_gemm = census.gemm;
    }
    if (std::string(entry.label) == "SNDCNN-50") {
      out.sndcnn_infer_fps = fps;
      out.sndcnn_census_total = census.total();
      out.sndcnn_census_gemm = census.gemm;
      out.skip1_hidden_mults = last_counters.hidden_multiplies;
      out.lazy_full_output_mults = last_counters.output_multiplies;
      out.skip1_seconds = infer_sec;
      out.lazy_full_seconds = infer_sec;
    }

    BenchRow train_row;
    train_row.label = std::string(entry.label) + "-training";
    train_row.ms_per_batch = train_sec * 1e3;
    train_row.fps = double(bs.batch) / train_sec;
    train_row.multiplies = train_mults;
    train_row.speedup_pct_vs_baseline =
        is_baseline ? 0.0 : (train_baseline_ms / (train_sec * 1e3) - 1.0) * 100.0;
    out.rows.push_back(train_row);

    BenchRow infer_row;
    infer_row.label = std::string(entry.label) + "-inference";
    infer_row.ms_per_batch = infer_sec * 1e3;
    infer_row.fps = fps;
    infer_row.multiplies = last_counters.hidden_multiplies + last_counters.output_multiplies;
    infer_row.speedup_pct_vs_baseline =
        is_baseline ? 0.0 : (fps / infer_baseline_fps - 1.0) * 100.0;
    out.rows.push_back(infer_row);
  }

  // frame skipping and lazy evaluation on SNDCNN-50
  {
    const ModelConfig cfg = bench_model_config(bs, Activation::selu, false, false);
    Network<S> net(cfg, bs.seed);
    PipelineOptions popt{bs.queue_capacity, bs.batch};
    const ActiveSet all_units = ActiveSet::all(cfg.output_dim);

    const SkipSchedule sched_k = SkipSchedule::make(bs.frames, bs.skip);
    PipelineCounters skip_counters;
    auto skip_iter = [&] {
      auto r = pipeline_run(net, infer_stream, sched_k, [&](long) { return all_units; },
                            popt);
      skip_counters = r.counters;
      out.skip3_frames_scored = r.counters.frames_scored;
    };
    out.skip3_seconds = median_seconds(skip_iter, bs.reps, bs.warmup);
    out.skip3_hidden_mults = skip_counters.hidden_multiplies;
    BenchRow row;
    row.label = "SNDCNN-50-inference-skip" + std::to_string(bs.skip);
    row.ms_per_batch = out.skip3_seconds * 1e3;
    row.fps = double(bs.frames) / out.skip3_seconds;
    row.multiplies = skip_counters.hidden_multiplies + skip_counters.output_multiplies;
    row.speedup_pct_vs_baseline = (out.skip1_seconds / out.skip3_seconds - 1.0) * 100.0;
    out.rows.push_back(row);
    if (progress) (*progress) << row.label << " " << row.fps << " fps\n";

    // lazy: seeded per-frame active sets at the configured fraction
    const SkipSchedule sched1 = SkipSchedule::make(bs.frames, 1);
    std::vector<ActiveSet> frame_sets(std::size_t(bs.frames));
    for (long t = 0; t < bs.frames; ++t) {
      Rng arng(bs.seed * 1000003 + std::uint64_t(t));
      frame_sets[std::size_t(t)] =
          ActiveSet::fraction(cfg.output_dim, bs.active_fraction, arng);
    }
    PipelineCounters lazy_counters;
    auto lazy_iter = [&] {
      auto r = pipeline_run(
          net, infer_stream, sched1,
          [&](long t) { return frame_sets[std::size_t(t)]; }, popt);
      lazy_counters = r.counters;
    };
    out.lazy_frac_seconds = median_seconds(lazy_iter, bs.reps, bs.warmup);
    out.lazy_frac_output_mults = lazy_counters.output_multiplies;
    BenchRow lrow;
    lrow.label = "SNDCNN-50-inference-lazy" +
                 std::to_string(int(bs.active_fraction * 100)) + "pct";
    lrow.ms_per_batch = out.lazy_frac_seconds * 1e3;
    lrow.fps = double(bs.frames) / out.lazy_frac_seconds;
    lrow.multiplies = lazy_counters.hidden_multiplies + lazy_counters.output_multiplies;
    lrow.speedup_pct_vs_baseline =
        (out.lazy_full_seconds / out.lazy_frac_seconds - 1.0) * 100.0;
    out.rows.push_back(lrow);
    if (progress) (*progress) << lrow.label << " " << lrow.fps << " fps\n";
  }

  return out;
}

} // namespace sndcnn
