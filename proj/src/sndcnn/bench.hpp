#pragma once
// Multiply accounting and timing for the speedup comparisons. The static
// census walks the model geometry analytically (machine-independent exact
// counts); the runtime counters in kern must agree with the gemm part.
//
// Census convention: gemm counts one multiply per fma in conv/dense layers
// (projections included); bn counts 3 multiplies per normalized element
// ((x-mu)^2, (x-mu)*inv, gamma*xhat) plus 2 per dimension for the inverse
// std. Activations and shortcut adds contribute no multiplies.

#include "graph.hpp"

#include <chrono>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace sndcnn {

struct MultiplyCensus {
  std::uint64_t gemm = 0;
  std::uint64_t bn = 0;
  std::uint64_t total() const { return gemm + bn; }
};

inline MultiplyCensus census_multiplies(const ModelConfig& cfg, int batch) {
  cfg.validate();
  MultiplyCensus c;
  const auto B = std::uint64_t(batch);
  auto conv_mults = [&](int c_out, int c_in, int kh, int kw, int h_out, int w_out) {
    return B * std::uint64_t(c_out) * h_out * w_out * std::uint64_t(c_in) * kh * kw;
  };
  auto bn_mults = [&](int d) { return B * std::uint64_t(d) * 3 + std::uint64_t(d) * 2; };

  if (cfg.stack == StackKind::dnn) {
    int prev = cfg.input_dim;
    for (int l = 0; l < cfg.depth - 1; ++l) {
      const int w = cfg.widths.size() == 1 ? cfg.widths[0]
                                           : cfg.widths[static_cast<std::size_t>(l)];
      c.gemm += B * std::uint64_t(prev) * w;
      if (cfg.batchnorm) c.bn += bn_mults(w);
      if (cfg.shortcut && prev != w) {
        c.gemm += B * std::uint64_t(prev) * w; // projection
        if (cfg.batchnorm) c.bn += bn_mults(w);
      }
      prev = w;
    }
    c.gemm += B * std::uint64_t(prev) * cfg.output_dim;
    return c;
  }

  // cnn: mirror the construction geometry
  const auto plan = graph_detail::plan_stages(cfg.depth - 2);
  const int down_kh[4] = {0, 3, 2, 2};
  const int down_kw[4] = {0, 2, 2, 2};
  int ch = cfg.widths[0];
  int h = cfg.input_h, w = cfg.input_w;
  c.gemm += conv_mults(ch, 1, 3, 3, h, w); // stem
  if (cfg.batchnorm) c.bn += bn_mults(ch * h * w);

  for (int s = 0; s < 4; ++s) {
    const int mid = cfg.widths[static_cast<std::size_t>(s)];
    const int out = 4 * mid;
    const int blocks_here = plan.full_blocks[s] + (plan.partial_stage == s ? 1 : 0);
    for (int b = 0; b < blocks_here; ++b) {
      const bool partial = plan.partial_stage == s && b == plan.full_blocks[s];
      const bool strided = b == 0 && s > 0;
      const int nconvs = partial ? plan.partial_convs : 3;
      const int ch_in = ch;
      const int h_in = h, w_in = w;

      c.gemm += conv_mults(mid, ch_in, 1, 1, h, w);
      if (cfg.batchnorm) c.bn += bn_mults(mid * h * w);
      if (nconvs >= 2) {
        if (strided) {
          const int nh = (h - down_kh[s]) / 2 + 1;
          const int nw = (w - down_kw[s]) / 2 + 1;
          c.gemm += conv_mults(mid, mid, down_kh[s], down_kw[s], nh, nw);
          h = nh;
          w = nw;
        } else {
          c.gemm += conv_mults(mid, mid, 3, 3, h, w);
        }
        if (cfg.batchnorm) c.bn += bn_mults(mid * h * w);
      }
      if (nconvs >= 3) {
        c.gemm += conv_mults(out, mid, 1, 1, h, w);
        if (cfg.batchnorm) c.bn += bn_mults(out * h * w);
      }
      if (cfg.shortcut && nconvs == 3 && (ch_in != out || strided)) {
        if (strided)
          c.gemm += conv_mults(out, ch_in, down_kh[s], down_kw[s], h, w);
        else
          c.gemm += conv_mults(out, ch_in, 1, 1, h_in, w_in);
        if (cfg.batchnorm) c.bn += bn_mults(out * h * w);
      }
      ch = nconvs >= 3 ? out : mid;
    }
  }
  c.gemm += B * std::uint64_t(ch) * cfg.output_dim; // head
  return c;
}

// median wall-clock seconds over reps after warmup
template <class F>
double median_seconds(F&& fn, int reps, int warmup) {
  if (reps < 1) throw ConfigError("bench needs reps >= 1");
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> times;
  times.reserve(std::size_t(reps));
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    times.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(times.begin(), times.end());
  const double med = times[times.size() / 2];
  if (med < 1e-4)
    throw BenchmarkError("workload too small for the timer (median " +
                         std::to_string(med * 1e6) + " us); increase the batch or frames");
  return med;
}

struct BenchRow {
  std::string label;
  double fps = 0.0;
  double ms_per_batch = 0.0;
  std::uint64_t multiplies = 0;
  double speedup_pct_vs_baseline = 0.0;
};

inline void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out) {
  out << "label,fps,ms_per_batch,multiplies,speedup_pct_vs_baseline\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.6g,%.6g,%llu,%.2f\n", r.label.c_str(), r.fps,
                  r.ms_per_batch, static_cast<unsigned long long>(r.multiplies),
                  r.speedup_pct_vs_baseline);
    out << buf;
  }
  if (!out) throw IoError("bench csv write failed");
}

} // namespace sndcnn
