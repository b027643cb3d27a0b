#pragma once
// Per-layer activation statistics in the measurement protocol of the
// self-normalization study: per-unit mean and population variance across the
// mini-batch, then an unweighted average over all units of the layer.

#include "ops.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <vector>

namespace sndcnn {

struct LayerStats {
  int layer = 0;  // 1-based weight-layer index
  long step = 0;  // training mini-batch index
  double mean = 0.0;
  double variance = 0.0;
};

// activations [batch x units]; conv maps arrive flattened as c*h*w units
template <class S>
LayerStats layer_stats(int layer_index, long step, const Tensor<S>& acts) {
  if (acts.ndim() != 2)
    throw DimensionError("layer_stats expects [batch x units], got " +
                         shape_str(acts.shape()));
  const int b = acts.dim(0), units = acts.dim(1);
  if (b < 2)
    throw BatchError("layer_stats needs batch >= 2, got " + std::to_string(b));
  std::vector<S> mean(units), var(units);
  kern::col_mean_var(acts.data(), b, units, mean.data(), var.data());
  double msum = 0.0, vsum = 0.0;
  for (int j = 0; j < units; ++j) {
    msum += double(mean[j]);
    vsum += double(var[j]);
  }
  return {layer_index, step, msum / units, vsum / units};
}

class StatsRecorder {
 public:
  // record post-activation outputs by default; pre-activation behind a flag
  explicit StatsRecorder(int cadence = 10, bool pre_activation = false)
      : cadence_(cadence), pre_activation_(pre_activation) {}

  bool wants(long step) const { return cadence_ > 0 && step % cadence_ == 0; }
  bool pre_activation() const { return pre_activation_; }

  template <class S>
  LayerStats record(int layer_index, long step, const Tensor<S>& acts) {
    Tensor<S> flat = acts;
    if (flat.ndim() > 2) {
      int units = 1;
      for (int i = 1; i < flat.ndim(); ++i) units *= flat.dim(i);
      flat.reshape({flat.dim(0), units});
    }
    LayerStats s = layer_stats(layer_index, step, flat);
    records_.push_back(s);
    return s;
  }

  const std::vector<LayerStats>& records() const { return records_; }
  void clear() { records_.clear(); }

 private:
  int cadence_;
  bool pre_activation_;
  std::vector<LayerStats> records_;
};

// header + one row per record, sorted by (step, layer), >= 9 significant digits
inline void export_csv(std::vector<LayerStats> records, std::ostream& out) {
  std::sort(records.begin(), records.end(), [](const LayerStats& a, const LayerStats& b) {
    return a.step != b.step ? a.step < b.step : a.layer < b.layer;
  });
  out << "step,layer,mean,variance\n";
  char buf[96];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%ld,%d,%.12g,%.12g\n", r.step, r.layer, r.mean,
                  r.variance);
    out << buf;
    if (!out) throw IoError("stats csv write failed");
  }
}

struct LayerBoundReport {
  int layer = 0;
  bool pass = false;
  double worst_abs_mean = 0.0;
  double worst_variance = 0.0;
};

// per-layer |mean| < mean_bound and variance < var_bound over every step in
// [layer_lo, layer_hi]
inline std::vector<LayerBoundReport> check_bounds(const std::vector<LayerStats>& records,
                                                  int layer_lo, int layer_hi,
                                                  double mean_bound, double var_bound) {
  if (!(mean_bound > 0.0) || !(var_bound > 0.0))
    throw ConfigError("check_bounds requires positive bounds");
  std::vector<LayerBoundReport> out;
  for (int layer = layer_lo; layer <= layer_hi; ++layer) {
    LayerBoundReport r;
    r.layer = layer;
    bool seen = false;
    for (const auto& rec : records) {
      if (rec.layer != layer) continue;
      seen = true;
      r.worst_abs_mean = std::max(r.worst_abs_mean, std::abs(rec.mean));
      r.worst_variance = std::max(r.worst_variance, rec.variance);
    }
    if (!seen) continue;
    r.pass = r.worst_abs_mean < mean_bound && r.worst_variance < var_bound;
    out.push_back(r);
  }
  if (out.empty())
    throw EmptyReportError("check_bounds: no records in layer range [" +
                           std::to_string(layer_lo) + ", " + std::to_string(layer_hi) +
                           "]");
  return out;
}

} // namespace sndcnn
