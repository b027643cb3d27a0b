#pragma once
// Synthetic acoustic-frame generator: class-conditional Gaussian frames over
// smoothed (piecewise-constant) class segments, standardized to zero mean and
// unit variance per dimension. One seed fixes the class means, the segment
// sequence, and the noise, so train/dev/test splits of the same sequence
// share the class geometry.

#include "rng.hpp"
#include "tensor.hpp"

#include <cmath>
#include <vector>

namespace sndcnn {

struct SynthSpec {
  long frames = 100000;
  int num_classes = 16;
  int dim = 40;
  double separation = 1.0; // scale of the class-mean draws
  int seg_min = 30;        // segment length bounds in frames
  int seg_max = 90;
};

template <class S>
struct SyntheticData {
  Tensor<S> features; // [T x dim], standardized
  std::vector<int> labels;
  int num_classes = 0;
};

template <class S>
SyntheticData<S> gen_synthetic(std::uint64_t seed, const SynthSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("gen_synthetic needs num_classes >= 2");
  if (spec.frames < 1) throw ConfigError("gen_synthetic needs frames >= 1");
  if (spec.seg_min < 1 || spec.seg_max < spec.seg_min)
    throw ConfigError("gen_synthetic segment bounds invalid");

  Rng rng(seed);
  const long T = spec.frames;
  const int dim = spec.dim, K = spec.num_classes;

  std::vector<double> means(std::size_t(K) * dim);
  for (auto& m : means) m = rng.next_normal() * spec.separation;

  SyntheticData<S> out;
  out.num_classes = K;
  out.labels.resize(std::size_t(T));
  std::vector<double> feats(std::size_t(T) * dim);

  long t = 0;
  while (t < T) {
    const int c = int(rng.next_below(std::uint64_t(K)));
    long len = spec.seg_min + long(rng.next_below(std::uint64_t(spec.seg_max - spec.seg_min + 1)));
    if (len > T - t) len = T - t;
    for (long i = 0; i < len; ++i) {
      out.labels[std::size_t(t + i)] = c;
      double* row = feats.data() + std::size_t(t + i) * dim;
      const double* mu = means.data() + std::size_t(c) * dim;
      for (int j = 0; j < dim; ++j) row[j] = mu[j] + rng.next_normal();
    }
    t += len;
  }

  // standardize per dimension (population statistics)
  for (int j = 0; j < dim; ++j) {
    double sum = 0.0;
    for (long i = 0; i < T; ++i) sum += feats[std::size_t(i) * dim + j];
    const double mean = sum / double(T);
    double sq = 0.0;
    for (long i = 0; i < T; ++i) {
      const double d = feats[std::size_t(i) * dim + j] - mean;
      sq += d * d;
    }
    const double inv = 1.0 / std::sqrt(sq / double(T));
    for (long i = 0; i < T; ++i) {
      double& v = feats[std::size_t(i) * dim + j];
      v = (v - mean) * inv;
    }
  }

  out.features = Tensor<S>({int(T), dim});
  for (std::size_t i = 0; i < feats.size(); ++i)
    out.features.data()[i] = S(feats[i]);
  return out;
}

// contiguous frame ranges of one generated sequence with guard gaps, so
// held-out frames share the class geometry without label leakage
struct DataSplit {
  long train_begin = 0, train_end = 0;
  long dev_begin = 0, dev_end = 0;
  long test_begin = 0, test_end = 0;
};

inline DataSplit make_split(long total, int guard = 50) {
  if (total < 10 * guard) guard = int(total / 10);
  DataSplit s;
  s.train_begin = 0;
  s.train_end = total * 8 / 10;
  s.dev_begin = s.train_end + guard;
  s.dev_end = total * 9 / 10;
  s.test_begin = s.dev_end + guard;
  s.test_end = total;
  if (s.dev_end <= s.dev_begin || s.test_end <= s.test_begin)
    throw ConfigError("dataset too small to split: " + std::to_string(total));
  return s;
}

} // namespace sndcnn
