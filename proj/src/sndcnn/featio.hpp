#pragma once
// On-disk formats, all little-endian:
//   features:  "FBNK" | u32 T | u32 dim (= 40) | T*dim f32, row-major
//   labels:    "LBLU" | u32 T | u32 num_classes | T u32
//   score dump: per frame: u32 frame | u32 count | count x (u32 unit, f32 score)

#include "runtime.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace sndcnn {

static_assert(std::endian::native == std::endian::little,
              "file io assumes a little-endian host");

constexpr int kFilterbankDim = 40;

namespace featio_detail {

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError(std::string("truncated ") + what);
  return v;
}

} // namespace featio_detail

template <class S>
void write_features(const Tensor<S>& frames, const std::string& path) {
  if (frames.ndim() != 2 || frames.dim(1) != kFilterbankDim)
    throw FormatError("feature file needs [T x 40] frames, got " +
                      shape_str(frames.shape()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open feature file for writing: " + path);
  out.write("FBNK", 4);
  featio_detail::put<std::uint32_t>(out, std::uint32_t(frames.dim(0)));
  featio_detail::put<std::uint32_t>(out, std::uint32_t(frames.dim(1)));
  std::vector<float> row(std::size_t(frames.dim(1)));
  for (int t = 0; t < frames.dim(0); ++t) {
    const S* src = frames.data() + std::size_t(t) * frames.dim(1);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = float(src[j]);
    out.write(reinterpret_cast<const char*>(row.data()),
              std::streamsize(row.size() * sizeof(float)));
  }
  if (!out) throw IoError("feature write failed: " + path);
}

template <class S>
Tensor<S> read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "FBNK", 4) != 0)
    throw FormatError("not a feature file (bad magic): " + path);
  const auto t = featio_detail::get<std::uint32_t>(in, "feature header");
  const auto dim = featio_detail::get<std::uint32_t>(in, "feature header");
  if (dim != kFilterbankDim)
    throw FormatError("feature file dim " + std::to_string(dim) + " != " +
                      std::to_string(kFilterbankDim) + ": " + path);
  if (t < 1) throw FormatError("feature file has no frames: " + path);
  std::vector<float> buf(std::size_t(t) * dim);
  in.read(reinterpret_cast<char*>(buf.data()),
          std::streamsize(buf.size() * sizeof(float)));
  if (!in) throw FormatError("feature file truncated: " + path);
  Tensor<S> frames({int(t), int(dim)});
  for (std::size_t i = 0; i < buf.size(); ++i) frames.data()[i] = S(buf[i]);
  return frames;
}

inline void write_labels(const std::vector<int>& labels, int num_classes,
                         const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open label file for writing: " + path);
  out.write("LBLU", 4);
  featio_detail::put<std::uint32_t>(out, std::uint32_t(labels.size()));
  featio_detail::put<std::uint32_t>(out, std::uint32_t(num_classes));
  for (int v : labels) featio_detail::put<std::uint32_t>(out, std::uint32_t(v));
  if (!out) throw IoError("label write failed: " + path);
}

struct LabelFile {
  std::vector<int> labels;
  int num_classes = 0;
};

inline LabelFile read_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open label file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "LBLU", 4) != 0)
    throw FormatError("not a label file (bad magic): " + path);
  LabelFile out;
  const auto t = featio_detail::get<std::uint32_t>(in, "label header");
  out.num_classes = int(featio_detail::get<std::uint32_t>(in, "label header"));
  out.labels.resize(t);
  for (auto& v : out.labels)
    v = int(featio_detail::get<std::uint32_t>(in, "label data"));
  return out;
}

template <class S>
void write_scores(const std::vector<FrameScores<S>>& frames, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open score dump for writing: " + path);
  for (const auto& f : frames) {
    featio_detail::put<std::uint32_t>(out, std::uint32_t(f.frame));
    featio_detail::put<std::uint32_t>(out, std::uint32_t(f.units.size()));
    for (std::size_t i = 0; i < f.units.size(); ++i) {
      featio_detail::put<std::uint32_t>(out, f.units[i]);
      featio_detail::put<float>(out, float(f.values[i]));
    }
  }
  if (!out) throw IoError("score write failed: " + path);
}

inline std::vector<FrameScores<float>> read_scores(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open score dump: " + path);
  std::vector<FrameScores<float>> out;
  while (true) {
    std::uint32_t frame = 0;
    in.read(reinterpret_cast<char*>(&frame), sizeof frame);
    if (in.eof()) break;
    if (!in) throw FormatError("score dump truncated: " + path);
    FrameScores<float> f;
    f.frame = long(frame);
    const auto count = featio_detail::get<std::uint32_t>(in, "score record");
    f.units.resize(count);
    f.values.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      f.units[i] = featio_detail::get<std::uint32_t>(in, "score record");
      f.values[i] = featio_detail::get<float>(in, "score record");
    }
    out.push_back(std::move(f));
  }
  return out;
}

} // namespace sndcnn
