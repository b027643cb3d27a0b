#pragma once
// Versioned binary model checkpoint, little-endian: "SNDC" magic, format
// version, serialized ModelConfig, then every parameter tensor in build order
// as 32-bit floats with a shape prefix. Loading then saving reproduces the
// file byte for byte.

#include "graph.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace sndcnn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace ckpt_detail {

constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError("checkpoint truncated");
  return v;
}

inline void write_config(std::ostream& out, const ModelConfig& cfg) {
  put<std::uint8_t>(out, cfg.stack == StackKind::cnn_bottleneck ? 1 : 0);
  put<std::uint32_t>(out, std::uint32_t(cfg.depth));
  put<std::uint32_t>(out, std::uint32_t(cfg.widths.size()));
  for (int w : cfg.widths) put<std::uint32_t>(out, std::uint32_t(w));
  put<std::uint8_t>(out, cfg.activation == Activation::selu ? 1 : 0);
  put<std::uint8_t>(out, cfg.shortcut ? 1 : 0);
  put<std::uint8_t>(out, cfg.batchnorm ? 1 : 0);
  put<std::uint32_t>(out, std::uint32_t(cfg.input_dim));
  put<std::uint32_t>(out, std::uint32_t(cfg.output_dim));
  put<std::uint32_t>(out, std::uint32_t(cfg.input_h));
  put<std::uint32_t>(out, std::uint32_t(cfg.input_w));
  put<std::uint8_t>(out, cfg.conv_bias ? (*cfg.conv_bias ? 2 : 1) : 0);
  put<std::uint8_t>(out, cfg.init_override
                             ? (*cfg.init_override == InitScheme::he_normal ? 2 : 1)
                             : 0);
}

inline ModelConfig read_config(std::istream& in) {
  ModelConfig cfg;
  cfg.stack = get<std::uint8_t>(in) ? StackKind::cnn_bottleneck : StackKind::dnn;
  cfg.depth = int(get<std::uint32_t>(in));
  cfg.widths.resize(get<std::uint32_t>(in));
  for (auto& w : cfg.widths) w = int(get<std::uint32_t>(in));
  cfg.activation = get<std::uint8_t>(in) ? Activation::selu : Activation::relu;
  cfg.shortcut = get<std::uint8_t>(in) != 0;
  cfg.batchnorm = get<std::uint8_t>(in) != 0;
  cfg.input_dim = int(get<std::uint32_t>(in));
  cfg.output_dim = int(get<std::uint32_t>(in));
  cfg.input_h = int(get<std::uint32_t>(in));
  cfg.input_w = int(get<std::uint32_t>(in));
  switch (get<std::uint8_t>(in)) {
    case 1: cfg.conv_bias = false; break;
    case 2: cfg.conv_bias = true; break;
    default: break;
  }
  switch (get<std::uint8_t>(in)) {
    case 1: cfg.init_override = InitScheme::lecun_normal; break;
    case 2: cfg.init_override = InitScheme::he_normal; break;
    default: break;
  }
  return cfg;
}

} // namespace ckpt_detail

template <class S>
void save_checkpoint(const Network<S>& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write("SNDC", 4);
  ckpt_detail::put<std::uint32_t>(out, ckpt_detail::kVersion);
  ckpt_detail::write_config(out, net.config());
  const auto ps = net.params();
  ckpt_detail::put<std::uint32_t>(out, std::uint32_t(ps.size()));
  std::vector<float> buf;
  for (const auto* t : ps) {
    ckpt_detail::put<std::uint32_t>(out, std::uint32_t(t->ndim()));
    for (int i = 0; i < t->ndim(); ++i)
      ckpt_detail::put<std::uint32_t>(out, std::uint32_t(t->dim(i)));
    buf.resize(t->size());
    for (std::size_t i = 0; i < t->size(); ++i) buf[i] = float(t->data()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              std::streamsize(buf.size() * sizeof(float)));
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

template <class S>
Network<S> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SNDC", 4) != 0)
    throw FormatError("not a checkpoint file (bad magic): " + path);
  const auto version = ckpt_detail::get<std::uint32_t>(in);
  if (version != ckpt_detail::kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  ModelConfig cfg = ckpt_detail::read_config(in);
  Network<S> net(cfg, 0);
  auto ps = net.params();
  const auto count = ckpt_detail::get<std::uint32_t>(in);
  if (count != ps.size())
    throw FormatError("checkpoint has " + std::to_string(count) + " tensors, model needs " +
                      std::to_string(ps.size()));
  std::vector<float> buf;
  for (auto* t : ps) {
    const auto ndim = ckpt_detail::get<std::uint32_t>(in);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = int(ckpt_detail::get<std::uint32_t>(in));
    if (shape != t->shape())
      throw FormatError("checkpoint tensor shape " + shape_str(shape) +
                        " vs model " + shape_str(t->shape()));
    buf.resize(t->size());
    in.read(reinterpret_cast<char*>(buf.data()),
            std::streamsize(buf.size() * sizeof(float)));
    if (!in) throw FormatError("checkpoint truncated in tensor data");
    for (std::size_t i = 0; i < t->size(); ++i) t->data()[i] = S(buf[i]);
  }
  return net;
}

} // namespace sndcnn
