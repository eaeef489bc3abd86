#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tenc/encoder/model.hpp"

// TENC1 checkpoint layout (all integers little-endian uint32):
//
//   "TENC1"  count
//   count x { name_len  name  rank  dims[rank]  f32 payload[prod(dims)] }
//
// Hyperparameters that cannot be recovered from tensor shapes are stored as
// one-element records named "meta.n_heads" and "meta.dropout".
namespace tenc::encoder {

namespace detail {

inline constexpr char kMagic[5] = {'T', 'E', 'N', 'C', '1'};

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error("checkpoint", "truncated file");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

inline void put_f32(std::ostream& os, double v) { put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
inline double get_f32(std::istream& is) { return static_cast<double>(std::bit_cast<float>(get_u32(is))); }

inline void put_record(std::ostream& os, const std::string& name, const Shape& shape, std::span<const double> v) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) put_u32(os, static_cast<std::uint32_t>(d));
  for (double x : v) put_f32(os, x);
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const EncoderParams& p) {
  os.write(detail::kMagic, 5);
  detail::put_u32(os, static_cast<std::uint32_t>(p.tensors().size() + 2));
  const double n_heads = static_cast<double>(p.hyper().n_heads);
  const double dropout = p.hyper().dropout;
  detail::put_record(os, "meta.n_heads", {1}, std::span<const double>(&n_heads, 1));
  detail::put_record(os, "meta.dropout", {1}, std::span<const double>(&dropout, 1));
  for (const auto& t : p.tensors()) detail::put_record(os, t.name, t.tensor.shape(), t.tensor.values());
  if (!os) throw Error("checkpoint", "write failed");
}

inline EncoderParams read_checkpoint(std::istream& is) {
  char magic[5];
  if (!is.read(magic, 5) || std::memcmp(magic, detail::kMagic, 5) != 0) {
    throw Error("checkpoint", "bad magic (expected TENC1)");
  }
  const std::uint32_t count = detail::get_u32(is);
  EncoderHyper h;
  std::vector<NamedTensor> tensors;
  std::size_t n_layers = 0;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::uint32_t len = detail::get_u32(is);
    if (len > 4096) throw Error("checkpoint", "implausible name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw Error("checkpoint", "truncated file");
    const std::uint32_t rank = detail::get_u32(is);
    if (rank == 0 || rank > 8) throw Error("checkpoint", "bad rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = detail::get_u32(is);
    std::vector<double> values(ad::numel_of(shape));
    for (double& v : values) v = detail::get_f32(is);
    if (name == "meta.n_heads") {
      h.n_heads = static_cast<std::size_t>(values.at(0));
    } else if (name == "meta.dropout") {
      h.dropout = values.at(0);
    } else {
      if (name == "embed.token") {
        h.vocab_size = shape.at(0);
        h.d_model = shape.at(1);
      } else if (name == "embed.position") {
        h.max_len = shape.at(0);
      } else if (name.rfind("layer", 0) == 0) {
        n_layers = std::max(n_layers, std::stoul(name.substr(5)) + 1);
        if (name.find("ffn.in.weight") != std::string::npos) h.ff_mult = shape.at(1) / shape.at(0);
      }
      tensors.push_back({name, Tensor::parameter(std::move(shape), std::move(values))});
    }
  }
  h.n_layers = n_layers;
  h.validate();
  return EncoderParams(h, std::move(tensors));
}

inline void save_checkpoint(const std::string& path, const EncoderParams& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("checkpoint", "cannot open '" + path + "' for writing");
  write_checkpoint(os, p);
}

inline EncoderParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("checkpoint", "cannot open '" + path + "'");
  return read_checkpoint(is);
}

}  // namespace tenc::encoder
