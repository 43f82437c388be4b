#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "mela/errors.hpp"
#include "mela/nn.hpp"
#include "mela/tensor.hpp"

// Byte-level little-endian encoding, independent of host endianness. Shared
// by the checkpoint and dataset codecs; layouts are documented in
// docs/FORMATS.md.
namespace mela::io {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw io_error("truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& in) {
  return std::bit_cast<double>(get_u64(in));
}

inline void put_magic(std::ostream& out, const char (&magic)[9]) {
  out.write(magic, 8);
}

inline void expect_magic(std::istream& in, const char (&magic)[9],
                         const std::string& what) {
  char read[8];
  in.read(read, 8);
  if (!in || std::memcmp(read, magic, 8) != 0)
    throw io_error("not a " + what + " file (bad magic)");
}

inline void put_spec(std::ostream& out, const nn::MlpSpec& spec) {
  put_f64(out, spec.slope);
  put_u64(out, spec.sizes.size());
  for (std::size_t s : spec.sizes) put_u64(out, s);
}

inline nn::MlpSpec get_spec(std::istream& in) {
  nn::MlpSpec spec;
  spec.slope = get_f64(in);
  const std::uint64_t n = get_u64(in);
  if (n < 2 || n > 1024) throw io_error("implausible layer count");
  for (std::uint64_t i = 0; i < n; ++i)
    spec.sizes.push_back(static_cast<std::size_t>(get_u64(in)));
  spec.validate();
  return spec;
}

inline void put_flat(std::ostream& out, const Tensor& flat) {
  put_u64(out, flat.size());
  for (double v : flat.flat()) put_f64(out, v);
}

inline Tensor get_flat(std::istream& in, std::size_t expected) {
  const std::uint64_t n = get_u64(in);
  if (n != expected)
    throw io_error("file holds " + std::to_string(n) +
                   " parameters, expected " + std::to_string(expected));
  Tensor flat(1, expected);
  for (std::size_t i = 0; i < expected; ++i) flat[i] = get_f64(in);
  return flat;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read " + path);
  return in;
}

}  // namespace mela::io
