#pragma once

// Little-endian primitives for the checkpoint and frame formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "tpgf/errors.hpp"

namespace tpgf::io {

inline void write_u64(std::ostream& os, std::uint64_t v) {
  char bytes[8];
  for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((v >> (8 * k)) & 0xFF);
  os.write(bytes, 8);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char bytes[4];
  for (int k = 0; k < 4; ++k) bytes[k] = static_cast<char>((v >> (8 * k)) & 0xFF);
  os.write(bytes, 4);
}

inline void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t read_u64(std::istream& is, const std::string& what) {
  unsigned char bytes[8];
  if (!is.read(reinterpret_cast<char*>(bytes), 8)) throw FormatError(what + ": truncated file");
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
  return v;
}

inline std::uint32_t read_u32(std::istream& is, const std::string& what) {
  unsigned char bytes[4];
  if (!is.read(reinterpret_cast<char*>(bytes), 4)) throw FormatError(what + ": truncated file");
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes[k]) << (8 * k);
  return v;
}

inline double read_f64(std::istream& is, const std::string& what) {
  return std::bit_cast<double>(read_u64(is, what));
}

/// Big-endian u32, as used by the IDX format.
inline std::uint32_t read_be_u32(std::istream& is, const std::string& what) {
  unsigned char bytes[4];
  if (!is.read(reinterpret_cast<char*>(bytes), 4)) throw FormatError(what + ": truncated file");
  return (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) | (std::uint32_t{bytes[2]} << 8) |
         std::uint32_t{bytes[3]};
}

}  // namespace tpgf::io
