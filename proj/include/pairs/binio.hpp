#pragma once
// Little-endian primitives for the binary tensor and model formats.
// Byte order is packed explicitly so the formats are stable across hosts.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pairs/errors.hpp"

namespace pairs::binio {

inline void write_u8(std::ostream& os, uint8_t v) {
  os.put(static_cast<char>(v));
}

inline void write_u32(std::ostream& os, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline void write_u64(std::ostream& os, uint64_t v) {
  write_u32(os, static_cast<uint32_t>(v & 0xffffffffu));
  write_u32(os, static_cast<uint32_t>(v >> 32));
}

inline void write_f32(std::ostream& os, float v) {
  write_u32(os, std::bit_cast<uint32_t>(v));
}

inline void write_f64(std::ostream& os, double v) {
  write_u64(os, std::bit_cast<uint64_t>(v));
}

inline void read_exact(std::istream& is, char* dst, size_t n) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<size_t>(is.gcount()) != n) {
    throw BadFormatError("unexpected end of stream");
  }
}

inline uint8_t read_u8(std::istream& is) {
  char b;
  read_exact(is, &b, 1);
  return static_cast<uint8_t>(b);
}

inline uint32_t read_u32(std::istream& is) {
  char b[4];
  read_exact(is, b, 4);
  return static_cast<uint32_t>(static_cast<unsigned char>(b[0])) |
         (static_cast<uint32_t>(static_cast<unsigned char>(b[1])) << 8) |
         (static_cast<uint32_t>(static_cast<unsigned char>(b[2])) << 16) |
         (static_cast<uint32_t>(static_cast<unsigned char>(b[3])) << 24);
}

inline uint64_t read_u64(std::istream& is) {
  uint64_t lo = read_u32(is);
  uint64_t hi = read_u32(is);
  return lo | (hi << 32);
}

inline float read_f32(std::istream& is) {
  return std::bit_cast<float>(read_u32(is));
}

inline double read_f64(std::istream& is) {
  return std::bit_cast<double>(read_u64(is));
}

inline void write_magic(std::ostream& os, const char (&tag)[5]) {
  os.write(tag, 4);
}

inline void expect_magic(std::istream& is, const char (&tag)[5]) {
  char b[4];
  read_exact(is, b, 4);
  if (b[0] != tag[0] || b[1] != tag[1] || b[2] != tag[2] || b[3] != tag[3]) {
    throw BadFormatError(std::string("bad magic, expected \"") + tag + "\"");
  }
}

inline void write_f32_array(std::ostream& os, std::span<const float> values) {
  for (float v : values) write_f32(os, v);
}

inline void read_f32_array(std::istream& is, std::span<float> values) {
  for (float& v : values) v = read_f32(is);
}

inline void write_f64_array(std::ostream& os, std::span<const double> values) {
  for (double v : values) write_f64(os, v);
}

inline void read_f64_array(std::istream& is, std::span<double> values) {
  for (double& v : values) v = read_f64(is);
}

}  // namespace pairs::binio
