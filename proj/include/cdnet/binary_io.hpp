#ifndef CDNET_BINARY_IO_HPP_
#define CDNET_BINARY_IO_HPP_

// Little-endian primitive I/O shared by the sample cache and checkpoints.
// Values are assembled byte by byte so the files are host-independent.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "cdnet/errors.hpp"

namespace cdnet::binio {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b, 8);
}

inline void put_i32(std::ostream& out, std::int32_t v) { put_u32(out, static_cast<std::uint32_t>(v)); }
inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

// Readers throw FormatError naming `what` when the stream ends early.
inline void need(std::istream& in, const char* what) {
  if (!in) throw FormatError(std::string("truncated file while reading ") + what);
}

inline std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  need(in, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& in, const char* what) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  need(in, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::int32_t get_i32(std::istream& in, const char* what) {
  return static_cast<std::int32_t>(get_u32(in, what));
}
inline float get_f32(std::istream& in, const char* what) { return std::bit_cast<float>(get_u32(in, what)); }

inline std::string get_string(std::istream& in, const char* what, std::uint32_t max_len = 1u << 20) {
  const std::uint32_t n = get_u32(in, what);
  if (n > max_len) throw FormatError(std::string("implausible string length while reading ") + what);
  std::string s(n, '\0');
  in.read(s.data(), n);
  need(in, what);
  return s;
}

inline void check_magic(std::istream& in, const char (&magic)[5], const std::string& path) {
  char m[4] = {0, 0, 0, 0};
  in.read(m, 4);
  if (!in || m[0] != magic[0] || m[1] != magic[1] || m[2] != magic[2] || m[3] != magic[3]) {
    throw FormatError("bad magic in " + path + " (expected " + std::string(magic, 4) + ")");
  }
}

}  // namespace cdnet::binio

#endif  // CDNET_BINARY_IO_HPP_
