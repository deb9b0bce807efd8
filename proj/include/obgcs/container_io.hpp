#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "obgcs/errors.hpp"

namespace obgcs::io {

// All containers are little-endian. Values are written byte by byte so the
// layout does not depend on host endianness.

inline void write_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  os.put('\n');
}

inline void write_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

inline void write_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

/// Bounds-checked reader; any short read is a MalformedFileError.
class Reader {
 public:
  Reader(std::istream& is, std::string context) : is_(is), context_(std::move(context)) {}

  void expect_magic(std::string_view magic) {
    std::string got(magic.size() + 1, '\0');
    is_.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (is_.gcount() != static_cast<std::streamsize>(got.size()) || got.substr(0, magic.size()) != magic ||
        got.back() != '\n')
      throw MalformedFileError(context_ + ": bad or missing header (expected \"" + std::string(magic) + "\")");
  }

  std::uint8_t u8() {
    unsigned char b[1];
    raw(b, 1);
    return b[0];
  }

  std::uint32_t u32() {
    unsigned char b[4];
    raw(b, 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  std::uint64_t u64() {
    unsigned char b[8];
    raw(b, 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  void expect_end() {
    if (is_.peek() != std::char_traits<char>::eof())
      throw MalformedFileError(context_ + ": trailing bytes after payload");
  }

  const std::string& context() const noexcept { return context_; }

 private:
  void raw(unsigned char* dst, std::streamsize n) {
    is_.read(reinterpret_cast<char*>(dst), n);
    if (is_.gcount() != n) throw MalformedFileError(context_ + ": truncated file");
  }

  std::istream& is_;
  std::string context_;
};

}  // namespace obgcs::io
