#pragma once

// Little-endian primitives shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "drum/errors.hpp"

namespace drum::detail {

class LeWriter {
 public:
  explicit LeWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open for writing: " + path.string());
  }

  void bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

  void u32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(b, 4);
  }

  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  void finish() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class LeReader {
 public:
  explicit LeReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open for reading: " + path.string());
  }

  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  std::uint32_t u32() {
    unsigned char b[4];
    read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }

  float f32() { return std::bit_cast<float>(u32()); }

  // True when no bytes remain.
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  const std::filesystem::path& path() const { return path_; }

 private:
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw IoError("truncated file: " + path_.string());
  }

  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace drum::detail
