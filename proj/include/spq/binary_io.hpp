#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spq/error.hpp"

namespace spq::io {

// Append-only little-endian byte sink.
class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }

  void u16(std::uint16_t v) {
    for (int s = 0; s < 16; s += 8) u8(static_cast<std::uint8_t>(v >> s));
  }

  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) u8(static_cast<std::uint8_t>(v >> s));
  }

  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }

  void u64(std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) u8(static_cast<std::uint8_t>(v >> s));
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  void f32s(std::span<const float> v) {
    for (float x : v) f32(x);
  }

  void raw(std::span<const char> v) { bytes_.insert(bytes_.end(), v.begin(), v.end()); }

  const std::vector<char>& bytes() const { return bytes_; }
  std::vector<char> take() { return std::move(bytes_); }

 private:
  std::vector<char> bytes_;
};

// Bounds-checked little-endian reader; every short read throws FormatError
// with the offending offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const char> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  void expect_magic(std::string_view tag) {
    need(tag.size(), "magic");
    if (std::string_view(bytes_.data() + pos_, tag.size()) != tag) {
      throw FormatError("bad magic, expected \"" + std::string(tag) + "\"", pos_);
    }
    pos_ += tag.size();
  }

  std::uint8_t u8() {
    need(1, "u8");
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::uint16_t u16() {
    need(2, "u16");
    std::uint16_t v = 0;
    for (int s = 0; s < 16; s += 8) v |= static_cast<std::uint16_t>(byte() << s);
    return v;
  }

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int s = 0; s < 32; s += 8) v |= static_cast<std::uint32_t>(byte()) << s;
    return v;
  }

  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }

  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int s = 0; s < 64; s += 8) v |= static_cast<std::uint64_t>(byte()) << s;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  void f32s(std::span<float> out) {
    need(out.size() * 4, "f32 array");
    for (float& x : out) x = f32();
  }

  std::span<const char> raw(std::size_t n) {
    need(n, "byte block");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("truncated input reading ") + what, pos_);
    }
  }

 private:
  std::uint8_t byte() { return static_cast<std::uint8_t>(bytes_[pos_++]); }

  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open file for reading: " + path);
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<char> bytes(size);
  in.seekg(0);
  if (size > 0 && !in.read(bytes.data(), static_cast<std::streamsize>(size))) {
    throw IoError("read failed: " + path);
  }
  return bytes;
}

inline void write_file(const std::string& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace spq::io
