#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace roomprobe::io {

/// Little-endian byte building, independent of host order.
class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) {
    buf_.push_back(static_cast<uint8_t>(v));
    buf_.push_back(static_cast<uint8_t>(v >> 8));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str16(const std::string& s) {
    if (s.size() > UINT16_MAX) throw std::invalid_argument("str16: string too long");
    u16(static_cast<uint16_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void f32_array(const float* p, size_t n) {
    // Bit-exact on little-endian hosts; byte-swapped otherwise.
    if constexpr (std::endian::native == std::endian::little) {
      raw(p, n * 4);
    } else {
      for (size_t i = 0; i < n; ++i) f32(p[i]);
    }
  }

  const std::vector<uint8_t>& bytes() const { return buf_; }
  std::vector<uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
  explicit ByteReader(const std::vector<uint8_t>& v) : ByteReader(v.data(), v.size()) {}

  uint8_t u8() { return take(1)[0]; }
  uint16_t u16() {
    const uint8_t* p = take(2);
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
  }
  uint32_t u32() {
    const uint8_t* p = take(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    const uint8_t* p = take(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
  }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    const uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str16() {
    const uint16_t n = u16();
    const uint8_t* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  void f32_array(float* out, size_t n) {
    const uint8_t* p = take(n * 4);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out, p, n * 4);
    } else {
      for (size_t i = 0; i < n; ++i) {
        uint32_t bits = 0;
        for (int k = 0; k < 4; ++k) bits |= static_cast<uint32_t>(p[i * 4 + k]) << (8 * k);
        std::memcpy(&out[i], &bits, 4);
      }
    }
  }

  size_t remaining() const { return size_ - pos_; }
  void expect_end(const char* what) const {
    if (pos_ != size_)
      throw std::runtime_error(std::string(what) + ": " + std::to_string(size_ - pos_) + " trailing bytes");
  }

 private:
  const uint8_t* take(size_t n) {
    if (pos_ + n > size_)
      throw std::runtime_error("truncated input: needed " + std::to_string(n) + " bytes at offset " +
                               std::to_string(pos_) + " of " + std::to_string(size_));
    const uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
  }

  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
};

void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_file(const std::filesystem::path& path);

/// FNV-1a 64 as a hex string; used as the artifact identity for provenance.
std::string content_id(const std::vector<uint8_t>& bytes);

}  // namespace roomprobe::io
