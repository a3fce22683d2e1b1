#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "fsce/error.hpp"

// Little-endian byte streams for the binary file formats.
namespace fsce {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

// Every read checks the remaining length and throws LengthError with the
// offset at which the data ran out.
class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, std::string what) : b_(bytes), what_(std::move(what)) {}

  void require(std::size_t n) const {
    if (b_.size() - pos_ < n) {
      throw LengthError(what_ + ": truncated at byte offset " + std::to_string(b_.size()) + " (needed " +
                        std::to_string(n) + " bytes from offset " + std::to_string(pos_) + ")");
    }
  }
  void skip(std::size_t n) {
    require(n);
    pos_ += n;
  }
  std::uint8_t u8() {
    require(1);
    return b_[pos_++];
  }
  std::uint16_t u16() {
    require(2);
    std::uint16_t v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    require(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    require(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  const std::uint8_t* ptr(std::size_t n) {
    require(n);
    const std::uint8_t* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }
  bool at_end() const { return pos_ == b_.size(); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace fsce
