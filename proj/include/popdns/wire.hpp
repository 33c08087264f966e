#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>
#include <vector>

#include "popdns/errors.hpp"

namespace popdns {

/// Append-only byte buffer with the primitive encodings shared by the
/// snapshot and update-batch wire formats: little-endian fixed ints,
/// unsigned LEB128 varints, and zigzag-mapped signed varints.
class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }

  void u32le(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
  }

  void u64le(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
  }

  void varint(uint64_t v) {
    while (v >= 0x80) {
      buf_.push_back(uint8_t(v) | 0x80);
      v >>= 7;
    }
    buf_.push_back(uint8_t(v));
  }

  void zigzag(int64_t v) { varint((uint64_t(v) << 1) ^ uint64_t(v >> 63)); }

  void raw(std::span<const uint8_t> bytes) {
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
  }

  void raw(std::string_view s) {
    buf_.insert(buf_.end(), s.begin(), s.end());
  }

  size_t size() const { return buf_.size(); }
  const std::vector<uint8_t>& bytes() const { return buf_; }
  std::vector<uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<uint8_t> buf_;
};

/// Cursor over immutable bytes; every read throws TruncatedInput past the end.
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  uint8_t u8() {
    need(1);
    return data_[pos_++];
  }

  uint32_t u32le() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  uint64_t u64le() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  uint64_t varint() {
    uint64_t v = 0;
    int shift = 0;
    for (;;) {
      uint8_t b = u8();
      if (shift == 63 && (b & 0x7e))
        throw TruncatedInput("varint overflows 64 bits");
      v |= uint64_t(b & 0x7f) << shift;
      if (!(b & 0x80)) return v;
      shift += 7;
      if (shift > 63) throw TruncatedInput("varint too long");
    }
  }

  int64_t zigzag() {
    uint64_t u = varint();
    return int64_t(u >> 1) ^ -int64_t(u & 1);
  }

  std::span<const uint8_t> raw(size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }
  size_t remaining() const { return data_.size() - pos_; }
  size_t pos() const { return pos_; }

 private:
  void need(size_t n) const {
    if (data_.size() - pos_ < n)
      throw TruncatedInput("unexpected end of input at offset " +
                           std::to_string(pos_));
  }
  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

/// Raw DEFLATE (RFC 1951), no zlib/gzip wrapper.
std::vector<uint8_t> deflate_bytes(std::span<const uint8_t> input, int level = 6);
std::vector<uint8_t> inflate_bytes(std::span<const uint8_t> input,
                                   size_t max_output = size_t(1) << 31);

}  // namespace popdns
