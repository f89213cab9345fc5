#pragma once

// LSB-first bit packing shared by the bitstream and metadata encoders.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dice {

class BitWriter {
 public:
  explicit BitWriter(size_t bytes) : out_(bytes, 0) {}
  void put(uint64_t v, int bits) {
    for (int i = 0; i < bits; ++i, ++pos_)
      if ((v >> i) & 1u) out_[pos_ / 8] |= static_cast<uint8_t>(1u << (pos_ % 8));
  }
  std::vector<uint8_t> take() { return std::move(out_); }

 private:
  std::vector<uint8_t> out_;
  size_t pos_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const uint8_t> in) : in_(in) {}
  uint64_t get(int bits) {
    uint64_t v = 0;
    for (int i = 0; i < bits; ++i, ++pos_) v |= static_cast<uint64_t>((in_[pos_ / 8] >> (pos_ % 8)) & 1u) << i;
    return v;
  }
  size_t pos() const { return pos_; }

 private:
  std::span<const uint8_t> in_;
  size_t pos_ = 0;
};

}  // namespace dice
