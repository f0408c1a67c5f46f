#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>

namespace ofb::detail {

// Bounds are checked by callers before constructing these; the cursors only
// move forward.

class BeWriter {
 public:
  explicit BeWriter(std::span<std::uint8_t> out) noexcept : out_(out) {}

  void u8(std::uint8_t v) noexcept { out_[pos_++] = v; }
  void u16(std::uint16_t v) noexcept {
    out_[pos_++] = static_cast<std::uint8_t>(v >> 8);
    out_[pos_++] = static_cast<std::uint8_t>(v);
  }
  void u32(std::uint32_t v) noexcept {
    u16(static_cast<std::uint16_t>(v >> 16));
    u16(static_cast<std::uint16_t>(v));
  }
  void u64(std::uint64_t v) noexcept {
    u32(static_cast<std::uint32_t>(v >> 32));
    u32(static_cast<std::uint32_t>(v));
  }
  // Low 48 bits, most significant octet first.
  void mac48(std::uint64_t v) noexcept {
    for (int shift = 40; shift >= 0; shift -= 8) out_[pos_++] = static_cast<std::uint8_t>(v >> shift);
  }
  void bytes(std::span<const std::uint8_t> src) noexcept {
    if (!src.empty()) std::memcpy(out_.data() + pos_, src.data(), src.size());
    pos_ += src.size();
  }
  void zeros(std::size_t n) noexcept {
    std::memset(out_.data() + pos_, 0, n);
    pos_ += n;
  }

  [[nodiscard]] std::size_t written() const noexcept { return pos_; }

 private:
  std::span<std::uint8_t> out_;
  std::size_t pos_ = 0;
};

class BeReader {
 public:
  explicit BeReader(std::span<const std::uint8_t> in) noexcept : in_(in) {}

  std::uint8_t u8() noexcept { return in_[pos_++]; }
  std::uint16_t u16() noexcept {
    auto hi = in_[pos_++];
    auto lo = in_[pos_++];
    return static_cast<std::uint16_t>((hi << 8) | lo);
  }
  std::uint32_t u32() noexcept {
    std::uint32_t hi = u16();
    return (hi << 16) | u16();
  }
  std::uint64_t u64() noexcept {
    std::uint64_t hi = u32();
    return (hi << 32) | u32();
  }
  std::uint64_t mac48() noexcept {
    std::uint64_t v = 0;
    for (int i = 0; i < 6; ++i) v = (v << 8) | in_[pos_++];
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) noexcept {
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void skip(std::size_t n) noexcept { pos_ += n; }

  [[nodiscard]] std::size_t remaining() const noexcept { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace ofb::detail
