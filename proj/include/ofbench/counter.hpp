#pragma once

#include <atomic>
#include <cstdint>

namespace ofb {

/// Single-writer counter that other threads may sample at any time.
/// Increments are a plain load/store pair, so only the owning thread may
/// call add().
class Counter {
 public:
  void add(std::uint64_t n = 1) noexcept {
    value_.store(value_.load(std::memory_order_relaxed) + n, std::memory_order_relaxed);
  }
  [[nodiscard]] std::uint64_t get() const noexcept { return value_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> value_{0};
};

}  // namespace ofb
