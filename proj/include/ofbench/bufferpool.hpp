#pragma once

// Packet memory for the controller pipeline.  Two strategies:
//
//   PerPacketObject    every acquire() is a fresh heap allocation, every
//                      release() frees it.
//   PreallocatedPool   a per-worker free list of fixed-size buffers filled
//                      up front; acquire()/release() recycle them.
//
// IoBuffer is move-only, so exactly one context owns a buffer at a time.
// Resizing hands back a new buffer and consumes the old one, which rules out
// the stale-reference-after-resize race by construction.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "ofbench/counter.hpp"

namespace ofb::buffers {

enum class BufferKind : std::uint8_t { PerPacketObject, PreallocatedPool };

std::string_view to_string(BufferKind kind);
BufferKind parse_buffer_kind(std::string_view text);

struct BufferStrategy {
  BufferKind kind = BufferKind::PreallocatedPool;
  std::size_t pool_buffer_size = 4096;
  std::size_t pool_depth = 64;

  static constexpr std::size_t kMinBufferSize = 128;
  static constexpr std::size_t kMinDepth = 2;

  /// Throws std::invalid_argument when a limit is violated.
  void validate() const;

  friend bool operator==(const BufferStrategy&, const BufferStrategy&) = default;
};

struct AllocStats {
  std::uint64_t allocations = 0;
  std::uint64_t bytes_copied = 0;
  std::uint64_t buffer_reuses = 0;

  AllocStats& operator+=(const AllocStats& o) noexcept {
    allocations += o.allocations;
    bytes_copied += o.bytes_copied;
    buffer_reuses += o.buffer_reuses;
    return *this;
  }
  friend AllocStats operator-(AllocStats a, const AllocStats& b) noexcept {
    a.allocations -= b.allocations;
    a.bytes_copied -= b.bytes_copied;
    a.buffer_reuses -= b.buffer_reuses;
    return a;
  }
  friend bool operator==(const AllocStats&, const AllocStats&) = default;
};

class DoubleRelease : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class BufferPool;

/// Byte buffer with a read cursor and a write cursor.
///   [0, read)        consumed
///   [read, write)    readable
///   [write, cap)     writable
class IoBuffer {
 public:
  IoBuffer() = default;
  IoBuffer(IoBuffer&& other) noexcept { *this = std::move(other); }
  IoBuffer& operator=(IoBuffer&& other) noexcept {
    storage_ = std::move(other.storage_);
    capacity_ = std::exchange(other.capacity_, 0);
    read_ = std::exchange(other.read_, 0);
    write_ = std::exchange(other.write_, 0);
    generation_ = other.generation_;
    identity_ = other.identity_;
    return *this;
  }
  IoBuffer(const IoBuffer&) = delete;
  IoBuffer& operator=(const IoBuffer&) = delete;

  [[nodiscard]] bool valid() const noexcept { return storage_ != nullptr; }
  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] std::size_t read_cursor() const noexcept { return read_; }
  [[nodiscard]] std::size_t write_cursor() const noexcept { return write_; }
  [[nodiscard]] std::size_t readable_size() const noexcept { return write_ - read_; }
  [[nodiscard]] std::size_t writable_size() const noexcept { return capacity_ - write_; }
  [[nodiscard]] std::uint64_t generation() const noexcept { return generation_; }
  [[nodiscard]] std::uint64_t identity() const noexcept { return identity_; }

  [[nodiscard]] std::span<const std::uint8_t> readable() const noexcept {
    return {storage_.get() + read_, write_ - read_};
  }
  [[nodiscard]] std::span<std::uint8_t> writable() noexcept {
    return {storage_.get() + write_, capacity_ - write_};
  }
  [[nodiscard]] std::span<const std::uint8_t> data() const noexcept {
    return {storage_.get(), write_};
  }

  void commit(std::size_t n) noexcept { write_ += n; }
  void consume(std::size_t n) noexcept {
    read_ += n;
    if (read_ == write_) read_ = write_ = 0;
  }
  void clear() noexcept { read_ = write_ = 0; }

  /// Moves unread bytes to the front.  Returns the number of bytes moved so
  /// the caller can account for the copy.
  std::size_t compact() noexcept;

 private:
  friend class BufferPool;

  std::unique_ptr<std::uint8_t[]> storage_;
  std::size_t capacity_ = 0;
  std::size_t read_ = 0;
  std::size_t write_ = 0;
  std::uint64_t generation_ = 0;
  std::uint64_t identity_ = 0;
};

/// Worker-confined buffer source.  Not thread-safe: every method must be
/// called from the owning thread.  stats() may be sampled from anywhere.
class BufferPool {
 public:
  explicit BufferPool(BufferStrategy strategy, bool audit = kAuditDefault);
  BufferPool(const BufferPool&) = delete;
  BufferPool& operator=(const BufferPool&) = delete;

  [[nodiscard]] IoBuffer acquire(std::size_t min_capacity);
  void release(IoBuffer&& buffer);
  [[nodiscard]] IoBuffer grow_exclusive(IoBuffer&& buffer, std::size_t new_capacity);

  /// Accounting hooks for copies and allocations made outside the pool
  /// (materialized message objects, reply copies).
  void note_copy(std::size_t bytes) noexcept { bytes_copied_.add(bytes); }
  void note_allocation(std::size_t count = 1) noexcept { allocations_.add(count); }

  [[nodiscard]] AllocStats stats() const noexcept;
  [[nodiscard]] const BufferStrategy& strategy() const noexcept { return strategy_; }
  [[nodiscard]] std::size_t available() const noexcept { return free_.size(); }

#ifdef NDEBUG
  static constexpr bool kAuditDefault = false;
#else
  static constexpr bool kAuditDefault = true;
#endif

 private:
  IoBuffer allocate(std::size_t capacity);

  BufferStrategy strategy_;
  bool audit_;
  std::vector<IoBuffer> free_;

  Counter allocations_;
  Counter bytes_copied_;
  Counter buffer_reuses_;
};

}  // namespace ofb::buffers
