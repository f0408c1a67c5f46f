#include "ofbench/bufferpool.hpp"

#include <atomic>
#include <cstring>
#include <string>

namespace ofb::buffers {

namespace {
std::atomic<std::uint64_t> g_next_identity{1};
}

std::string_view to_string(BufferKind kind) {
  switch (kind) {
    case BufferKind::PerPacketObject: return "per_packet_object";
    case BufferKind::PreallocatedPool: return "preallocated_pool";
  }
  return "unknown";
}

BufferKind parse_buffer_kind(std::string_view text) {
  if (text == "per_packet_object" || text == "object") return BufferKind::PerPacketObject;
  if (text == "preallocated_pool" || text == "pool") return BufferKind::PreallocatedPool;
  throw std::invalid_argument("unknown buffer strategy: " + std::string(text));
}

void BufferStrategy::validate() const {
  if (pool_buffer_size < kMinBufferSize) {
    throw std::invalid_argument("pool_buffer_size must be >= " + std::to_string(kMinBufferSize));
  }
  if (pool_depth < kMinDepth) {
    throw std::invalid_argument("pool_depth must be >= " + std::to_string(kMinDepth));
  }
}

std::size_t IoBuffer::compact() noexcept {
  if (read_ == 0) return 0;
  const std::size_t n = write_ - read_;
  if (n > 0) std::memmove(storage_.get(), storage_.get() + read_, n);
  read_ = 0;
  write_ = n;
  return n;
}

BufferPool::BufferPool(BufferStrategy strategy, bool audit) : strategy_(strategy), audit_(audit) {
  strategy_.validate();
  if (strategy_.kind == BufferKind::PreallocatedPool) {
    free_.reserve(strategy_.pool_depth);
    for (std::size_t i = 0; i < strategy_.pool_depth; ++i) {
      free_.push_back(allocate(strategy_.pool_buffer_size));
    }
  }
}

IoBuffer BufferPool::allocate(std::size_t capacity) {
  IoBuffer b;
  b.storage_ = std::make_unique_for_overwrite<std::uint8_t[]>(capacity);
  b.capacity_ = capacity;
  b.identity_ = g_next_identity.fetch_add(1, std::memory_order_relaxed);
  allocations_.add();
  return b;
}

IoBuffer BufferPool::acquire(std::size_t min_capacity) {
  if (strategy_.kind == BufferKind::PerPacketObject) {
    return allocate(min_capacity == 0 ? 1 : min_capacity);
  }
  if (!free_.empty() && free_.back().capacity_ >= min_capacity) {
    IoBuffer b = std::move(free_.back());
    free_.pop_back();
    buffer_reuses_.add();
    return b;
  }
  return allocate(std::max(min_capacity, strategy_.pool_buffer_size));
}

void BufferPool::release(IoBuffer&& buffer) {
  if (!buffer.valid()) {
    if (audit_) throw DoubleRelease("release of a buffer that is no longer owned");
    return;
  }
  IoBuffer b = std::move(buffer);
  b.read_ = b.write_ = 0;
  ++b.generation_;
  if (strategy_.kind == BufferKind::PreallocatedPool && free_.size() < strategy_.pool_depth &&
      b.capacity_ >= strategy_.pool_buffer_size) {
    free_.push_back(std::move(b));
  }
  // Otherwise the storage is freed when b goes out of scope.
}

IoBuffer BufferPool::grow_exclusive(IoBuffer&& buffer, std::size_t new_capacity) {
  IoBuffer old = std::move(buffer);
  if (old.valid() && new_capacity <= old.capacity_) return old;
  IoBuffer grown = allocate(new_capacity);
  if (old.valid()) {
    if (old.write_ > 0) {
      std::memcpy(grown.storage_.get(), old.storage_.get(), old.write_);
      bytes_copied_.add(old.write_);
    }
    grown.read_ = old.read_;
    grown.write_ = old.write_;
  }
  return grown;
}

AllocStats BufferPool::stats() const noexcept {
  return AllocStats{allocations_.get(), bytes_copied_.get(), buffer_reuses_.get()};
}

}  // namespace ofb::buffers
