#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <set>
#include <utility>
#include <vector>

#include "ofbench/bufferpool.hpp"
#include "support/gen.hpp"

using namespace ofb;
using namespace ofb::buffers;

namespace {

BufferStrategy pool_strategy(std::size_t depth = 64, std::size_t size = 4096) {
  return {BufferKind::PreallocatedPool, size, depth};
}

BufferStrategy object_strategy() { return {BufferKind::PerPacketObject, 4096, 64}; }

void fill(IoBuffer& b, std::size_t n, std::uint8_t seed) {
  auto w = b.writable();
  for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<std::uint8_t>(seed + i);
  b.commit(n);
}

}  // namespace

TEST(BufferStrategy, Limits) {
  EXPECT_THROW((BufferStrategy{BufferKind::PreallocatedPool, 127, 64}.validate()), std::invalid_argument);
  EXPECT_THROW((BufferStrategy{BufferKind::PreallocatedPool, 128, 1}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((BufferStrategy{BufferKind::PreallocatedPool, 128, 2}.validate()));
}

TEST(Acquire, PoolSteadyStateAllocatesAtMostDepth) {
  BufferPool pool(pool_strategy());
  const auto before = pool.stats().allocations;
  for (int i = 0; i < 1'000'000; ++i) {
    auto b = pool.acquire(82);
    fill(b, 82, static_cast<std::uint8_t>(i));
    pool.release(std::move(b));
  }
  // The constructor's prefill is the only allocation.
  EXPECT_LE(pool.stats().allocations, 64u);
  EXPECT_EQ(pool.stats().allocations - before, 0u);
  EXPECT_EQ(pool.stats().buffer_reuses, 1'000'000u);
}

TEST(Acquire, PoolExhaustionAllocatesAndIsCounted) {
  BufferPool pool(pool_strategy(4));
  std::vector<IoBuffer> live;
  for (int i = 0; i < 10; ++i) live.push_back(pool.acquire(82));
  EXPECT_EQ(pool.stats().allocations, 4u + 6u);
  for (auto& b : live) pool.release(std::move(b));
  EXPECT_EQ(pool.available(), 4u);
}

TEST(Acquire, ObjectModeAllocatesEveryTime) {
  BufferPool pool(object_strategy());
  constexpr int n = 12'345;
  for (int i = 0; i < n; ++i) pool.release(pool.acquire(82));
  EXPECT_EQ(pool.stats().allocations, static_cast<std::uint64_t>(n));
  EXPECT_EQ(pool.stats().buffer_reuses, 0u);
}

TEST(Acquire, CapacityCoversAPacketIn) {
  for (auto s : {pool_strategy(), object_strategy()}) {
    BufferPool pool(s);
    auto b = pool.acquire(82);
    EXPECT_GE(b.capacity(), 82u);
    EXPECT_EQ(b.read_cursor(), 0u);
    EXPECT_EQ(b.write_cursor(), 0u);
  }
}

TEST(Release, GenerationIncrements) {
  BufferPool pool(pool_strategy(2));
  auto b = pool.acquire(82);
  const auto id = b.identity();
  const auto gen = b.generation();
  fill(b, 40, 1);
  pool.release(std::move(b));
  // LIFO free list hands the same storage back.
  auto again = pool.acquire(82);
  EXPECT_EQ(again.identity(), id);
  EXPECT_EQ(again.generation(), gen + 1);
  EXPECT_EQ(again.write_cursor(), 0u);
}

TEST(Release, AllReleasedLeavesConfiguredDepth) {
  BufferPool pool(pool_strategy(16));
  std::vector<IoBuffer> live;
  for (int i = 0; i < 16; ++i) live.push_back(pool.acquire(100));
  EXPECT_EQ(pool.available(), 0u);
  for (auto& b : live) pool.release(std::move(b));
  EXPECT_EQ(pool.available(), 16u);
}

TEST(Release, DoubleReleaseIsCaughtWhenAuditing) {
  BufferPool pool(pool_strategy(), /*audit=*/true);
  auto b = pool.acquire(82);
  pool.release(std::move(b));
  EXPECT_THROW(pool.release(std::move(b)), DoubleRelease);  // NOLINT(bugprone-use-after-move)
}

// Every interleaving of acquire/release up to a small length: no two live
// buffers ever share (identity, generation).
TEST(Ownership, NoTwoLiveBuffersShareATag) {
  constexpr int kLen = 12;
  for (unsigned mask = 0; mask < (1u << kLen); ++mask) {
    BufferPool pool(pool_strategy(2, 128));
    std::vector<IoBuffer> live;
    for (int step = 0; step < kLen; ++step) {
      const bool acquire = ((mask >> step) & 1) != 0 || live.empty();
      if (acquire) {
        live.push_back(pool.acquire(82));
      } else {
        // Release the oldest, so the free list order varies with the mask.
        pool.release(std::move(live.front()));
        live.erase(live.begin());
      }
      std::set<std::pair<std::uint64_t, std::uint64_t>> tags;
      for (const auto& b : live) tags.emplace(b.identity(), b.generation());
      ASSERT_EQ(tags.size(), live.size()) << "mask " << mask << " step " << step;
    }
  }
}

TEST(Grow, PreservesContentAndCountsTheCopy) {
  BufferPool pool(pool_strategy(2, 128));
  auto b = pool.acquire(128);
  ASSERT_EQ(b.capacity(), 128u);
  fill(b, 50, 7);
  b.consume(10);
  const auto copied = pool.stats().bytes_copied;
  auto g = pool.grow_exclusive(std::move(b), 256);
  EXPECT_FALSE(b.valid());  // NOLINT(bugprone-use-after-move)
  EXPECT_EQ(g.capacity(), 256u);
  EXPECT_EQ(pool.stats().bytes_copied - copied, 50u);
  EXPECT_EQ(g.read_cursor(), 10u);
  EXPECT_EQ(g.write_cursor(), 50u);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(g.data()[i], static_cast<std::uint8_t>(7 + i));
}

TEST(Grow, EmptyBufferCopiesNothing) {
  BufferPool pool(pool_strategy(2, 128));
  auto g = pool.grow_exclusive(pool.acquire(128), 512);
  EXPECT_EQ(pool.stats().bytes_copied, 0u);
  EXPECT_EQ(g.capacity(), 512u);
}

// Random writes, consumes and grows replayed against a flat byte array.
TEST(Grow, MatchesFlatArrayModel) {
  gen::Rng r(gen::base_seed() ^ 0x960);
  for (int round = 0; round < 2000; ++round) {
    BufferPool pool(pool_strategy(2, 128));
    auto b = pool.acquire(128);
    std::vector<std::uint8_t> model;  // bytes [0, write)
    std::size_t model_read = 0;
    std::uint64_t expected_copied = 0;
    for (int step = 0; step < 30; ++step) {
      switch (r.below(3)) {
        case 0: {
          const std::size_t n = r.below(b.writable_size() + 1);
          auto w = b.writable();
          for (std::size_t i = 0; i < n; ++i) {
            w[i] = r.u8();
            model.push_back(w[i]);
          }
          b.commit(n);
          break;
        }
        case 1: {
          const std::size_t n = r.below(b.readable_size() + 1);
          b.consume(n);
          model_read += n;
          if (model_read == model.size()) {
            model.clear();
            model_read = 0;
          }
          break;
        }
        default: {
          const std::size_t cap = b.capacity() + 1 + r.below(512);
          expected_copied += b.write_cursor();
          b = pool.grow_exclusive(std::move(b), cap);
          break;
        }
      }
      ASSERT_EQ(b.write_cursor(), model.size());
      ASSERT_EQ(b.read_cursor(), model_read);
      ASSERT_TRUE(std::equal(model.begin(), model.end(), b.data().begin()));
      ASSERT_LE(b.read_cursor(), b.write_cursor());
      ASSERT_LE(b.write_cursor(), b.capacity());
    }
    EXPECT_EQ(pool.stats().bytes_copied, expected_copied);
  }
}

TEST(Compact, MovesUnreadBytesToFront) {
  BufferPool pool(pool_strategy(2, 128));
  auto b = pool.acquire(128);
  fill(b, 20, 0);
  b.consume(5);
  EXPECT_EQ(b.compact(), 15u);
  EXPECT_EQ(b.read_cursor(), 0u);
  EXPECT_EQ(b.write_cursor(), 15u);
  EXPECT_EQ(b.readable()[0], 5);
}
