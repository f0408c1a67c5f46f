#pragma once

// Per-connection processing shared by the threading models.

#include <chrono>
#include <cstdint>
#include <memory>
#include <vector>

#include "ofbench/bufferpool.hpp"
#include "ofbench/counter.hpp"
#include "ofbench/engine.hpp"
#include "ofbench/learnswitch.hpp"
#include "ofbench/net.hpp"

namespace ofb::engine::detail {

using Clock = std::chrono::steady_clock;

inline std::uint64_t now_ns() noexcept {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now().time_since_epoch()).count());
}

struct WorkerCounters {
  Counter packet_ins;
  Counter flow_mods;
  Counter packet_outs;
  Counter handoffs;
  Counter lock_acquisitions;
  Counter protocol_errors;
  Counter malformed_closes;
  Counter connections_closed;
  Counter backpressure_stalls;
  Counter decode_ns;
  Counter app_ns;
  Counter encode_ns;
  Counter io_ns;
  Counter sampled_ns;
  Counter samples;
};

/// Everything a thread needs to process packets.  Confined to its thread.
struct WorkerContext {
  WorkerContext(std::size_t idx, const StrategyMatrix& m, learn::MacTable& t)
      : index(idx), matrix(m), table(t), pool(m.buffers) {}

  std::size_t index;
  const StrategyMatrix& matrix;
  learn::MacTable& table;
  buffers::BufferPool pool;
  WorkerCounters counters;

  std::uint64_t iteration = 0;
  std::uint64_t locks_seen = 0;

  /// Picks whether the next event-loop iteration is timed.
  bool begin_iteration() noexcept {
    const auto rate = matrix.timing_sample_rate;
    return rate != 0 && (iteration++ % rate) == 0;
  }
  void sync_lock_counter() noexcept {
    const auto now = learn::MacTable::lock_acquisitions_this_thread();
    counters.lock_acquisitions.add(now - locks_seen);
    locks_seen = now;
  }
  [[nodiscard]] EngineStats snapshot() const;
};

struct Connection {
  net::UniqueFd fd;
  std::uint64_t id = 0;
  ConnState state;
  std::vector<std::uint8_t> carried;  // bytes read during the handshake, not yet processed
  buffers::IoBuffer in;
  buffers::IoBuffer out;
  bool want_write = false;
  bool registered = false;
  std::uint32_t interest = 0;  // epoll mask currently armed
  bool closed = false;
};

/// Per-event timing scratch.  All zero unless the iteration is sampled.
struct Sample {
  bool active = false;
  std::uint64_t decode = 0;
  std::uint64_t app = 0;
  std::uint64_t encode = 0;
  std::uint64_t io = 0;
};

enum class Status { Open, Closed };

/// Acquires in/out buffers from the context's pool and moves carried
/// handshake bytes into the input buffer.
void attach_buffers(Connection& conn, WorkerContext& ctx);

/// Returns the connection's buffers to the context's pool and closes it.
void close_connection(Connection& conn, WorkerContext& ctx, const char* reason);

/// Handles one readiness event for a READY connection: flushes pending
/// output, reads, processes every complete frame, flushes.  Leaves
/// conn.want_write set when output is blocked; input is not read again until
/// it drains.
Status on_event(Connection& conn, WorkerContext& ctx, std::uint32_t events);

/// Processes the complete frames already buffered in conn.in.
Status process_buffered(Connection& conn, WorkerContext& ctx, Sample& sample);

/// Writes as much of conn.out as the socket accepts.
Status flush(Connection& conn, WorkerContext& ctx, Sample& sample);

/// The learning-switch transaction for one packet-in.  `frame` is the whole
/// message; the flow-mod is appended to `out`.  Uses the zero-copy path or
/// the per-packet object path according to the pool's strategy.
/// Returns false if the message is malformed.
bool answer_packet_in(const wire::Frame& frame, std::uint64_t datapath_id, buffers::IoBuffer& out,
                      WorkerContext& ctx, Sample& sample);

/// Makes room for `need` bytes at the end of conn.out.  Returns false (with
/// conn.want_write set) when the socket cannot take more yet, or when the
/// connection closed; `status` tells which.
bool reserve_output(Connection& conn, WorkerContext& ctx, Sample& sample, std::size_t need, Status& status);

/// Answers ECHO_REQUEST; ignores every other non-packet-in message.
Status handle_control(Connection& conn, WorkerContext& ctx, const wire::Frame& frame, Sample& sample);

void record_sample(WorkerContext& ctx, const Sample& s, std::uint64_t wall_ns) noexcept;

[[nodiscard]] wire::LearnedFlow make_learned_flow(const StrategyMatrix& m, std::uint32_t xid,
                                                  std::uint32_t buffer_id, std::uint16_t in_port,
                                                  std::uint64_t src, std::uint64_t dst,
                                                  const learn::Decision& d);

}  // namespace ofb::engine::detail
