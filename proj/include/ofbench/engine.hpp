#pragma once

// Reactive learning-switch controller runtime.
//
// A listener thread accepts switch connections and runs the minimal OpenFlow
// handshake (HELLO <-> HELLO + FEATURES_REQUEST <-> FEATURES_REPLY).  Once a
// connection is READY it is handed to one of three threading models:
//
//   SingleIoQueue     one IO thread reads and writes every socket; each
//                     packet-in travels to a worker through a shared bounded
//                     queue and the flow-mod comes back through another.
//   SharedPoolQueue   workers take turns as the single epoll poller and push
//                     readiness events onto a shared list; whichever worker
//                     pops an event reads, processes and writes it.
//   RunToCompletion   each connection is pinned to worker dpid % workers,
//                     which does everything with no cross-thread hand-off.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ofbench/bufferpool.hpp"
#include "ofbench/learnswitch.hpp"
#include "ofbench/ofwire.hpp"

namespace ofb::engine {

enum class ThreadingKind : std::uint8_t { SingleIoQueue, SharedPoolQueue, RunToCompletion };

std::string_view to_string(ThreadingKind kind);
ThreadingKind parse_threading_kind(std::string_view text);

struct ThreadingModel {
  ThreadingKind kind = ThreadingKind::RunToCompletion;
  std::size_t worker_count = 8;
  bool pin_threads = false;

  friend bool operator==(const ThreadingModel&, const ThreadingModel&) = default;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct StrategyMatrix {
  ThreadingModel threading;
  buffers::BufferStrategy buffers;
  learn::TableStrategy table = learn::TableStrategy::ShardedPerWorker;
  std::string listen_address = "0.0.0.0";
  std::uint16_t listen_port = 6633;

  /// Upper bound on worker_count; raise it rather than patching code.
  std::size_t max_workers = 1024;
  /// Capacity of each hand-off queue (SingleIoQueue).
  std::size_t queue_capacity = 4096;
  /// One in `timing_sample_rate` event-loop iterations is timed; 0 disables.
  std::uint32_t timing_sample_rate = 64;
  /// Lock stripes for SharedLocked tables.
  std::size_t table_stripes = 64;
  std::uint16_t flow_idle_timeout = 60;
  std::uint16_t flow_hard_timeout = 0;

  /// Throws ConfigError on an invalid combination.
  void validate() const;

  friend bool operator==(const StrategyMatrix&, const StrategyMatrix&) = default;
};

// ---------------------------------------------------------------------------
// Handshake

enum class Phase : std::uint8_t { ExpectHello, ExpectFeaturesReply, Ready };

std::string_view to_string(Phase phase);

struct ConnState {
  Phase phase = Phase::ExpectHello;
  std::uint64_t datapath_id = 0;
  int owner_worker = -1;

  friend bool operator==(const ConnState&, const ConnState&) = default;
};

struct HandshakeOutcome {
  ConnState state;
  std::vector<wire::Message> replies;
  bool protocol_error = false;
  std::string reason;
};

/// Pure transition function for a connection that is not READY yet.
[[nodiscard]] HandshakeOutcome handshake_step(const ConnState& state, const wire::Message& msg);

/// xid the engine stamps on its FEATURES_REQUEST.
inline constexpr std::uint32_t kFeaturesRequestXid = 0xfeed0001;

// ---------------------------------------------------------------------------
// Thread placement

[[nodiscard]] std::size_t core_for_worker(std::size_t worker_index, std::size_t available_cores) noexcept;

/// Pins the calling thread to core_for_worker(worker_index, cores).  On
/// failure logs a warning and returns false; never throws.
bool pin_worker(std::size_t worker_index) noexcept;

// ---------------------------------------------------------------------------
// Statistics

struct PhaseTotals {
  std::uint64_t decode_ns = 0;
  std::uint64_t app_ns = 0;
  std::uint64_t encode_ns = 0;
  std::uint64_t io_ns = 0;
  std::uint64_t sampled_ns = 0;  // wall time of the sampled iterations
  std::uint64_t samples = 0;

  PhaseTotals& operator+=(const PhaseTotals& o) noexcept;
  friend PhaseTotals operator-(PhaseTotals a, const PhaseTotals& b) noexcept;
};

struct EngineStats {
  std::uint64_t packet_ins = 0;
  std::uint64_t flow_mods = 0;
  std::uint64_t packet_outs = 0;
  std::uint64_t handoffs = 0;
  std::uint64_t lock_acquisitions = 0;
  std::uint64_t protocol_errors = 0;
  std::uint64_t malformed_closes = 0;
  std::uint64_t connections_accepted = 0;
  std::uint64_t connections_ready = 0;
  std::uint64_t connections_closed = 0;
  std::uint64_t backpressure_stalls = 0;
  buffers::AllocStats alloc;
  PhaseTotals phases;

  EngineStats& operator+=(const EngineStats& o) noexcept;
  friend EngineStats operator-(EngineStats a, const EngineStats& b) noexcept;
};

class BindFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Engine {
 public:
  explicit Engine(StrategyMatrix matrix);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Binds the listen socket and spawns the threads.  Throws BindFailure.
  void start();
  /// Flushes and closes every connection, joins all threads.  Idempotent.
  void stop();

  [[nodiscard]] bool running() const noexcept;
  [[nodiscard]] std::uint16_t port() const noexcept;
  [[nodiscard]] const StrategyMatrix& matrix() const noexcept;

  /// Merged per-thread counters; safe to call while running.
  [[nodiscard]] EngineStats stats() const;

  /// Number of learned entries.  Only meaningful once stopped.
  [[nodiscard]] std::size_t table_size() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

/// Runs an engine until SIGINT/SIGTERM.  Returns the final stats.
EngineStats run_engine(const StrategyMatrix& matrix);

}  // namespace ofb::engine
