#pragma once

// CBench-compatible switch emulator and load driver.
//
// Each emulated switch is one TCP connection that completes the OpenFlow
// handshake and then sends 82-byte packet-ins.  Emulator threads own disjoint
// sets of switches; they meet only at the per-loop barrier where results are
// aggregated.

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ofbench/engine.hpp"
#include "ofbench/ofwire.hpp"

namespace ofb::bench {

enum class Mode : std::uint8_t { Throughput, Latency };

std::string_view to_string(Mode mode);

struct BenchConfig {
  std::size_t switches = 64;
  std::uint64_t unique_macs = 1'000'000;
  /// Emulator threads; 0 picks min(switches, hardware threads).
  std::size_t worker_threads = 0;
  std::size_t loops = 10;
  double loop_duration_s = 10.0;
  std::uint32_t handshake_delay_ms = 0;
  Mode mode = Mode::Throughput;
  std::string controller_host = "127.0.0.1";
  std::uint16_t controller_port = 6633;

  /// Outstanding probes allowed per switch in throughput mode.
  std::size_t window = 1u << 16;
  /// Loops excluded from aggregates.
  std::size_t warmup_loops = 1;
  /// Probes per switch per loop; 0 means until the loop deadline.
  std::uint64_t probe_limit = 0;
  /// Throughput mode times one probe in this many.
  std::uint32_t latency_sample_every = 64;
  /// How long a loop waits for outstanding responses after it stops sending.
  double drain_timeout_s = 2.0;
  /// The first this-many probes of each switch go out one at a time, each
  /// waiting for its response, before the window opens.
  std::uint64_t ordered_prefix = 0;
  /// Record (dpid, xid, out_port) for every flow-mod.
  bool capture = false;
  /// Reruns allowed for a loop that lost a connection.
  std::size_t max_reruns = 3;
  std::chrono::milliseconds connect_timeout{5000};

  /// Throws std::invalid_argument.
  void validate() const;
  [[nodiscard]] std::size_t effective_threads() const;
};

// ---------------------------------------------------------------------------
// Probe generation

inline constexpr std::uint16_t kPortsPerSwitch = 16;

struct MacPair {
  std::uint64_t src;
  std::uint64_t dst;
  friend bool operator==(const MacPair&, const MacPair&) = default;
};

/// 48-bit MAC with the switch id in the high 16 bits.
[[nodiscard]] constexpr std::uint64_t encode_mac(std::uint64_t switch_id, std::uint64_t index) noexcept {
  return ((switch_id & 0xffff) << 32) | (index & 0xffffffffu);
}

[[nodiscard]] MacPair gen_macs(std::uint64_t switch_id, std::uint64_t sequence_index, std::uint64_t unique_macs);

/// Port the probe claims to arrive on; a pure function of the source MAC so
/// that every switch's learned bindings are order independent.
[[nodiscard]] constexpr std::uint16_t probe_in_port(std::uint64_t src_mac) noexcept {
  return static_cast<std::uint16_t>(1 + (src_mac & 0xffffffffu) % kPortsPerSwitch);
}

[[nodiscard]] constexpr std::uint64_t datapath_id_for(std::uint64_t switch_id) noexcept { return switch_id + 1; }

using ProbeBytes = std::array<std::uint8_t, wire::kProbePacketInSize>;

/// The probe with sequence number `seq` from switch `switch_id`.
/// xid = buffer_id = seq (mod 2^32).
[[nodiscard]] ProbeBytes encode_probe(std::uint64_t switch_id, std::uint64_t seq, std::uint64_t unique_macs);

/// FEATURES_REPLY an emulated switch sends.
[[nodiscard]] wire::FeaturesReply features_for(std::uint64_t switch_id, std::uint32_t xid);

// ---------------------------------------------------------------------------
// Response audit

struct AuditReport {
  std::uint64_t flow_mods = 0;
  std::uint64_t packet_outs = 0;
  std::uint64_t other = 0;
  std::uint64_t flow_mod_bytes = 0;
  std::uint64_t packet_out_bytes = 0;
  /// Flow-mods or packet-outs whose xid matched no outstanding probe.
  std::uint64_t unexpected_xids = 0;
  /// Loops where responses exceeded probes.
  std::uint64_t over_responses = 0;

  [[nodiscard]] std::uint64_t responses() const noexcept { return flow_mods + packet_outs; }
  /// Share of responses that are flow-mods; 1 when there are none.
  [[nodiscard]] double flow_mod_ratio() const noexcept;
  /// Byte volume of packet-outs relative to flow-mods; 0 when there are no flow-mods.
  [[nodiscard]] double byte_ratio() const noexcept;
  /// The controller answered probes with packet-outs.
  [[nodiscard]] bool packet_out_violation() const noexcept { return packet_outs > 0; }
  [[nodiscard]] bool violated() const noexcept { return packet_out_violation() || over_responses > 0; }

  AuditReport& operator+=(const AuditReport& o) noexcept;
};

/// Classifies one response message.
void audit_one(AuditReport& report, const wire::Header& header);

[[nodiscard]] AuditReport audit_responses(std::span<const wire::Header> stream);

// ---------------------------------------------------------------------------
// Results

struct CapturedResponse {
  std::uint64_t datapath_id;
  std::uint32_t xid;
  std::uint16_t out_port;
  friend auto operator<=>(const CapturedResponse&, const CapturedResponse&) = default;
};

struct LoopResult {
  std::uint64_t probes = 0;
  std::uint64_t responses = 0;
  std::uint64_t flow_mods = 0;
  std::uint64_t packet_outs = 0;
  double elapsed_s = 0;
  double throughput_rps = 0;
  std::vector<double> latencies_us;
  /// Engine counters accumulated during this loop, when the engine is co-resident.
  std::optional<engine::EngineStats> engine;
  AuditReport audit;
  /// Max outstanding probes seen on any one switch.
  std::uint64_t max_in_flight = 0;
  bool valid = true;
  std::size_t attempts = 1;
};

struct RunResult {
  BenchConfig config;
  std::vector<LoopResult> loops;
  std::vector<CapturedResponse> captured;
  AuditReport audit;  // over all loops
  std::uint64_t peak_rss_bytes = 0;

  [[nodiscard]] bool audit_failed() const noexcept { return audit.violated(); }
};

class ConnectionLost : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Returns the co-resident engine's cumulative counters, if any.
using EngineTap = std::function<std::optional<engine::EngineStats>()>;

/// Connects every switch, runs config.loops loops and returns per-loop
/// results.  Throws ConnectionLost if a switch cannot connect or complete
/// the handshake.
[[nodiscard]] RunResult run_bench(const BenchConfig& config, const EngineTap& tap = {});

// ---------------------------------------------------------------------------
// Sweeps

enum class Axis : std::uint8_t { None, Concurrency, Heterogeneity, Connectivity };

std::string_view to_string(Axis axis);
Axis parse_axis(std::string_view text);

struct SweepPoint {
  Axis axis = Axis::None;
  std::uint64_t point = 0;
  std::optional<RunResult> result;
  std::string error;
  /// The port could be bound again after the co-located engine stopped.
  bool rebind_ok = true;
};

struct SweepOptions {
  /// Run an engine in-process per point with this configuration.
  std::optional<engine::StrategyMatrix> colocated;
  std::chrono::milliseconds ready_timeout{5000};
  /// Called after each point; for progress output.
  std::function<void(const SweepPoint&)> on_point;
};

[[nodiscard]] std::vector<SweepPoint> run_sweep(Axis axis, std::span<const std::uint64_t> points,
                                                const BenchConfig& base, const SweepOptions& options);

/// Connects and exchanges HELLO; true once the controller answers.
[[nodiscard]] bool wait_ready(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout);

/// Peak resident set size of this process.
[[nodiscard]] std::uint64_t peak_rss_bytes();

}  // namespace ofb::bench
