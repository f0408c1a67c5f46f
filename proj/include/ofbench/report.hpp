#pragma once

// Aggregation and emission: latency CDFs, loop statistics, phase profiles,
// throughput per Watt, CSV / JSON.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ofbench/bench.hpp"
#include "ofbench/engine.hpp"

namespace ofb::report {

class EmptySamples : public std::invalid_argument {
 public:
  EmptySamples() : std::invalid_argument("latency CDF needs at least one sample") {}
};

class InsufficientLoops : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonpositiveWatts : public std::invalid_argument {
 public:
  NonpositiveWatts() : std::invalid_argument("watts must be > 0") {}
};

class LatencyCdf {
 public:
  /// Sorts `samples`.  Throws EmptySamples.
  explicit LatencyCdf(std::vector<double> samples);

  /// q(p) = sorted[ceil(p * n) - 1] for p > 0, q(0) = min.  p is clamped to [0, 1].
  [[nodiscard]] double q(double p) const noexcept;
  [[nodiscard]] std::size_t size() const noexcept { return sorted_.size(); }
  [[nodiscard]] const std::vector<double>& sorted() const noexcept { return sorted_; }

 private:
  std::vector<double> sorted_;
};

[[nodiscard]] LatencyCdf build_cdf(std::vector<double> samples);

struct PhaseProfile {
  double decode = 0;
  double app = 0;
  double encode = 0;
  double io = 0;

  [[nodiscard]] double attributed() const noexcept { return decode + app + encode + io; }
  /// What the sampled wall time does not account for (scheduling, epoll, locks...).
  [[nodiscard]] double unattributed() const noexcept;

  [[nodiscard]] static PhaseProfile from(const engine::PhaseTotals& totals) noexcept;
};

struct Summary {
  std::size_t loops_used = 0;
  double mean_rps = 0;
  double stddev_rps = 0;  // sample standard deviation
  double min_rps = 0;
  double max_rps = 0;
  double median_rps = 0;
  std::optional<LatencyCdf> cdf;  // absent when no loop recorded latencies
  std::optional<PhaseProfile> phases;
  std::optional<engine::EngineStats> engine;  // summed over the used loops
  std::uint64_t probes = 0;
  std::uint64_t responses = 0;
  std::uint64_t flow_mods = 0;
  std::uint64_t packet_outs = 0;

  /// Engine allocations per packet-in, when engine counters are available.
  [[nodiscard]] std::optional<double> allocs_per_packet() const noexcept;
};

/// Aggregates the loops after the first `warmup`.  Throws InsufficientLoops.
[[nodiscard]] Summary aggregate_loops(std::span<const bench::LoopResult> loops, std::size_t warmup);
[[nodiscard]] Summary aggregate_run(const bench::RunResult& run, std::size_t warmup);

[[nodiscard]] double median(std::vector<double> values);
[[nodiscard]] double sample_stddev(std::span<const double> values);

struct EnergyReport {
  double watts = 0;
  double throughput_rps = 0;
  double efficiency_rps_per_w = 0;
};

/// Throws NonpositiveWatts.
[[nodiscard]] EnergyReport efficiency(double throughput_rps, double watts);
[[nodiscard]] EnergyReport efficiency(const Summary& summary, double watts);

// ---------------------------------------------------------------------------
// Emission

inline constexpr int kSchemaVersion = 1;

/// One CSV row: a retained loop of one sweep point.
struct Row {
  std::string axis = "none";
  std::uint64_t point = 0;
  std::uint64_t loop = 0;
  double throughput_rps = 0;
  std::optional<double> p50_us;
  std::optional<double> p99_us;
  std::uint64_t flowmods = 0;
  std::uint64_t packetouts = 0;
  std::optional<std::uint64_t> allocs;
  std::optional<std::uint64_t> bytes_copied;
  std::optional<std::uint64_t> handoffs;
  std::optional<double> watts;
  std::optional<double> efficiency_rps_per_w;

  friend bool operator==(const Row&, const Row&) = default;
};

/// Per-point aggregate, carried in JSON alongside the rows.
struct PointSummary {
  std::string axis = "none";
  std::uint64_t point = 0;
  std::size_t loops_used = 0;
  double mean_rps = 0;
  double stddev_rps = 0;
  double min_rps = 0;
  double max_rps = 0;
  double median_rps = 0;
  std::optional<double> p50_us;
  std::optional<double> p99_us;
  std::optional<double> allocs_per_packet;
  std::optional<PhaseProfile> phases;
  std::optional<double> efficiency_rps_per_w;
  bool audit_failed = false;
  std::string error;

  friend bool operator==(const PointSummary&, const PointSummary&) = default;
};

struct Report {
  std::string mode = "loopback";  // or "two-machine"
  std::string config_hash;
  std::vector<Row> rows;
  std::vector<PointSummary> points;
  bool audit_failed = false;
};

/// Rows for the retained loops of one run.
[[nodiscard]] std::vector<Row> rows_for(std::string_view axis, std::uint64_t point, const bench::RunResult& run,
                                        std::size_t warmup, std::optional<double> watts);
[[nodiscard]] PointSummary summarize_point(std::string_view axis, std::uint64_t point, const bench::RunResult& run,
                                           std::size_t warmup, std::optional<double> watts);

/// Appends a sweep point (or a failed one) to the report.
void add_point(Report& report, const bench::SweepPoint& point, std::size_t warmup, std::optional<double> watts);

/// 6 significant digits, as emitted.
[[nodiscard]] double round6(double v) noexcept;

[[nodiscard]] std::string csv_header();
[[nodiscard]] std::string emit_csv(const Report& report);
[[nodiscard]] std::string emit_json(const Report& report);
/// Throws std::invalid_argument on malformed input or a schema mismatch.
[[nodiscard]] Report parse_json(const std::string& text);

/// Human-readable summary table, one line per point.
[[nodiscard]] std::string render_text(const Report& report);

}  // namespace ofb::report
