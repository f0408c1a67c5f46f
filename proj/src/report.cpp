#include "ofbench/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace ofb::report {

using json = nlohmann::ordered_json;

LatencyCdf::LatencyCdf(std::vector<double> samples) : sorted_(std::move(samples)) {
  if (sorted_.empty()) throw EmptySamples();
  std::sort(sorted_.begin(), sorted_.end());
}

double LatencyCdf::q(double p) const noexcept {
  p = std::clamp(p, 0.0, 1.0);
  if (p == 0.0) return sorted_.front();
  const auto n = static_cast<double>(sorted_.size());
  auto idx = static_cast<std::size_t>(std::ceil(p * n));
  idx = std::clamp<std::size_t>(idx, 1, sorted_.size());
  return sorted_[idx - 1];
}

LatencyCdf build_cdf(std::vector<double> samples) { return LatencyCdf(std::move(samples)); }

double PhaseProfile::unattributed() const noexcept { return std::max(0.0, 1.0 - attributed()); }

PhaseProfile PhaseProfile::from(const engine::PhaseTotals& t) noexcept {
  PhaseProfile p;
  if (t.sampled_ns == 0) return p;
  const auto wall = static_cast<double>(t.sampled_ns);
  p.decode = static_cast<double>(t.decode_ns) / wall;
  p.app = static_cast<double>(t.app_ns) / wall;
  p.encode = static_cast<double>(t.encode_ns) / wall;
  p.io = static_cast<double>(t.io_ns) / wall;
  return p;
}

std::optional<double> Summary::allocs_per_packet() const noexcept {
  if (!engine || engine->packet_ins == 0) return std::nullopt;
  return static_cast<double>(engine->alloc.allocations) / static_cast<double>(engine->packet_ins);
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

Summary aggregate_loops(std::span<const bench::LoopResult> loops, std::size_t warmup) {
  if (loops.size() <= warmup) {
    throw InsufficientLoops("need more than " + std::to_string(warmup) + " loops, have " +
                            std::to_string(loops.size()));
  }
  const auto used = loops.subspan(warmup);
  Summary s;
  s.loops_used = used.size();
  std::vector<double> rps;
  std::vector<double> latencies;
  bool have_engine = true;
  engine::EngineStats eng;
  for (const auto& l : used) {
    rps.push_back(l.throughput_rps);
    latencies.insert(latencies.end(), l.latencies_us.begin(), l.latencies_us.end());
    s.probes += l.probes;
    s.responses += l.responses;
    s.flow_mods += l.flow_mods;
    s.packet_outs += l.packet_outs;
    if (l.engine) {
      eng += *l.engine;
    } else {
      have_engine = false;
    }
  }
  s.mean_rps = std::accumulate(rps.begin(), rps.end(), 0.0) / static_cast<double>(rps.size());
  s.stddev_rps = sample_stddev(rps);
  s.min_rps = *std::min_element(rps.begin(), rps.end());
  s.max_rps = *std::max_element(rps.begin(), rps.end());
  s.median_rps = median(rps);
  if (!latencies.empty()) s.cdf.emplace(std::move(latencies));
  if (have_engine) {
    s.engine = eng;
    s.phases = PhaseProfile::from(eng.phases);
  }
  return s;
}

Summary aggregate_run(const bench::RunResult& run, std::size_t warmup) { return aggregate_loops(run.loops, warmup); }

EnergyReport efficiency(double throughput_rps, double watts) {
  if (!(watts > 0)) throw NonpositiveWatts();
  return EnergyReport{watts, throughput_rps, throughput_rps / watts};
}

EnergyReport efficiency(const Summary& summary, double watts) { return efficiency(summary.mean_rps, watts); }

double round6(double v) noexcept {
  if (v == 0 || !std::isfinite(v)) return v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return std::strtod(buf, nullptr);
}

std::vector<Row> rows_for(std::string_view axis, std::uint64_t point, const bench::RunResult& run,
                          std::size_t warmup, std::optional<double> watts) {
  std::vector<Row> rows;
  for (std::size_t i = warmup; i < run.loops.size(); ++i) {
    const auto& l = run.loops[i];
    Row r;
    r.axis = std::string(axis);
    r.point = point;
    r.loop = i;
    r.throughput_rps = round6(l.throughput_rps);
    if (!l.latencies_us.empty()) {
      const LatencyCdf cdf(l.latencies_us);
      r.p50_us = round6(cdf.q(0.5));
      r.p99_us = round6(cdf.q(0.99));
    }
    r.flowmods = l.flow_mods;
    r.packetouts = l.packet_outs;
    if (l.engine) {
      r.allocs = l.engine->alloc.allocations;
      r.bytes_copied = l.engine->alloc.bytes_copied;
      r.handoffs = l.engine->handoffs;
    }
    if (watts) {
      r.watts = round6(*watts);
      r.efficiency_rps_per_w = round6(efficiency(l.throughput_rps, *watts).efficiency_rps_per_w);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

PointSummary summarize_point(std::string_view axis, std::uint64_t point, const bench::RunResult& run,
                             std::size_t warmup, std::optional<double> watts) {
  const Summary s = aggregate_run(run, warmup);
  PointSummary p;
  p.axis = std::string(axis);
  p.point = point;
  p.loops_used = s.loops_used;
  p.mean_rps = round6(s.mean_rps);
  p.stddev_rps = round6(s.stddev_rps);
  p.min_rps = round6(s.min_rps);
  p.max_rps = round6(s.max_rps);
  p.median_rps = round6(s.median_rps);
  if (s.cdf) {
    p.p50_us = round6(s.cdf->q(0.5));
    p.p99_us = round6(s.cdf->q(0.99));
  }
  if (auto a = s.allocs_per_packet()) p.allocs_per_packet = round6(*a);
  if (s.phases) {
    p.phases = PhaseProfile{round6(s.phases->decode), round6(s.phases->app), round6(s.phases->encode),
                            round6(s.phases->io)};
  }
  if (watts) p.efficiency_rps_per_w = round6(efficiency(s, *watts).efficiency_rps_per_w);
  p.audit_failed = run.audit_failed();
  return p;
}

void add_point(Report& report, const bench::SweepPoint& sp, std::size_t warmup, std::optional<double> watts) {
  const auto axis = bench::to_string(sp.axis);
  if (sp.result) {
    auto rows = rows_for(axis, sp.point, *sp.result, warmup, watts);
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
    try {
      report.points.push_back(summarize_point(axis, sp.point, *sp.result, warmup, watts));
    } catch (const InsufficientLoops& e) {
      PointSummary p;
      p.axis = std::string(axis);
      p.point = sp.point;
      p.error = e.what();
      report.points.push_back(p);
    }
    report.audit_failed = report.audit_failed || sp.result->audit_failed();
  } else {
    PointSummary p;
    p.axis = std::string(axis);
    p.point = sp.point;
    p.error = sp.error;
    report.points.push_back(p);
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

constexpr const char* kColumns[] = {"axis",     "point",     "loop",         "throughput_rps",
                                    "p50_us",   "p99_us",    "flowmods",     "packetouts",
                                    "allocs",   "bytes_copied", "handoffs",  "watts",
                                    "efficiency_rps_per_w", "schema_version"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

template <class T>
std::string fmt_opt(const std::optional<T>& v) {
  if (!v) return {};
  if constexpr (std::is_floating_point_v<T>) {
    return fmt(*v);
  } else {
    return std::to_string(*v);
  }
}

template <class T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> json_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

std::string csv_header() {
  std::string out;
  for (const char* c : kColumns) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out + '\n';
}

std::string emit_csv(const Report& report) {
  std::string out = csv_header();
  for (const auto& r : report.rows) {
    out += r.axis + ',' + std::to_string(r.point) + ',' + std::to_string(r.loop) + ',' + fmt(r.throughput_rps) +
           ',' + fmt_opt(r.p50_us) + ',' + fmt_opt(r.p99_us) + ',' + std::to_string(r.flowmods) + ',' +
           std::to_string(r.packetouts) + ',' + fmt_opt(r.allocs) + ',' + fmt_opt(r.bytes_copied) + ',' +
           fmt_opt(r.handoffs) + ',' + fmt_opt(r.watts) + ',' + fmt_opt(r.efficiency_rps_per_w) + ',' +
           std::to_string(kSchemaVersion) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json row_json(const Row& r) {
  json j;
  j["axis"] = r.axis;
  j["point"] = r.point;
  j["loop"] = r.loop;
  j["throughput_rps"] = round6(r.throughput_rps);
  j["p50_us"] = opt_json(r.p50_us);
  j["p99_us"] = opt_json(r.p99_us);
  j["flowmods"] = r.flowmods;
  j["packetouts"] = r.packetouts;
  j["allocs"] = opt_json(r.allocs);
  j["bytes_copied"] = opt_json(r.bytes_copied);
  j["handoffs"] = opt_json(r.handoffs);
  j["watts"] = opt_json(r.watts);
  j["efficiency_rps_per_w"] = opt_json(r.efficiency_rps_per_w);
  j["schema_version"] = kSchemaVersion;
  return j;
}

Row row_from(const json& j) {
  Row r;
  r.axis = j.at("axis").get<std::string>();
  r.point = j.at("point").get<std::uint64_t>();
  r.loop = j.at("loop").get<std::uint64_t>();
  r.throughput_rps = j.at("throughput_rps").get<double>();
  r.p50_us = json_opt<double>(j, "p50_us");
  r.p99_us = json_opt<double>(j, "p99_us");
  r.flowmods = j.at("flowmods").get<std::uint64_t>();
  r.packetouts = j.at("packetouts").get<std::uint64_t>();
  r.allocs = json_opt<std::uint64_t>(j, "allocs");
  r.bytes_copied = json_opt<std::uint64_t>(j, "bytes_copied");
  r.handoffs = json_opt<std::uint64_t>(j, "handoffs");
  r.watts = json_opt<double>(j, "watts");
  r.efficiency_rps_per_w = json_opt<double>(j, "efficiency_rps_per_w");
  return r;
}

json point_json(const PointSummary& p) {
  json j;
  j["axis"] = p.axis;
  j["point"] = p.point;
  j["loops_used"] = p.loops_used;
  j["mean_rps"] = round6(p.mean_rps);
  j["stddev_rps"] = round6(p.stddev_rps);
  j["min_rps"] = round6(p.min_rps);
  j["max_rps"] = round6(p.max_rps);
  j["median_rps"] = round6(p.median_rps);
  j["p50_us"] = opt_json(p.p50_us);
  j["p99_us"] = opt_json(p.p99_us);
  j["allocs_per_packet"] = opt_json(p.allocs_per_packet);
  if (p.phases) {
    j["phases"] = json{{"decode", round6(p.phases->decode)},
                       {"app", round6(p.phases->app)},
                       {"encode", round6(p.phases->encode)},
                       {"io", round6(p.phases->io)},
                       {"unattributed", round6(p.phases->unattributed())}};
  } else {
    j["phases"] = nullptr;
  }
  j["efficiency_rps_per_w"] = opt_json(p.efficiency_rps_per_w);
  j["audit_failed"] = p.audit_failed;
  j["error"] = p.error;
  return j;
}

PointSummary point_from(const json& j) {
  PointSummary p;
  p.axis = j.at("axis").get<std::string>();
  p.point = j.at("point").get<std::uint64_t>();
  p.loops_used = j.at("loops_used").get<std::size_t>();
  p.mean_rps = j.at("mean_rps").get<double>();
  p.stddev_rps = j.at("stddev_rps").get<double>();
  p.min_rps = j.at("min_rps").get<double>();
  p.max_rps = j.at("max_rps").get<double>();
  p.median_rps = j.at("median_rps").get<double>();
  p.p50_us = json_opt<double>(j, "p50_us");
  p.p99_us = json_opt<double>(j, "p99_us");
  p.allocs_per_packet = json_opt<double>(j, "allocs_per_packet");
  if (j.contains("phases") && !j.at("phases").is_null()) {
    const auto& ph = j.at("phases");
    p.phases = PhaseProfile{ph.at("decode").get<double>(), ph.at("app").get<double>(),
                            ph.at("encode").get<double>(), ph.at("io").get<double>()};
  }
  p.efficiency_rps_per_w = json_opt<double>(j, "efficiency_rps_per_w");
  p.audit_failed = j.at("audit_failed").get<bool>();
  p.error = j.at("error").get<std::string>();
  return p;
}

}  // namespace

std::string emit_json(const Report& report) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["mode"] = report.mode;
  j["config_hash"] = report.config_hash;
  j["audit_failed"] = report.audit_failed;
  json columns = json::array();
  for (const char* c : kColumns) columns.push_back(c);
  j["columns"] = columns;
  json rows = json::array();
  for (const auto& r : report.rows) rows.push_back(row_json(r));
  j["rows"] = rows;
  json points = json::array();
  for (const auto& p : report.points) points.push_back(point_json(p));
  j["points"] = points;
  return j.dump(2) + '\n';
}

Report parse_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("report JSON: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw std::invalid_argument("unsupported schema_version " + j.at("schema_version").dump());
    }
    Report r;
    r.mode = j.at("mode").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.audit_failed = j.at("audit_failed").get<bool>();
    for (const auto& row : j.at("rows")) r.rows.push_back(row_from(row));
    for (const auto& p : j.at("points")) r.points.push_back(point_from(p));
    return r;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("report JSON: ") + e.what());
  }
}

std::string render_text(const Report& report) {
  std::ostringstream os;
  os << "mode=" << report.mode << " config=" << report.config_hash << '\n';
  for (const auto& p : report.points) {
    os << p.axis << '=' << p.point;
    if (!p.error.empty()) {
      os << "  FAILED: " << p.error << '\n';
      continue;
    }
    os << "  loops=" << p.loops_used << "  mean=" << fmt(p.mean_rps) << " rps  sd=" << fmt(p.stddev_rps)
       << "  min=" << fmt(p.min_rps) << "  max=" << fmt(p.max_rps) << "  median=" << fmt(p.median_rps);
    if (p.p50_us) os << "  p50=" << fmt(*p.p50_us) << "us  p99=" << fmt(*p.p99_us) << "us";
    if (p.allocs_per_packet) os << "  allocs/pkt=" << fmt(*p.allocs_per_packet);
    if (p.efficiency_rps_per_w) os << "  eff=" << fmt(*p.efficiency_rps_per_w) << " rps/W";
    if (p.phases) {
      os << "\n    phases: decode=" << fmt(p.phases->decode) << " app=" << fmt(p.phases->app)
         << " encode=" << fmt(p.phases->encode) << " io=" << fmt(p.phases->io)
         << " unattributed=" << fmt(p.phases->unattributed());
    }
    if (p.audit_failed) os << "  AUDIT-VIOLATION";
    os << '\n';
  }
  return os.str();
}

}  // namespace ofb::report
