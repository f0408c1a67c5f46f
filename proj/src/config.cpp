#include "ofbench/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "ofbench/net.hpp"

namespace ofb::config {

namespace {

using engine::ConfigError;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
T parse_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  // Accept 1e6-style shorthands for MAC counts.
  const auto e = v.find_first_of("eE");
  if (e != std::string_view::npos) {
    std::uint64_t mant = 0;
    unsigned exp = 0;
    auto [p1, ec1] = std::from_chars(v.data(), v.data() + e, mant);
    auto [p2, ec2] = std::from_chars(v.data() + e + 1, v.data() + v.size(), exp);
    if (ec1 != std::errc{} || ec2 != std::errc{} || p1 != v.data() + e || p2 != v.data() + v.size() || exp > 19) {
      throw ConfigError(std::string(key) + ": not an unsigned integer: " + std::string(v));
    }
    out = mant;
    for (unsigned i = 0; i < exp; ++i) out *= 10;
  } else {
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
      throw ConfigError(std::string(key) + ": not an unsigned integer: " + std::string(v));
    }
  }
  if (out > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) {
    throw ConfigError(std::string(key) + ": out of range: " + std::string(v));
  }
  return static_cast<T>(out);
}

double parse_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double d = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw ConfigError(std::string(key) + ": not a number: " + s);
  }
  return d;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(std::string(key) + ": not a boolean: " + std::string(v));
}

std::string fmt_double(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

struct Field {
  std::function<void(Settings&, std::string_view)> set;
  std::function<std::string(const Settings&)> get;
};

template <class T>
Field uint_field(T engine::StrategyMatrix::*member, const char* key) {
  return {[member, key](Settings& s, std::string_view v) { s.engine.*member = parse_uint<T>(key, v); },
          [member](const Settings& s) { return std::to_string(s.engine.*member); }};
}

template <class T>
Field bench_uint(T bench::BenchConfig::*member, const char* key) {
  return {[member, key](Settings& s, std::string_view v) { s.bench.*member = parse_uint<T>(key, v); },
          [member](const Settings& s) { return std::to_string(s.bench.*member); }};
}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = [] {
    std::map<std::string, Field, std::less<>> f;
    f["engine.threading"] = {
        [](Settings& s, std::string_view v) { s.engine.threading.kind = engine::parse_threading_kind(v); },
        [](const Settings& s) { return std::string(engine::to_string(s.engine.threading.kind)); }};
    f["engine.workers"] = {
        [](Settings& s, std::string_view v) {
          s.engine.threading.worker_count = parse_uint<std::size_t>("engine.workers", v);
        },
        [](const Settings& s) { return std::to_string(s.engine.threading.worker_count); }};
    f["engine.pin"] = {
        [](Settings& s, std::string_view v) { s.engine.threading.pin_threads = parse_bool("engine.pin", v); },
        [](const Settings& s) { return std::string(s.engine.threading.pin_threads ? "true" : "false"); }};
    f["engine.buffers"] = {
        [](Settings& s, std::string_view v) {
          try {
            s.engine.buffers.kind = buffers::parse_buffer_kind(v);
          } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
          }
        },
        [](const Settings& s) { return std::string(buffers::to_string(s.engine.buffers.kind)); }};
    f["engine.pool_buffer_size"] = {
        [](Settings& s, std::string_view v) {
          s.engine.buffers.pool_buffer_size = parse_uint<std::size_t>("engine.pool_buffer_size", v);
        },
        [](const Settings& s) { return std::to_string(s.engine.buffers.pool_buffer_size); }};
    f["engine.pool_depth"] = {
        [](Settings& s, std::string_view v) {
          s.engine.buffers.pool_depth = parse_uint<std::size_t>("engine.pool_depth", v);
        },
        [](const Settings& s) { return std::to_string(s.engine.buffers.pool_depth); }};
    f["engine.table"] = {
        [](Settings& s, std::string_view v) {
          try {
            s.engine.table = learn::parse_table_strategy(v);
          } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
          }
        },
        [](const Settings& s) { return std::string(learn::to_string(s.engine.table)); }};
    f["engine.listen"] = {[](Settings& s, std::string_view v) { s.engine.listen_address = std::string(v); },
                          [](const Settings& s) { return s.engine.listen_address; }};
    f["engine.port"] = uint_field(&engine::StrategyMatrix::listen_port, "engine.port");
    f["engine.max_workers"] = uint_field(&engine::StrategyMatrix::max_workers, "engine.max_workers");
    f["engine.queue_capacity"] = uint_field(&engine::StrategyMatrix::queue_capacity, "engine.queue_capacity");
    f["engine.timing_sample_rate"] = uint_field(&engine::StrategyMatrix::timing_sample_rate, "engine.timing_sample_rate");
    f["engine.table_stripes"] = uint_field(&engine::StrategyMatrix::table_stripes, "engine.table_stripes");
    f["engine.idle_timeout"] = uint_field(&engine::StrategyMatrix::flow_idle_timeout, "engine.idle_timeout");
    f["engine.hard_timeout"] = uint_field(&engine::StrategyMatrix::flow_hard_timeout, "engine.hard_timeout");

    f["bench.switches"] = bench_uint(&bench::BenchConfig::switches, "bench.switches");
    f["bench.macs"] = bench_uint(&bench::BenchConfig::unique_macs, "bench.macs");
    f["bench.threads"] = bench_uint(&bench::BenchConfig::worker_threads, "bench.threads");
    f["bench.loops"] = bench_uint(&bench::BenchConfig::loops, "bench.loops");
    f["bench.delay"] = bench_uint(&bench::BenchConfig::handshake_delay_ms, "bench.delay");
    f["bench.window"] = bench_uint(&bench::BenchConfig::window, "bench.window");
    f["bench.warmup"] = bench_uint(&bench::BenchConfig::warmup_loops, "bench.warmup");
    f["bench.probe_limit"] = bench_uint(&bench::BenchConfig::probe_limit, "bench.probe_limit");
    f["bench.latency_sample_every"] =
        bench_uint(&bench::BenchConfig::latency_sample_every, "bench.latency_sample_every");
    f["bench.duration"] = {
        [](Settings& s, std::string_view v) { s.bench.loop_duration_s = parse_double("bench.duration", v); },
        [](const Settings& s) { return fmt_double(s.bench.loop_duration_s); }};
    f["bench.drain_timeout"] = {
        [](Settings& s, std::string_view v) { s.bench.drain_timeout_s = parse_double("bench.drain_timeout", v); },
        [](const Settings& s) { return fmt_double(s.bench.drain_timeout_s); }};
    f["bench.mode"] = {[](Settings& s, std::string_view v) {
                         if (v == "throughput") {
                           s.bench.mode = bench::Mode::Throughput;
                         } else if (v == "latency") {
                           s.bench.mode = bench::Mode::Latency;
                         } else {
                           throw ConfigError("bench.mode: expected throughput or latency, got " + std::string(v));
                         }
                       },
                       [](const Settings& s) { return std::string(bench::to_string(s.bench.mode)); }};
    f["bench.controller"] = {
        [](Settings& s, std::string_view v) {
          try {
            auto [host, port] = net::parse_endpoint(std::string(v));
            s.bench.controller_host = host;
            s.bench.controller_port = port;
          } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("bench.controller: ") + e.what());
          }
        },
        [](const Settings& s) { return s.bench.controller_host + ":" + std::to_string(s.bench.controller_port); }};

    f["report.watts"] = {[](Settings& s, std::string_view v) {
                           if (v.empty() || v == "none") {
                             s.watts.reset();
                             return;
                           }
                           const double w = parse_double("report.watts", v);
                           if (!(w > 0)) throw ConfigError("report.watts must be > 0");
                           s.watts = w;
                         },
                         [](const Settings& s) { return s.watts ? fmt_double(*s.watts) : std::string("none"); }};
    f["report.format"] = {[](Settings& s, std::string_view v) {
                            if (v != "csv" && v != "json" && v != "text") {
                              throw ConfigError("report.format: expected csv, json or text");
                            }
                            s.format = std::string(v);
                          },
                          [](const Settings& s) { return s.format; }};
    f["report.mode"] = {[](Settings& s, std::string_view v) {
                          if (v != "auto" && v != "loopback" && v != "two-machine") {
                            throw ConfigError("report.mode: expected auto, loopback or two-machine");
                          }
                          s.mode = std::string(v);
                        },
                        [](const Settings& s) { return s.mode; }};

    f["sweep.axis"] = {[](Settings& s, std::string_view v) {
                         try {
                           s.axis = bench::parse_axis(v);
                         } catch (const std::invalid_argument& e) {
                           throw ConfigError(e.what());
                         }
                       },
                       [](const Settings& s) { return std::string(bench::to_string(s.axis)); }};
    f["sweep.points"] = {[](Settings& s, std::string_view v) {
                           if (v.empty()) {
                             s.points.clear();
                           } else {
                             s.points = parse_points(v);
                           }
                         },
                         [](const Settings& s) {
                           std::string out;
                           for (auto p : s.points) {
                             if (!out.empty()) out += ',';
                             out += std::to_string(p);
                           }
                           return out;
                         }};
    f["sweep.colocated"] = {[](Settings& s, std::string_view v) { s.colocated = parse_bool("sweep.colocated", v); },
                            [](const Settings& s) { return std::string(s.colocated ? "true" : "false"); }};
    return f;
  }();
  return table;
}

}  // namespace

const std::vector<std::string>& keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [key, field] : fields()) out.push_back(key);
    return out;
  }();
  return k;
}

void apply(Settings& s, std::string_view key, std::string_view value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key: " + std::string(key));
  try {
    it->second.set(s, trim(value));
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(key, 0) == 0) throw;
    throw ConfigError(std::string(key) + ": " + msg);
  }
}

std::string get(const Settings& s, std::string_view key) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key: " + std::string(key));
  return it->second.get(s);
}

void load_text(Settings& s, std::string_view text, std::string_view origin) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply(s, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void load_file(Settings& s, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  load_text(s, buf.str(), path);
}

void apply_env(Settings& s) {
  if (const char* port = std::getenv("OFBENCH_PORT"); port != nullptr && *port != '\0') {
    apply(s, "engine.port", port);
  }
  if (const char* ctl = std::getenv("OFBENCH_CONTROLLER"); ctl != nullptr && *ctl != '\0') {
    apply(s, "bench.controller", ctl);
  }
}

std::string canonical(const Settings& s) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + "=" + field.get(s) + "\n";
  return out;
}

std::string config_hash(const Settings& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char c : canonical(s)) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string resolved_mode(const Settings& s, bool colocated_engine) {
  if (s.mode != "auto") return s.mode;
  if (colocated_engine) return "loopback";
  const auto& host = s.bench.controller_host;
  const bool local = host == "localhost" || host.rfind("127.", 0) == 0 || host == "::1";
  return local ? "loopback" : "two-machine";
}

std::vector<std::uint64_t> parse_points(std::string_view text) {
  std::vector<std::uint64_t> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (item.empty()) throw ConfigError("sweep.points: empty item in list");
    out.push_back(parse_uint<std::uint64_t>("sweep.points", item));
  }
  if (out.empty()) throw ConfigError("sweep.points: empty list");
  return out;
}

}  // namespace ofb::config
