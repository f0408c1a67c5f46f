// ofbench: run the learning-switch engine, the switch emulator, sweeps, and
// render stored reports.
//
// Exit codes: 0 success, 1 audit violation, 2 usage or configuration error,
// 3 runtime failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "ofbench/bench.hpp"
#include "ofbench/config.hpp"
#include "ofbench/engine.hpp"
#include "ofbench/log.hpp"
#include "ofbench/report.hpp"

namespace {

using namespace ofb;

constexpr int kExitOk = 0;
constexpr int kExitAudit = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFailure = 3;

struct Invocation {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;  // in command-line order
  std::vector<std::string> sets;                               // --set key=value
  std::string output;
  std::string input;
  bool colocated_bench = false;
};

void bind(CLI::App* app, Invocation& inv, const std::string& flags, const std::string& key,
          const std::string& help) {
  app->add_option_function<std::string>(
         flags, [&inv, key](const std::string& v) { inv.overrides.emplace_back(key, v); }, help)
      ->type_name("VALUE");
}

void add_common(CLI::App* app, Invocation& inv) {
  app->add_option("--config", inv.config_path, "Config file (key = value lines)")->type_name("PATH");
  app->add_option("--set", inv.sets, "Override any config key: --set key=value")->type_name("KEY=VALUE");
}

void add_engine_flags(CLI::App* app, Invocation& inv) {
  bind(app, inv, "--threading", "engine.threading", "single_io_queue | shared_pool_queue | run_to_completion");
  bind(app, inv, "--workers", "engine.workers", "Engine worker threads");
  bind(app, inv, "--buffers", "engine.buffers", "per_packet_object | preallocated_pool");
  bind(app, inv, "--table", "engine.table", "shared_locked | sharded_per_worker");
  bind(app, inv, "--port", "engine.port", "Engine listen port (0 = ephemeral)");
  bind(app, inv, "--listen", "engine.listen", "Engine listen address");
  bind(app, inv, "--queue-capacity", "engine.queue_capacity", "Hand-off queue capacity");
  bind(app, inv, "--stripes", "engine.table_stripes", "Lock stripes for the shared table");
  app->add_flag_callback("--pin", [&inv] { inv.overrides.emplace_back("engine.pin", "true"); },
                         "Pin engine workers to cores");
}

void add_bench_flags(CLI::App* app, Invocation& inv) {
  bind(app, inv, "-s,--switches", "bench.switches", "Emulated switches");
  bind(app, inv, "-M,--macs", "bench.macs", "Unique MAC addresses per switch");
  bind(app, inv, "-l,--loops", "bench.loops", "Measurement loops");
  bind(app, inv, "-m,--duration", "bench.duration", "Seconds per loop");
  bind(app, inv, "-D,--delay", "bench.delay", "Delay after the handshake before sending probes (ms)");
  bind(app, inv, "-c,--controller", "bench.controller", "Controller host:port");
  bind(app, inv, "-w,--warmup-loops", "bench.warmup", "Loops excluded from aggregates");
  bind(app, inv, "-t,--threads", "bench.threads", "Emulator threads (0 = auto)");
  bind(app, inv, "--window", "bench.window", "Outstanding probes per switch (throughput mode)");
  bind(app, inv, "--probe-limit", "bench.probe_limit", "Probes per switch per loop (0 = unlimited)");
  auto* lat = app->add_flag_callback("--latency", [&inv] { inv.overrides.emplace_back("bench.mode", "latency"); },
                                     "One outstanding probe per switch");
  auto* thr = app->add_flag_callback(
      "--throughput", [&inv] { inv.overrides.emplace_back("bench.mode", "throughput"); }, "Windowed blast");
  lat->excludes(thr);
  bind(app, inv, "--watts", "report.watts", "Platform power draw for throughput per Watt");
  bind(app, inv, "--format", "report.format", "csv | json | text");
  bind(app, inv, "--mode", "report.mode", "Report label: auto | loopback | two-machine");
  app->add_option("-o,--output", inv.output, "Write the report here instead of stdout")->type_name("PATH");
}

config::Settings resolve(const Invocation& inv) {
  config::Settings s;
  if (!inv.config_path.empty()) config::load_file(s, inv.config_path);
  config::apply_env(s);
  for (const auto& [k, v] : inv.overrides) config::apply(s, k, v);
  for (const auto& kv : inv.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw engine::ConfigError("--set expects key=value, got " + kv);
    config::apply(s, kv.substr(0, eq), kv.substr(eq + 1));
  }
  s.bench.validate();
  return s;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string render(const report::Report& r, const std::string& format) {
  if (format == "json") return report::emit_json(r);
  if (format == "text") return report::render_text(r);
  return report::emit_csv(r);
}

int finish(const report::Report& r, const config::Settings& s, const std::string& output) {
  write_output(output, render(r, s.format));
  if (s.format != "text") std::cerr << report::render_text(r);
  return r.audit_failed ? kExitAudit : kExitOk;
}

int cmd_engine(const Invocation& inv) {
  const auto s = resolve(inv);
  log::info("config", {{"hash", config::config_hash(s)}});
  std::cerr << "engine config " << config::config_hash(s) << ": " << engine::to_string(s.engine.threading.kind)
            << " x" << s.engine.threading.worker_count << ", " << buffers::to_string(s.engine.buffers.kind) << ", "
            << learn::to_string(s.engine.table) << ", listening on " << s.engine.listen_address << ":"
            << s.engine.listen_port << std::endl;
  const auto st = engine::run_engine(s.engine);
  std::cerr << "packet_ins=" << st.packet_ins << " flow_mods=" << st.flow_mods
            << " protocol_errors=" << st.protocol_errors << " connections=" << st.connections_ready
            << " allocations=" << st.alloc.allocations << " bytes_copied=" << st.alloc.bytes_copied << std::endl;
  return kExitOk;
}

int cmd_bench(const Invocation& inv) {
  auto s = resolve(inv);
  const std::string hash = config::config_hash(s);
  log::info("config", {{"hash", hash}});

  std::optional<engine::Engine> eng;
  if (inv.colocated_bench) {
    auto m = s.engine;
    eng.emplace(m);
    eng->start();
    s.bench.controller_host = "127.0.0.1";
    s.bench.controller_port = eng->port();
    if (!bench::wait_ready(s.bench.controller_host, s.bench.controller_port, std::chrono::seconds(5))) {
      throw std::runtime_error("co-located engine not ready within 5 s");
    }
  }
  bench::EngineTap tap;
  if (eng) tap = [&eng]() -> std::optional<engine::EngineStats> { return eng->stats(); };

  bench::SweepPoint sp;
  sp.result = bench::run_bench(s.bench, tap);
  if (eng) eng->stop();

  report::Report r;
  r.mode = config::resolved_mode(s, inv.colocated_bench);
  r.config_hash = hash;
  report::add_point(r, sp, s.bench.warmup_loops, s.watts);
  return finish(r, s, inv.output);
}

int cmd_sweep(const Invocation& inv) {
  const auto s = resolve(inv);
  if (s.axis == bench::Axis::None) throw engine::ConfigError("sweep needs --axis");
  if (s.points.empty()) throw engine::ConfigError("sweep needs --points");
  const std::string hash = config::config_hash(s);
  log::info("config", {{"hash", hash}});

  bench::SweepOptions opts;
  if (s.colocated) {
    opts.colocated = s.engine;
  }
  opts.on_point = [](const bench::SweepPoint& p) {
    std::cerr << "point " << bench::to_string(p.axis) << "=" << p.point
              << (p.error.empty() ? " done" : " failed: " + p.error) << (p.rebind_ok ? "" : " (port still bound)")
              << std::endl;
  };
  auto base = s.bench;
  if (s.colocated) base.controller_host = "127.0.0.1";
  const auto points = bench::run_sweep(s.axis, s.points, base, opts);

  report::Report r;
  r.mode = config::resolved_mode(s, s.colocated);
  r.config_hash = hash;
  bool failed = false;
  for (const auto& p : points) {
    report::add_point(r, p, s.bench.warmup_loops, s.watts);
    failed = failed || !p.error.empty();
  }
  const int rc = finish(r, s, inv.output);
  return rc != kExitOk ? rc : (failed ? kExitFailure : kExitOk);
}

int cmd_report(const Invocation& inv, const std::string& format) {
  std::ifstream in(inv.input);
  if (!in) throw engine::ConfigError("cannot read " + inv.input);
  std::stringstream buf;
  buf << in.rdbuf();
  const auto r = report::parse_json(buf.str());
  write_output(inv.output, render(r, format));
  return r.audit_failed ? kExitAudit : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OpenFlow learning-switch controller and CBench-style benchmark"};
  app.require_subcommand(1, 1);

  Invocation inv;
  auto* engine_cmd = app.add_subcommand("engine", "Run the controller until SIGINT/SIGTERM");
  add_common(engine_cmd, inv);
  add_engine_flags(engine_cmd, inv);

  auto* bench_cmd = app.add_subcommand("bench", "Run one measurement against a controller");
  add_common(bench_cmd, inv);
  add_bench_flags(bench_cmd, inv);
  add_engine_flags(bench_cmd, inv);
  bench_cmd->add_flag("--colocated", inv.colocated_bench, "Start an engine in this process and benchmark it");

  auto* sweep_cmd = app.add_subcommand("sweep", "Measure one point per value along an axis");
  add_common(sweep_cmd, inv);
  add_bench_flags(sweep_cmd, inv);
  add_engine_flags(sweep_cmd, inv);
  bind(sweep_cmd, inv, "--axis", "sweep.axis", "concurrency | heterogeneity | connectivity");
  bind(sweep_cmd, inv, "--points", "sweep.points", "Comma-separated values");
  sweep_cmd->add_flag_callback("--remote", [&inv] { inv.overrides.emplace_back("sweep.colocated", "false"); },
                               "Benchmark the controller at -c instead of spawning engines");

  std::string report_format = "text";
  auto* report_cmd = app.add_subcommand("report", "Re-render a stored JSON report");
  report_cmd->add_option("input", inv.input, "JSON report")->required()->type_name("PATH");
  report_cmd->add_option("--format", report_format, "csv | json | text")
      ->check(CLI::IsMember({"csv", "json", "text"}));
  report_cmd->add_option("-o,--output", inv.output, "Output path")->type_name("PATH");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const engine::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*engine_cmd) return cmd_engine(inv);
    if (*bench_cmd) return cmd_bench(inv);
    if (*sweep_cmd) return cmd_sweep(inv);
    if (*report_cmd) return cmd_report(inv, report_format);
  } catch (const engine::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const engine::BindFailure& e) {
    std::cerr << "error: cannot bind " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
