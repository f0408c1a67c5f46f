// Acceptance suite: one PASS/FAIL line per criterion on stdout.
//
//   ofbench_acceptance [--quick] [criterion ...]
//
// --quick shortens every measurement for local iteration; the verdicts it
// prints are not the real ones.  Exit status is the number of failures.

#include <signal.h>
#include <sys/resource.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fcntl.h>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <ranges>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ofbench/bench.hpp"
#include "ofbench/engine.hpp"
#include "ofbench/learnswitch.hpp"
#include "ofbench/net.hpp"
#include "ofbench/report.hpp"
#include "support/gen.hpp"
#include "support/switch_client.hpp"

extern char** environ;

namespace {

using namespace ofb;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// Pinned tolerances

constexpr double kInteropMaxSeconds = 300;          // criterion 1
constexpr std::uint64_t kConservationProbes = 10'000'000;  // criterion 2
// Probe-limited runs wait this long for stragglers; the slowest model needs
// about 20 s for a full 64 x 65536 window.
constexpr double kDrainSeconds = 120;
constexpr double kDisconnectMaxMs = 100;            // criterion 3
constexpr double kThroughputChangeMax = 0.05;       // criterion 3
constexpr int kCodecCasesPerType = 100'000;         // criterion 4
constexpr std::size_t kOraclePackets = 1'000'000;   // criterion 5
constexpr double kOracleMaxSeconds = 120;           // criterion 5
constexpr std::size_t kMinWorkers = 8;              // criteria 7-9
constexpr std::size_t kMinCores = 8;                // criterion 7
constexpr double kPoolSpeedup = 1.2;                // criterion 7
constexpr double kPoolAllocsMax = 0.01;             // criterion 7
constexpr double kObjectAllocsMin = 1.0;            // criterion 7
constexpr double kRtcSpeedup = 1.5;                 // criterion 8
constexpr double kShardSpeedup = 1.2;               // criterion 9
constexpr std::uint64_t kMemoryBudget = 16ull << 30;  // criterion 10
constexpr double kEfficiencyExpected = 32'000;      // criterion 12

bool g_quick = false;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

std::string fmt_rps(double v) { return fmt(v / 1e6, 4) + "M"; }

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::size_t cores() {
  const auto n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

engine::StrategyMatrix matrix(engine::ThreadingKind kind, buffers::BufferKind buf, learn::TableStrategy table,
                              std::size_t workers) {
  engine::StrategyMatrix m;
  m.threading = {kind, workers, false};
  m.buffers.kind = buf;
  m.table = table;
  m.listen_address = "127.0.0.1";
  m.listen_port = 0;
  return m;
}

engine::StrategyMatrix rtc_pool_sharded(std::size_t workers = kMinWorkers) {
  return matrix(engine::ThreadingKind::RunToCompletion, buffers::BufferKind::PreallocatedPool,
                learn::TableStrategy::ShardedPerWorker, workers);
}

/// The measurement protocol: 10 retained loops after one warm-up loop.
bench::BenchConfig protocol(std::size_t switches = 64, std::uint64_t macs = 1'000'000) {
  bench::BenchConfig c;
  c.switches = switches;
  c.unique_macs = macs;
  c.loops = g_quick ? 3 : 11;
  c.warmup_loops = 1;
  c.loop_duration_s = g_quick ? 1.0 : 10.0;
  return c;
}

struct Measured {
  bench::RunResult run;
  report::Summary summary;
  engine::EngineStats engine;
};

Measured measure(const engine::StrategyMatrix& m, bench::BenchConfig c) {
  engine::Engine e(m);
  e.start();
  c.controller_host = "127.0.0.1";
  c.controller_port = e.port();
  if (!bench::wait_ready(c.controller_host, c.controller_port, 5s)) throw std::runtime_error("engine not ready");
  Measured out;
  out.run = bench::run_bench(c, [&e] { return std::optional(e.stats()); });
  e.stop();
  out.engine = e.stats();
  out.summary = report::aggregate_run(out.run, c.warmup_loops);
  return out;
}

// Runs shared by several criteria are measured once.
std::map<std::string, Measured> g_cache;

const Measured& cached(const std::string& key, const engine::StrategyMatrix& m, const bench::BenchConfig& c) {
  auto it = g_cache.find(key);
  if (it == g_cache.end()) {
    std::cerr << "  measuring " << key << " ..." << std::endl;
    it = g_cache.emplace(key, measure(m, c)).first;
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// External processes

std::optional<std::string> find_executable(const std::string& name, const char* env_override) {
  if (const char* p = std::getenv(env_override); p != nullptr && *p != '\0') {
    if (::access(p, X_OK) == 0) return std::string(p);
    return std::nullopt;
  }
  const char* path = std::getenv("PATH");
  if (path == nullptr) return std::nullopt;
  std::stringstream ss(path);
  std::string dir;
  while (std::getline(ss, dir, ':')) {
    const auto full = dir + "/" + name;
    if (::access(full.c_str(), X_OK) == 0) return full;
  }
  return std::nullopt;
}

std::uint16_t free_port() {
  auto fd = net::listen_tcp("127.0.0.1", 0);
  return net::local_port(fd.get());
}

class Child {
 public:
  explicit Child(const std::vector<std::string>& argv) {
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_addopen(&fa, 1, "/dev/null", O_WRONLY, 0);
    posix_spawn_file_actions_addopen(&fa, 2, "/dev/null", O_WRONLY, 0);
    if (posix_spawnp(&pid_, args[0], &fa, nullptr, args.data(), environ) != 0) pid_ = -1;
    posix_spawn_file_actions_destroy(&fa);
  }
  ~Child() {
    if (pid_ <= 0) return;
    ::kill(pid_, SIGTERM);
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
      std::this_thread::sleep_for(100ms);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }
  Child(const Child&) = delete;
  Child& operator=(const Child&) = delete;
  [[nodiscard]] bool started() const { return pid_ > 0; }

 private:
  pid_t pid_ = -1;
};

// ---------------------------------------------------------------------------
// Criteria

// 1. Reference CBench against our engine; our harness against os-ken.
Outcome conformance() {
  const auto t0 = Clock::now();
  std::string detail;
  bool ok = true;

  // CBench against our engine.
  if (auto cbench = find_executable("cbench", "CBENCH")) {
    engine::Engine e(rtc_pool_sharded());
    e.start();
    const std::string cmd = *cbench + " -c 127.0.0.1 -p " + std::to_string(e.port()) +
                            " -m 10000 -l 10 -s 16 -M 1000 -w 1 -t 2>&1";
    std::string out;
    if (FILE* p = ::popen(cmd.c_str(), "r")) {
      char buf[512];
      while (std::fgets(buf, sizeof buf, p) != nullptr) out += buf;
      ::pclose(p);
    }
    e.stop();
    std::size_t loops = 0;
    for (std::size_t pos = 0; (pos = out.find("total = ", pos)) != std::string::npos; ++pos) ++loops;
    const auto st = e.stats();
    const bool cb_ok = loops >= 10 && st.flow_mods > 0 && st.protocol_errors == 0;
    ok = ok && cb_ok;
    detail += "cbench: " + std::to_string(loops) + " loops, " + std::to_string(st.flow_mods) + " flow-mods, " +
              std::to_string(st.protocol_errors) + " protocol errors";
  } else {
    ok = false;
    detail += "cbench: not found (set CBENCH or put cbench on PATH)";
  }

  // Our harness against os-ken.
  if (auto manager = find_executable("osken-manager", "OSKEN_MANAGER")) {
    const auto port = free_port();
    Child osken({*manager, "--ofp-tcp-listen-port", std::to_string(port), "--ofp-listen-host", "127.0.0.1",
                 OFBENCH_INTEROP_DIR "/osken_learning_switch.py"});
    bool ready = osken.started() && bench::wait_ready("127.0.0.1", port, 20s);
    if (!ready) {
      ok = false;
      detail += "; os-ken: did not come up";
    } else {
      bench::BenchConfig c;
      c.controller_port = port;
      c.switches = 16;
      c.unique_macs = 1000;
      c.loops = 10;
      c.warmup_loops = 0;
      c.loop_duration_s = g_quick ? 0.5 : 2.0;
      c.window = 256;
      try {
        const auto run = bench::run_bench(c);
        std::uint64_t responses = 0;
        bool all_valid = true;
        for (const auto& l : run.loops) {
          responses += l.responses;
          all_valid = all_valid && l.valid && l.responses > 0;
        }
        const bool os_ok = run.loops.size() == 10 && all_valid && !run.audit_failed();
        ok = ok && os_ok;
        detail += "; os-ken: " + std::to_string(run.loops.size()) + " loops, " + std::to_string(responses) +
                  " responses, audit " + (run.audit_failed() ? "violated" : "clean");
      } catch (const std::exception& ex) {
        ok = false;
        detail += std::string("; os-ken: ") + ex.what();
      }
    }
  } else {
    ok = false;
    detail += "; os-ken: osken-manager not found";
  }

  const double secs = since(t0);
  ok = ok && secs <= kInteropMaxSeconds;
  detail += "; " + fmt(secs, 3) + " s (max " + fmt(kInteropMaxSeconds) + ")";
  return {ok, detail};
}

// 2. Response conservation over 10^7 probes, every threading model.
Outcome conservation() {
  bool ok = true;
  std::string detail;
  const std::uint64_t total = g_quick ? 640'000 : kConservationProbes;
  for (auto kind : {engine::ThreadingKind::RunToCompletion, engine::ThreadingKind::SharedPoolQueue,
                    engine::ThreadingKind::SingleIoQueue}) {
    const auto table = kind == engine::ThreadingKind::RunToCompletion ? learn::TableStrategy::ShardedPerWorker
                                                                       : learn::TableStrategy::SharedLocked;
    bench::BenchConfig c;
    c.switches = 64;
    c.unique_macs = 1'000'000;
    c.loops = 1;
    c.warmup_loops = 0;
    c.loop_duration_s = 3600;
    c.drain_timeout_s = kDrainSeconds;
    c.probe_limit = total / 64;
    const auto m = measure(matrix(kind, buffers::BufferKind::PreallocatedPool, table, kMinWorkers), c);
    const auto& l = m.run.loops.at(0);
    const bool good = l.probes == total && l.flow_mods == l.probes && l.responses == l.flow_mods &&
                      l.packet_outs == 0 && m.engine.packet_ins == l.probes && m.engine.flow_mods == l.probes &&
                      m.engine.packet_outs == 0 && m.run.audit.unexpected_xids == 0 && !m.run.audit_failed();
    ok = ok && good;
    detail += std::string(detail.empty() ? "" : "; ") + std::string(engine::to_string(kind)) + " " +
              std::to_string(l.probes) + " probes / " + std::to_string(l.flow_mods) + " flow-mods / " +
              std::to_string(l.packet_outs) + " packet-outs";
  }
  return {ok, detail};
}

// 3. A length-7 header closes that peer quickly and leaves the others alone.
// Clean and perturbed runs alternate; medians are taken over the pooled
// retained loops of each kind.
Outcome malformed() {
  auto c = protocol(32, 100'000);
  c.loops = g_quick ? 3 : 6;
  c.loop_duration_s = g_quick ? 1.0 : 3.0;
  const auto m = rtc_pool_sharded();
  constexpr int kRounds = 3;

  std::vector<double> clean_rps, dirty_rps;
  std::vector<double> disconnect_ms;
  std::uint64_t closes = 0;
  for (int round = 0; round < kRounds; ++round) {
    const auto base = measure(m, c);
    for (const auto& l : base.run.loops | std::views::drop(c.warmup_loops)) clean_rps.push_back(l.throughput_rps);

    engine::Engine e(m);
    e.start();
    auto cd = c;
    cd.controller_port = e.port();
    std::thread bad([&] {
      gen::SwitchClient sw(e.port(), 0xfff0);
      sw.handshake();
      // Strike during the second loop.
      std::this_thread::sleep_for(std::chrono::duration<double>(c.loop_duration_s * 1.5));
      const std::array<std::uint8_t, 8> header{0x01, 0x0a, 0x00, 0x07, 0, 0, 0, 1};
      const auto t0 = Clock::now();
      sw.send(header);
      disconnect_ms.push_back(sw.wait_closed(1s) ? since(t0) * 1e3 : 1e9);
    });
    const auto run = bench::run_bench(cd);
    bad.join();
    e.stop();
    closes += e.stats().malformed_closes;
    for (const auto& l : run.loops | std::views::drop(c.warmup_loops)) dirty_rps.push_back(l.throughput_rps);
  }
  const double clean = report::median(clean_rps);
  const double dirty = report::median(dirty_rps);
  const double change = std::abs(dirty - clean) / clean;
  const double worst = *std::max_element(disconnect_ms.begin(), disconnect_ms.end());
  const bool ok = worst <= kDisconnectMaxMs && change < kThroughputChangeMax && closes == kRounds;
  return {ok, "disconnect worst " + (worst < 1e9 ? fmt(worst, 3) + " ms" : std::string("never")) + " (max " +
                  fmt(kDisconnectMaxMs) + "), median " + fmt_rps(clean) + " -> " + fmt_rps(dirty) + " rps, change " +
                  fmt(change * 100, 3) + "% (max " + fmt(kThroughputChangeMax * 100) + "%), " +
                  std::to_string(closes) + " malformed closes"};
}

// 4. Codec round trips and the 82-byte probe.
Outcome codec() {
  std::uint64_t failures = 0;
  std::vector<std::uint8_t> sink(wire::kMaxMessageSize);
  for (std::size_t kind = 0; kind < gen::kGeneratedKinds; ++kind) {
    gen::Rng r(gen::base_seed() + 1000 + kind);
    for (int i = 0; i < kCodecCasesPerType; ++i) {
      const auto m = gen::gen_message(r, kind);
      auto n = wire::encode_into(m, sink);
      if (!n) {
        ++failures;
        continue;
      }
      auto h = wire::parse_header(std::span(sink).first(*n));
      if (!h || h->length != *n) {
        ++failures;
        continue;
      }
      auto back = wire::decode_message(*h, std::span(sink).subspan(wire::kHeaderSize, *n - wire::kHeaderSize));
      if (!back || !(*back == m)) ++failures;
    }
  }
  const auto probe = bench::encode_probe(0, 0, 1'000'000);
  const bool ok = failures == 0 && probe.size() == 82;
  return {ok, std::to_string(gen::kGeneratedKinds) + " types x " + std::to_string(kCodecCasesPerType) + " cases, " +
                  std::to_string(failures) + " failures; probe " + std::to_string(probe.size()) + " bytes"};
}

// 5. Both table strategies against the sequential replay map.
Outcome learning_oracle() {
  const auto t0 = Clock::now();
  gen::Rng r(gen::base_seed() ^ 0xacce55);
  struct Packet {
    std::uint64_t dpid;
    std::uint16_t port;
    std::uint64_t src, dst;
  };
  std::vector<Packet> stream(kOraclePackets);
  for (auto& p : stream) p = {1 + r.below(64), static_cast<std::uint16_t>(1 + r.below(48)), r.below(8192), r.below(8192)};

  std::map<learn::MacKey, std::uint16_t> ref;
  std::vector<learn::Decision> expect;
  expect.reserve(stream.size());
  for (const auto& p : stream) {
    auto it = ref.find({p.dpid, p.dst});
    expect.push_back(it == ref.end() ? learn::Decision::flood() : learn::Decision::forward(it->second));
    ref[{p.dpid, p.src}] = p.port;
  }
  const std::vector<std::pair<learn::MacKey, std::uint16_t>> ref_table(ref.begin(), ref.end());

  std::uint64_t mismatches = 0;
  bool tables_equal = true;
  for (auto s : {learn::TableStrategy::SharedLocked, learn::TableStrategy::ShardedPerWorker}) {
    learn::MacTable t(s, kMinWorkers, true);
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const auto& p = stream[i];
      if (learn::handle_packet_in(t, p.dpid, p.port, p.src, p.dst, t.shard_of(p.dpid)) != expect[i]) ++mismatches;
    }
    // Multi-threaded: each worker replays the switches it owns, in order.
    learn::MacTable mt(s, kMinWorkers, true);
    std::vector<std::thread> ws;
    for (std::size_t w = 0; w < kMinWorkers; ++w) {
      ws.emplace_back([&, w] {
        for (const auto& p : stream) {
          if (mt.shard_of(p.dpid) == w) (void)learn::handle_packet_in(mt, p.dpid, p.port, p.src, p.dst, w);
        }
      });
    }
    for (auto& th : ws) th.join();
    auto snap = mt.snapshot();
    std::sort(snap.begin(), snap.end());
    tables_equal = tables_equal && snap == ref_table;
  }
  const double secs = since(t0);
  const bool ok = mismatches == 0 && tables_equal && secs <= kOracleMaxSeconds;
  return {ok, std::to_string(kOraclePackets) + " packets, " + std::to_string(mismatches) +
                  " decision mismatches, final tables " + (tables_equal ? "equal" : "differ") + ", " + fmt(secs, 3) +
                  " s (max " + fmt(kOracleMaxSeconds) + ")"};
}

// 6. Same probes, same responses, whatever the threading model.
Outcome model_equivalence() {
  constexpr std::uint64_t kMacs = 1000;
  bench::BenchConfig c;
  c.switches = 64;
  c.unique_macs = kMacs;
  c.loops = 1;
  c.warmup_loops = 0;
  c.loop_duration_s = 3600;
  c.drain_timeout_s = kDrainSeconds;
  c.probe_limit = g_quick ? 2000 : 20'000;
  c.capture = true;
  c.ordered_prefix = kMacs + 1;
  std::vector<std::vector<bench::CapturedResponse>> sets;
  std::string detail;
  for (auto kind : {engine::ThreadingKind::SingleIoQueue, engine::ThreadingKind::SharedPoolQueue,
                    engine::ThreadingKind::RunToCompletion}) {
    const auto table = kind == engine::ThreadingKind::RunToCompletion ? learn::TableStrategy::ShardedPerWorker
                                                                       : learn::TableStrategy::SharedLocked;
    auto m = measure(matrix(kind, buffers::BufferKind::PreallocatedPool, table, kMinWorkers), c);
    auto cap = std::move(m.run.captured);
    std::sort(cap.begin(), cap.end());
    detail += std::string(detail.empty() ? "" : ", ") + std::string(engine::to_string(kind)) + " " +
              std::to_string(cap.size());
    sets.push_back(std::move(cap));
  }
  const bool same = sets[0] == sets[1] && sets[1] == sets[2];
  const bool complete = sets[0].size() == c.switches * c.probe_limit;
  return {same && complete, "responses: " + detail + "; multisets " + (same ? "identical" : "differ")};
}

std::string host_note() { return "host cores " + std::to_string(cores()); }

// 7. Preallocated pool versus per-packet objects.
Outcome buffers_direction() {
  const auto& pool = cached("rtc/pool/sharded", rtc_pool_sharded(), protocol());
  const auto& obj = cached("rtc/object/sharded",
                           matrix(engine::ThreadingKind::RunToCompletion, buffers::BufferKind::PerPacketObject,
                                  learn::TableStrategy::ShardedPerWorker, kMinWorkers),
                           protocol());
  const double ratio = pool.summary.median_rps / obj.summary.median_rps;
  const double pool_allocs = pool.summary.allocs_per_packet().value_or(-1);
  const double obj_allocs = obj.summary.allocs_per_packet().value_or(-1);
  const bool ok = cores() >= kMinCores && ratio >= kPoolSpeedup && pool_allocs >= 0 &&
                  pool_allocs <= kPoolAllocsMax && obj_allocs >= kObjectAllocsMin;
  return {ok, "pool " + fmt_rps(pool.summary.median_rps) + " vs object " + fmt_rps(obj.summary.median_rps) +
                  " rps = " + fmt(ratio, 3) + "x (min " + fmt(kPoolSpeedup) + "x); allocs/packet " +
                  fmt(pool_allocs, 3) + " (max " + fmt(kPoolAllocsMax) + ") vs " + fmt(obj_allocs, 3) + " (min " +
                  fmt(kObjectAllocsMin) + "); " + host_note() + " (min " + std::to_string(kMinCores) + ")"};
}

// 8. Run-to-completion versus a single IO thread.
Outcome threading_direction() {
  const auto& rtc = cached("rtc/pool/sharded", rtc_pool_sharded(), protocol());
  const auto& siq = cached("siq/pool/shared",
                           matrix(engine::ThreadingKind::SingleIoQueue, buffers::BufferKind::PreallocatedPool,
                                  learn::TableStrategy::SharedLocked, kMinWorkers),
                           protocol());
  const double ratio = rtc.summary.median_rps / siq.summary.median_rps;
  return {ratio >= kRtcSpeedup, "run_to_completion " + fmt_rps(rtc.summary.median_rps) + " vs single_io_queue " +
                                    fmt_rps(siq.summary.median_rps) + " rps = " + fmt(ratio, 3) + "x (min " +
                                    fmt(kRtcSpeedup) + "x); " + host_note()};
}

// 9. Sharded versus shared table under run-to-completion.
Outcome table_direction() {
  const auto& sharded = cached("rtc/pool/sharded", rtc_pool_sharded(), protocol());
  const auto& shared = cached("rtc/pool/shared",
                              matrix(engine::ThreadingKind::RunToCompletion, buffers::BufferKind::PreallocatedPool,
                                     learn::TableStrategy::SharedLocked, kMinWorkers),
                              protocol());
  const double ratio = sharded.summary.median_rps / shared.summary.median_rps;
  const auto locks = sharded.engine.lock_acquisitions;
  return {ratio >= kShardSpeedup && locks == 0,
          "sharded " + fmt_rps(sharded.summary.median_rps) + " vs shared " + fmt_rps(shared.summary.median_rps) +
              " rps = " + fmt(ratio, 3) + "x (min " + fmt(kShardSpeedup) + "x); sharded lock acquisitions " +
              std::to_string(locks) + " (shared " + std::to_string(shared.engine.lock_acquisitions) + "); " +
              host_note()};
}

// 10. 10^7 unique MACs is no faster than 10^3, within the memory budget.
// Measured in a child capped at the budget (or at most of physical memory, if
// smaller) so that running out of memory fails this criterion alone.
Outcome heterogeneity() {
  const auto phys = static_cast<std::uint64_t>(::sysconf(_SC_PHYS_PAGES)) * ::sysconf(_SC_PAGESIZE);
  const auto cap = std::min<std::uint64_t>(kMemoryBudget, phys / 10 * 9);
  int fds[2];
  if (::pipe(fds) != 0) return {false, "pipe failed"};
  const pid_t pid = ::fork();
  if (pid == 0) {
    ::close(fds[0]);
    const rlimit lim{cap, cap};
    ::setrlimit(RLIMIT_AS, &lim);
    std::string out;
    int rc = 0;
    try {
      const auto small = measure(rtc_pool_sharded(), protocol(64, 1000));
      const auto large = measure(rtc_pool_sharded(), protocol(64, 10'000'000));
      out = fmt(small.summary.median_rps, 17) + " " + fmt(large.summary.median_rps, 17) + " " +
            std::to_string(std::max(small.run.peak_rss_bytes, large.run.peak_rss_bytes));
    } catch (const std::exception& e) {
      out = e.what();
      rc = 1;
    }
    (void)!::write(fds[1], out.data(), out.size());
    ::_exit(rc);
  }
  ::close(fds[1]);
  std::string got;
  char buf[256];
  for (ssize_t n; (n = ::read(fds[0], buf, sizeof buf)) > 0;) got.append(buf, static_cast<std::size_t>(n));
  ::close(fds[0]);
  int status = 0;
  ::waitpid(pid, &status, 0);
  const std::string limits = "address space capped at " + fmt(static_cast<double>(cap) / (1ull << 30), 3) +
                             " GiB (budget " + fmt(static_cast<double>(kMemoryBudget >> 30)) + " GiB, host " +
                             fmt(static_cast<double>(phys) / (1ull << 30), 3) + " GiB)";
  if (WIFSIGNALED(status)) {
    return {false, "measurement killed by signal " + std::to_string(WTERMSIG(status)) + "; " + limits};
  }
  if (WEXITSTATUS(status) != 0) return {false, "error: " + got + "; " + limits};
  double small = 0, large = 0;
  std::uint64_t rss = 0;
  std::istringstream(got) >> small >> large >> rss;
  const bool ok = large <= small && rss <= kMemoryBudget;
  return {ok, "median 1e7 MACs " + fmt_rps(large) + " <= 1e3 MACs " + fmt_rps(small) + " rps; peak RSS " +
                  fmt(static_cast<double>(rss) / (1 << 20), 4) + " MiB; " + limits};
}

// 11. Light load has a lower tail than saturation; quantiles match brute force.
Outcome latency_discipline() {
  auto light = protocol(1, 1000);
  light.mode = bench::Mode::Latency;
  light.loops = g_quick ? 2 : 6;
  light.loop_duration_s = g_quick ? 1 : 3;
  auto heavy = protocol(64, 1000);
  heavy.loops = light.loops;
  heavy.loop_duration_s = light.loop_duration_s;
  heavy.latency_sample_every = 16;
  const auto a = measure(rtc_pool_sharded(), light);
  const auto b = measure(rtc_pool_sharded(), heavy);
  if (!a.summary.cdf || !b.summary.cdf) return {false, "no latency samples"};

  // Brute-force oracle over the merged samples.
  bool exact = true;
  for (const auto* cdf : {&*a.summary.cdf, &*b.summary.cdf}) {
    std::vector<double> sorted = cdf->sorted();
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    for (int i = 0; i <= 1000; ++i) {
      const double p = i / 1000.0;
      std::size_t idx = 0;
      while (p > 0 && static_cast<double>(idx + 1) < p * n) ++idx;
      exact = exact && cdf->q(p) == sorted[idx];
    }
  }
  const double p99_light = a.summary.cdf->q(0.99);
  const double p99_heavy = b.summary.cdf->q(0.99);
  return {p99_light < p99_heavy && exact,
          "p99 1 switch latency mode " + fmt(p99_light, 4) + " us < 64 switches saturated " + fmt(p99_heavy, 4) +
              " us; quantiles " + (exact ? "match" : "differ from") + " brute force (" +
              std::to_string(a.summary.cdf->size() + b.summary.cdf->size()) + " samples)"};
}

// 12. Default protocol: 10 loops of 10 s, mean reported; efficiency arithmetic.
Outcome measurement_protocol() {
  bench::BenchConfig c;  // defaults
  if (g_quick) c.loop_duration_s = 1;
  auto m = engine::StrategyMatrix{};
  m.listen_address = "127.0.0.1";
  m.listen_port = 0;
  const auto got = measure(m, c);
  bool durations_ok = true;
  for (const auto& l : got.run.loops) {
    durations_ok = durations_ok && l.elapsed_s >= c.loop_duration_s && l.elapsed_s <= c.loop_duration_s + c.drain_timeout_s + 1.0;
  }
  double sum = 0;
  for (std::size_t i = c.warmup_loops; i < got.run.loops.size(); ++i) sum += got.run.loops[i].throughput_rps;
  const double mean = sum / static_cast<double>(got.run.loops.size() - c.warmup_loops);
  const bool mean_ok = std::abs(mean - got.summary.mean_rps) <= 1e-9 * mean;
  const double eff = report::efficiency(4.8e6, 150).efficiency_rps_per_w;
  const bool ok = got.run.loops.size() == 10 && c.loop_duration_s == 10.0 && durations_ok && mean_ok &&
                  eff == kEfficiencyExpected;
  return {ok, std::to_string(got.run.loops.size()) + " loops x " + fmt(c.loop_duration_s) + " s, " +
                  (durations_ok ? "durations ok" : "durations off") + ", mean " + fmt_rps(got.summary.mean_rps) +
                  " rps over " + std::to_string(got.summary.loops_used) + " retained loops; 4.8e6 rps / 150 W = " +
                  fmt(eff, 6) + " rps/W"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--quick") {
      g_quick = true;
    } else {
      only.push_back(std::atoi(a.c_str()));
    }
  }
  ::signal(SIGPIPE, SIG_IGN);

  const std::vector<Criterion> all{
      {1, "conformance", conformance},
      {2, "response conservation", conservation},
      {3, "malformed-frame robustness", malformed},
      {4, "codec properties", codec},
      {5, "learning-switch oracle", learning_oracle},
      {6, "threading-model equivalence", model_equivalence},
      {7, "buffers direction", buffers_direction},
      {8, "threading direction", threading_direction},
      {9, "table direction", table_direction},
      {10, "heterogeneity trend", heterogeneity},
      {11, "latency discipline", latency_discipline},
      {12, "measurement protocol", measurement_protocol},
  };

  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    std::cerr << "[" << c.id << "] " << c.name << " ..." << std::endl;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (c.id < 10 ? " " : "") << c.id << " " << c.name << ": "
              << o.detail << (g_quick ? " [quick]" : "") << std::endl;
  }
  return failures;
}
