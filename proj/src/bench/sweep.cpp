#include <poll.h>
#include <sys/resource.h>

#include <fstream>
#include <string>
#include <thread>

#include "ofbench/bench.hpp"
#include "ofbench/log.hpp"
#include "ofbench/net.hpp"

namespace ofb::bench {

std::uint64_t peak_rss_bytes() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) return std::stoull(line.substr(6)) * 1024;
  }
  rusage usage{};
  ::getrusage(RUSAGE_SELF, &usage);
  return static_cast<std::uint64_t>(usage.ru_maxrss) * 1024;
}

bool wait_ready(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
  using Clock = std::chrono::steady_clock;
  const auto deadline = Clock::now() + timeout;
  while (Clock::now() < deadline) {
    try {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      auto fd = net::connect_tcp(host, port, std::max(left, std::chrono::milliseconds(1)));
      const auto hello = wire::encode(wire::Hello{0x5eed});
      if (!net::write_all(fd.get(), hello, left)) continue;
      std::vector<std::uint8_t> buf(wire::kHeaderSize);
      std::size_t have = 0;
      while (Clock::now() < deadline) {
        pollfd p{fd.get(), POLLIN, 0};
        ::poll(&p, 1, 20);
        std::size_t n = 0;
        const auto r = net::read_some(fd.get(), std::span(buf).subspan(have), n);
        if (r == net::IoResult::Closed || r == net::IoResult::Error) break;
        if (r == net::IoResult::Ok) have += n;
        if (have == wire::kHeaderSize) {
          auto h = wire::parse_header_negotiating(buf);
          return h.ok() && h->type == wire::MsgType::Hello;
        }
      }
    } catch (const std::exception&) {
      // not listening yet
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  return false;
}

namespace {

bool port_rebindable(const std::string& address, std::uint16_t port) {
  try {
    auto fd = net::listen_tcp(address, port, 1);
    return fd.valid();
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

std::vector<SweepPoint> run_sweep(Axis axis, std::span<const std::uint64_t> points, const BenchConfig& base,
                                  const SweepOptions& options) {
  if (points.empty()) throw std::invalid_argument("sweep needs at least one point");
  std::vector<SweepPoint> out;
  for (const auto point : points) {
    SweepPoint sp;
    sp.axis = axis;
    sp.point = point;
    BenchConfig cfg = base;
    std::optional<engine::StrategyMatrix> matrix = options.colocated;
    try {
      switch (axis) {
        case Axis::Concurrency:
          if (!matrix) throw std::invalid_argument("the concurrency axis needs a co-located engine");
          matrix->threading.worker_count = static_cast<std::size_t>(point);
          break;
        case Axis::Heterogeneity:
          cfg.unique_macs = point;
          break;
        case Axis::Connectivity:
          cfg.switches = static_cast<std::size_t>(point);
          break;
        case Axis::None:
          break;
      }

      if (matrix) {
        engine::Engine eng(*matrix);
        eng.start();
        cfg.controller_port = eng.port();
        if (!wait_ready(cfg.controller_host, cfg.controller_port, options.ready_timeout)) {
          throw std::runtime_error("engine not ready within " + std::to_string(options.ready_timeout.count()) +
                                   " ms");
        }
        auto tap = [&eng]() -> std::optional<engine::EngineStats> { return eng.stats(); };
        sp.result = run_bench(cfg, tap);
        eng.stop();
        if (matrix->listen_port != 0) sp.rebind_ok = port_rebindable(matrix->listen_address, matrix->listen_port);
      } else {
        sp.result = run_bench(cfg);
      }
    } catch (const std::exception& e) {
      sp.error = e.what();
      log::error("sweep_point_failed", {{"axis", std::string(to_string(axis))},
                                        {"point", std::to_string(point)},
                                        {"error", e.what()}});
      if (matrix && matrix->listen_port != 0) sp.rebind_ok = port_rebindable(matrix->listen_address, matrix->listen_port);
    }
    if (options.on_point) options.on_point(sp);
    out.push_back(std::move(sp));
  }
  return out;
}

}  // namespace ofb::bench
