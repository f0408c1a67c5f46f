#include <sys/epoll.h>
#include <sys/socket.h>

#include <array>
#include <atomic>
#include <csignal>
#include <cstring>
#include <system_error>
#include <thread>
#include <unordered_map>

#include "ofbench/engine.hpp"
#include "ofbench/log.hpp"
#include "runtime.hpp"

namespace ofb::engine {

using detail::Connection;

struct Engine::Impl {
  explicit Impl(StrategyMatrix m)
      : matrix(std::move(m)),
        table(matrix.table,
              matrix.table == learn::TableStrategy::ShardedPerWorker ? matrix.threading.worker_count
                                                                      : matrix.table_stripes) {}

  StrategyMatrix matrix;
  learn::MacTable table;
  std::unique_ptr<detail::Runtime> runtime;

  net::UniqueFd listener;
  std::uint16_t bound_port = 0;
  net::Epoll epoll;
  net::EventFd wake;
  std::thread thread;
  std::atomic<bool> running{false};

  // Written by the listener thread only.
  Counter accepted;
  Counter ready;
  Counter handshake_errors;
  Counter handshake_closes;
  std::unordered_map<Connection*, std::unique_ptr<Connection>> pending;
  std::uint64_t next_id = 1;

  void listen_loop();
  void accept_all();
  void on_pending(Connection* conn);
  void drop(Connection* conn, const char* reason);
};

namespace {

constexpr auto kReplyTimeout = std::chrono::milliseconds(2000);

std::unique_ptr<detail::Runtime> make_runtime(const StrategyMatrix& m, learn::MacTable& table) {
  switch (m.threading.kind) {
    case ThreadingKind::SingleIoQueue: return detail::make_single_io_queue(m, table);
    case ThreadingKind::SharedPoolQueue: return detail::make_shared_pool_queue(m, table);
    case ThreadingKind::RunToCompletion: return detail::make_run_to_completion(m, table);
  }
  throw ConfigError("unknown threading model");
}

}  // namespace

void Engine::Impl::listen_loop() {
  std::array<epoll_event, 64> events{};
  while (running.load(std::memory_order_relaxed)) {
    const int n = epoll.wait(events, 100);
    for (int i = 0; i < n; ++i) {
      void* tag = events[static_cast<std::size_t>(i)].data.ptr;
      if (tag == &wake) {
        wake.drain();
      } else if (tag == &listener) {
        accept_all();
      } else {
        on_pending(static_cast<Connection*>(tag));
      }
    }
  }
  for (auto& [c, owned] : pending) {
    c->fd.reset();
    handshake_closes.add();
  }
  pending.clear();
}

void Engine::Impl::accept_all() {
  for (;;) {
    const int fd = ::accept4(listener.get(), nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) {
        log::warn("accept_failed", {{"errno", std::strerror(errno)}});
      }
      return;
    }
    net::set_nodelay(fd);
    auto conn = std::make_unique<Connection>();
    conn->fd = net::UniqueFd(fd);
    conn->id = next_id++;
    accepted.add();
    epoll.add(fd, EPOLLIN, conn.get());
    pending.emplace(conn.get(), std::move(conn));
  }
}

void Engine::Impl::drop(Connection* conn, const char* reason) {
  log::info("handshake_failed", {{"conn", std::to_string(conn->id)}, {"reason", reason}});
  handshake_closes.add();
  pending.erase(conn);  // closing the fd deregisters it
}

void Engine::Impl::on_pending(Connection* conn) {
  std::array<std::uint8_t, 4096> chunk{};
  for (;;) {
    std::size_t n = 0;
    const auto r = net::read_some(conn->fd.get(), chunk, n);
    if (r == net::IoResult::WouldBlock) break;
    if (r != net::IoResult::Ok) {
      drop(conn, r == net::IoResult::Closed ? "peer_closed" : "read_error");
      return;
    }
    conn->carried.insert(conn->carried.end(), chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(n));
  }

  std::size_t offset = 0;
  while (conn->state.phase != Phase::Ready) {
    const std::span<const std::uint8_t> rest(conn->carried.data() + offset, conn->carried.size() - offset);
    auto frame = wire::next_frame(rest, conn->state.phase == Phase::ExpectHello);
    if (!frame) {
      handshake_errors.add();
      drop(conn, wire::to_string(frame.error()).data());
      return;
    }
    if (!frame->has_value()) break;
    const wire::Frame& f = **frame;
    auto msg = wire::decode_message(f.header, f.body());
    if (!msg) {
      handshake_errors.add();
      drop(conn, wire::to_string(msg.error()).data());
      return;
    }
    auto outcome = handshake_step(conn->state, *msg);
    if (outcome.protocol_error) {
      handshake_errors.add();
      drop(conn, outcome.reason.c_str());
      return;
    }
    for (const auto& reply : outcome.replies) {
      const auto bytes = wire::encode(reply);
      if (!net::write_all(conn->fd.get(), bytes, kReplyTimeout)) {
        drop(conn, "write_error");
        return;
      }
    }
    conn->state = outcome.state;
    offset += f.bytes.size();
  }
  conn->carried.erase(conn->carried.begin(), conn->carried.begin() + static_cast<std::ptrdiff_t>(offset));

  if (conn->state.phase == Phase::Ready) {
    ready.add();
    log::info("switch_ready", {{"conn", std::to_string(conn->id)},
                               {"dpid", std::to_string(conn->state.datapath_id)}});
    epoll.remove(conn->fd.get());
    auto it = pending.find(conn);
    auto owned = std::move(it->second);
    pending.erase(it);
    runtime->adopt(std::move(owned));
  }
}

Engine::Engine(StrategyMatrix matrix) {
  matrix.validate();
  impl_ = std::make_unique<Impl>(std::move(matrix));
}

Engine::~Engine() { stop(); }

void Engine::start() {
  auto& s = *impl_;
  if (s.running.load()) return;
  try {
    s.listener = net::listen_tcp(s.matrix.listen_address, s.matrix.listen_port);
  } catch (const std::system_error& e) {
    throw BindFailure(s.matrix.listen_address + ":" + std::to_string(s.matrix.listen_port) + ": " + e.what());
  }
  s.bound_port = net::local_port(s.listener.get());
  s.runtime = make_runtime(s.matrix, s.table);
  s.runtime->start();
  s.epoll.add(s.listener.get(), EPOLLIN, &s.listener);
  s.epoll.add(s.wake.fd(), EPOLLIN, &s.wake);
  s.running.store(true);
  s.thread = std::thread([&s] { s.listen_loop(); });
  log::info("engine_started", {{"port", std::to_string(s.bound_port)},
                               {"threading", std::string(to_string(s.matrix.threading.kind))},
                               {"workers", std::to_string(s.matrix.threading.worker_count)},
                               {"buffers", std::string(buffers::to_string(s.matrix.buffers.kind))},
                               {"table", std::string(learn::to_string(s.matrix.table))}});
}

void Engine::stop() {
  if (!impl_) return;
  auto& s = *impl_;
  if (!s.running.exchange(false)) return;
  s.wake.notify();
  s.thread.join();
  s.listener.reset();
  s.runtime->stop();
  log::info("engine_stopped", {{"port", std::to_string(s.bound_port)}});
}

bool Engine::running() const noexcept { return impl_->running.load(); }
std::uint16_t Engine::port() const noexcept { return impl_->bound_port; }
const StrategyMatrix& Engine::matrix() const noexcept { return impl_->matrix; }

EngineStats Engine::stats() const {
  const auto& s = *impl_;
  EngineStats out;
  if (s.runtime) s.runtime->collect(out);
  out.connections_accepted = s.accepted.get();
  out.connections_ready = s.ready.get();
  out.protocol_errors += s.handshake_errors.get();
  out.connections_closed += s.handshake_closes.get();
  return out;
}

std::size_t Engine::table_size() const { return impl_->table.size(); }

namespace {
std::atomic<bool> g_stop_requested{false};
extern "C" void on_stop_signal(int) { g_stop_requested.store(true); }
}  // namespace

EngineStats run_engine(const StrategyMatrix& matrix) {
  Engine engine(matrix);
  engine.start();
  g_stop_requested.store(false);
  struct sigaction sa {};
  sa.sa_handler = on_stop_signal;
  sigemptyset(&sa.sa_mask);
  ::sigaction(SIGINT, &sa, nullptr);
  ::sigaction(SIGTERM, &sa, nullptr);
  while (!g_stop_requested.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  engine.stop();
  return engine.stats();
}

}  // namespace ofb::engine
