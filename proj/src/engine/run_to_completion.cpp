#include <sys/epoll.h>

#include <array>
#include <atomic>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "ofbench/log.hpp"
#include "runtime.hpp"

namespace ofb::engine::detail {

namespace {

// Each worker owns its connections for their whole lifetime: read, decide,
// encode and write all happen on that worker.
class RtcWorker {
 public:
  RtcWorker(std::size_t index, const StrategyMatrix& m, learn::MacTable& table) : ctx_(index, m, table) {}

  void start() {
    running_.store(true);
    epoll_.add(wake_.fd(), EPOLLIN, &wake_);
    thread_ = std::thread([this] { loop(); });
  }

  void stop() {
    running_.store(false);
    wake_.notify();
    if (thread_.joinable()) thread_.join();
  }

  void adopt(std::unique_ptr<Connection> conn) {
    {
      std::lock_guard lock(inbox_mu_);
      inbox_.push_back(std::move(conn));
    }
    wake_.notify();
  }

  [[nodiscard]] EngineStats snapshot() const { return ctx_.snapshot(); }

 private:
  void loop() {
    if (ctx_.matrix.threading.pin_threads) pin_worker(ctx_.index);
    std::array<epoll_event, 256> events{};
    while (running_.load(std::memory_order_relaxed)) {
      const int n = epoll_.wait(events, 100);
      for (int i = 0; i < n; ++i) {
        void* tag = events[static_cast<std::size_t>(i)].data.ptr;
        if (tag == &wake_) {
          wake_.drain();
          take_inbox();
          continue;
        }
        handle(static_cast<Connection*>(tag), events[static_cast<std::size_t>(i)].events);
      }
    }
    shutdown();
  }

  void take_inbox() {
    std::vector<std::unique_ptr<Connection>> batch;
    {
      std::lock_guard lock(inbox_mu_);
      batch.swap(inbox_);
    }
    for (auto& conn : batch) {
      Connection* c = conn.get();
      c->state.owner_worker = static_cast<int>(ctx_.index);
      attach_buffers(*c, ctx_);
      c->interest = EPOLLIN;
      epoll_.add(c->fd.get(), c->interest, c);
      c->registered = true;
      conns_.emplace(c, std::move(conn));
      // Packet-ins that arrived together with the handshake.
      Sample none;
      Status st = process_buffered(*c, ctx_, none);
      if (st == Status::Open && !c->want_write) st = flush(*c, ctx_, none);
      after(c, st);
    }
  }

  void handle(Connection* c, std::uint32_t events) {
    after(c, on_event(*c, ctx_, events));
  }

  void after(Connection* c, Status st) {
    if (st == Status::Closed) {
      conns_.erase(c);  // closing the fd removed it from the epoll set
      return;
    }
    const std::uint32_t want = c->want_write ? EPOLLOUT : EPOLLIN;
    if (want != c->interest) {
      c->interest = want;
      epoll_.modify(c->fd.get(), want, c);
    }
  }

  void shutdown() {
    take_inbox();
    for (auto& [c, owned] : conns_) {
      Sample none;
      flush(*c, ctx_, none);
      close_connection(*c, ctx_, "engine_stop");
    }
    conns_.clear();
  }

  WorkerContext ctx_;
  net::Epoll epoll_;
  net::EventFd wake_;
  std::mutex inbox_mu_;
  std::vector<std::unique_ptr<Connection>> inbox_;
  std::unordered_map<Connection*, std::unique_ptr<Connection>> conns_;
  std::atomic<bool> running_{false};
  std::thread thread_;
};

class RunToCompletion final : public Runtime {
 public:
  RunToCompletion(const StrategyMatrix& m, learn::MacTable& table) {
    for (std::size_t i = 0; i < m.threading.worker_count; ++i) {
      workers_.push_back(std::make_unique<RtcWorker>(i, m, table));
    }
  }

  void start() override {
    for (auto& w : workers_) w->start();
  }
  void stop() override {
    for (auto& w : workers_) w->stop();
  }

  void adopt(std::unique_ptr<Connection> conn) override {
    // Static switch partitioning: the same rule as the table's shard function.
    const std::size_t owner = static_cast<std::size_t>(conn->state.datapath_id % workers_.size());
    workers_[owner]->adopt(std::move(conn));
  }

  void collect(EngineStats& into) const override {
    for (const auto& w : workers_) into += w->snapshot();
  }

 private:
  std::vector<std::unique_ptr<RtcWorker>> workers_;
};

}  // namespace

std::unique_ptr<Runtime> make_run_to_completion(const StrategyMatrix& m, learn::MacTable& table) {
  return std::make_unique<RunToCompletion>(m, table);
}

}  // namespace ofb::engine::detail
