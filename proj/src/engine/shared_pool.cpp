#include <sys/epoll.h>

#include <array>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "ofbench/log.hpp"
#include "runtime.hpp"

namespace ofb::engine::detail {

namespace {

// Workers take turns being the poller.  The poller harvests readiness events
// onto a shared list and wakes the others; whoever pops an event handles the
// connection end to end.  EPOLLONESHOT keeps a connection with one worker at
// a time until it is re-armed.
class SharedPoolQueue final : public Runtime {
 public:
  SharedPoolQueue(const StrategyMatrix& m, learn::MacTable& table) {
    for (std::size_t i = 0; i < m.threading.worker_count; ++i) {
      contexts_.push_back(std::make_unique<WorkerContext>(i, m, table));
    }
  }

  void start() override {
    running_.store(true);
    epoll_.add(wake_.fd(), EPOLLIN | EPOLLONESHOT, &wake_);
    for (std::size_t i = 0; i < contexts_.size(); ++i) {
      threads_.emplace_back([this, i] { loop(*contexts_[i]); });
    }
  }

  void stop() override {
    if (!running_.exchange(false)) return;
    wake_.notify();
    {
      std::lock_guard lock(mu_);
      cv_.notify_all();
    }
    for (auto& t : threads_) t.join();
    threads_.clear();
    auto& ctx = *contexts_.front();
    std::lock_guard lock(registry_mu_);
    for (auto& conn : inbox_) registry_.emplace(conn.get(), std::move(conn));
    inbox_.clear();
    for (auto& [c, owned] : registry_) {
      if (c->closed) continue;
      if (!c->in.valid()) attach_buffers(*c, ctx);
      Sample none;
      flush(*c, ctx, none);
      close_connection(*c, ctx, "engine_stop");
    }
    registry_.clear();
  }

  void adopt(std::unique_ptr<Connection> conn) override {
    {
      std::lock_guard lock(registry_mu_);
      inbox_.push_back(std::move(conn));
    }
    wake_.notify();
  }

  void collect(EngineStats& into) const override {
    for (const auto& c : contexts_) into += c->snapshot();
  }

 private:
  struct Ready {
    void* tag;
    std::uint32_t events;
    std::size_t harvester;
  };

  void loop(WorkerContext& ctx) {
    if (ctx.matrix.threading.pin_threads) pin_worker(ctx.index);
    Ready item{};
    while (next(ctx, item)) {
      if (item.harvester != ctx.index) ctx.counters.handoffs.add();
      if (item.tag == &wake_) {
        wake_.drain();
        take_inbox(ctx);
        epoll_.modify(wake_.fd(), EPOLLIN | EPOLLONESHOT, &wake_);
        continue;
      }
      auto* conn = static_cast<Connection*>(item.tag);
      rearm(conn, ctx, on_event(*conn, ctx, item.events));
    }
  }

  // Pops a ready event, becoming the poller when the list is empty and
  // nobody else is polling.  Returns false on shutdown.
  bool next(WorkerContext& ctx, Ready& out) {
    std::unique_lock lock(mu_);
    while (running_.load(std::memory_order_relaxed)) {
      if (!ready_.empty()) {
        out = ready_.front();
        ready_.pop_front();
        return true;
      }
      if (polling_) {
        cv_.wait(lock);
        continue;
      }
      polling_ = true;
      lock.unlock();
      const int n = epoll_.wait(events_, 100);
      lock.lock();
      polling_ = false;
      for (int i = 0; i < n; ++i) {
        const auto& ev = events_[static_cast<std::size_t>(i)];
        ready_.push_back(Ready{ev.data.ptr, ev.events, ctx.index});
      }
      // Wake the others: some take the new events, one becomes the poller.
      cv_.notify_all();
    }
    return false;
  }

  void take_inbox(WorkerContext& ctx) {
    std::vector<std::unique_ptr<Connection>> batch;
    {
      std::lock_guard lock(registry_mu_);
      batch.swap(inbox_);
    }
    for (auto& owned : batch) {
      Connection* c = owned.get();
      c->state.owner_worker = -1;  // any worker may serve it
      attach_buffers(*c, ctx);
      {
        std::lock_guard lock(registry_mu_);
        registry_.emplace(c, std::move(owned));
      }
      Sample none;
      Status st = process_buffered(*c, ctx, none);
      if (st == Status::Open && !c->want_write) st = flush(*c, ctx, none);
      rearm(c, ctx, st);
    }
  }

  void rearm(Connection* c, WorkerContext& ctx, Status st) {
    (void)ctx;
    if (st == Status::Closed) {
      std::lock_guard lock(registry_mu_);
      registry_.erase(c);
      return;
    }
    const std::uint32_t mask = (c->want_write ? EPOLLOUT : EPOLLIN) | EPOLLONESHOT;
    c->interest = mask;
    if (c->registered) {
      epoll_.modify(c->fd.get(), mask, c);
    } else {
      epoll_.add(c->fd.get(), mask, c);
      c->registered = true;
    }
  }

  std::vector<std::unique_ptr<WorkerContext>> contexts_;
  std::vector<std::thread> threads_;
  std::atomic<bool> running_{false};

  net::Epoll epoll_;
  net::EventFd wake_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Ready> ready_;
  bool polling_ = false;
  std::array<epoll_event, 256> events_{};  // used only by the current poller

  std::mutex registry_mu_;
  std::vector<std::unique_ptr<Connection>> inbox_;
  std::unordered_map<Connection*, std::unique_ptr<Connection>> registry_;
};

}  // namespace

std::unique_ptr<Runtime> make_shared_pool_queue(const StrategyMatrix& m, learn::MacTable& table) {
  return std::make_unique<SharedPoolQueue>(m, table);
}

}  // namespace ofb::engine::detail
