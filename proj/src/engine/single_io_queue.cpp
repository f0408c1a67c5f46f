#include <sys/epoll.h>

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_map>

#include "ofbench/log.hpp"
#include "runtime.hpp"

namespace ofb::engine::detail {

namespace {

template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  /// Moves `item` in only if there is room.
  bool try_push(T& item) {
    {
      std::lock_guard lock(mu_);
      if (items_.size() >= capacity_) return false;
      items_.push_back(std::move(item));
    }
    not_empty_.notify_one();
    return true;
  }

  /// Blocks while full.  Returns false if the queue was closed.
  bool push(T item) {
    {
      std::unique_lock lock(mu_);
      not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
      if (closed_) return false;
      items_.push_back(std::move(item));
    }
    not_empty_.notify_one();
    return true;
  }

  /// Blocks while empty.  Returns nullopt once closed and empty.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    lock.unlock();
    not_full_.notify_one();
    return item;
  }

  std::size_t drain(std::vector<T>& into) {
    std::size_t n;
    {
      std::lock_guard lock(mu_);
      n = items_.size();
      for (auto& item : items_) into.push_back(std::move(item));
      items_.clear();
    }
    if (n > 0) not_full_.notify_all();
    return n;
  }

  [[nodiscard]] bool empty() const {
    std::lock_guard lock(mu_);
    return items_.empty();
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct WorkItem {
  std::uint64_t conn_id = 0;
  std::uint64_t datapath_id = 0;
  buffers::IoBuffer buf;  // request frame in, reply bytes out
  bool failed = false;
};

// One IO thread owns every socket.  Each packet-in is copied into a work item
// and crosses to a worker through the request queue; the encoded flow-mod
// comes back through the reply queue.  Workers never touch sockets.
class SingleIoQueue final : public Runtime {
 public:
  SingleIoQueue(const StrategyMatrix& m, learn::MacTable& table)
      : io_ctx_(m.threading.worker_count, m, table),
        item_pool_(item_strategy(m)),
        requests_(m.queue_capacity),
        replies_(m.queue_capacity) {
    for (std::size_t i = 0; i < m.threading.worker_count; ++i) {
      contexts_.push_back(std::make_unique<WorkerContext>(i, m, table));
    }
  }

  void start() override {
    running_.store(true);
    epoll_.add(wake_.fd(), EPOLLIN, &wake_);
    for (std::size_t i = 0; i < contexts_.size(); ++i) {
      workers_.emplace_back([this, i] { worker_loop(*contexts_[i]); });
    }
    io_thread_ = std::thread([this] { io_loop(); });
  }

  void stop() override {
    if (!running_.exchange(false)) return;
    wake_.notify();
    io_thread_.join();  // drains in-flight work before closing the queues
    requests_.close();
    replies_.close();
    for (auto& t : workers_) t.join();
    workers_.clear();
  }

  void adopt(std::unique_ptr<Connection> conn) override {
    {
      std::lock_guard lock(inbox_mu_);
      inbox_.push_back(std::move(conn));
    }
    wake_.notify();
  }

  void collect(EngineStats& into) const override {
    EngineStats io = io_ctx_.snapshot();
    io.alloc += item_pool_.stats();
    into += io;
    for (const auto& c : contexts_) into += c->snapshot();
  }

 private:
  // ---- worker side

  void worker_loop(WorkerContext& ctx) {
    if (ctx.matrix.threading.pin_threads) pin_worker(ctx.index);
    while (auto item = requests_.pop()) {
      Sample sample;
      sample.active = ctx.begin_iteration();
      const std::uint64_t start = sample.active ? now_ns() : 0;
      item->failed = !answer(*item, ctx, sample);
      if (!item->failed) {
        ctx.counters.packet_ins.add();
        ctx.counters.flow_mods.add();
      }
      ctx.sync_lock_counter();
      if (sample.active) record_sample(ctx, sample, now_ns() - start);
      ctx.counters.handoffs.add();
      if (!replies_.push(std::move(*item))) break;
      if (io_sleeping_.load()) wake_.notify();
    }
  }

  static bool answer(WorkItem& item, WorkerContext& ctx, Sample& sample) {
    const auto bytes = item.buf.readable();
    auto header = wire::parse_header(bytes);
    if (!header) return false;
    const wire::Frame frame{*header, bytes};
    if (ctx.pool.strategy().kind == buffers::BufferKind::PreallocatedPool) {
      // Reply is encoded over the request in the same buffer.
      const std::uint64_t t0 = sample.active ? now_ns() : 0;
      auto view = wire::view_packet_in(frame.header, frame.body());
      if (!view) return false;
      const std::uint64_t src = view->src_mac();
      const std::uint64_t dst = view->dst_mac();
      const std::uint32_t xid = view->xid;
      const std::uint32_t buffer_id = view->buffer_id;
      const std::uint16_t in_port = view->in_port;
      const std::uint64_t t1 = sample.active ? now_ns() : 0;
      const auto decision = ctx.table.learn_and_decide(item.datapath_id, in_port, src, dst, ctx.index);
      const std::uint64_t t2 = sample.active ? now_ns() : 0;
      item.buf.clear();
      auto written = wire::encode_flow_mod_into(
          make_learned_flow(ctx.matrix, xid, buffer_id, in_port, src, dst, decision), item.buf.writable());
      if (!written) return false;
      item.buf.commit(*written);
      if (sample.active) {
        sample.decode += t1 - t0;
        sample.app += t2 - t1;
        sample.encode += now_ns() - t2;
      }
      return true;
    }
    buffers::IoBuffer reply = ctx.pool.acquire(wire::kMinimalFlowModSize);
    const bool ok = answer_packet_in(frame, item.datapath_id, reply, ctx, sample);
    ctx.pool.release(std::move(item.buf));
    item.buf = std::move(reply);
    return ok;
  }

  // ---- IO side

  void io_loop() {
    auto& ctx = io_ctx_;
    if (ctx.matrix.threading.pin_threads) pin_worker(ctx.index);
    std::array<epoll_event, 256> events{};
    while (running_.load(std::memory_order_relaxed) || in_flight_ > 0) {
      take_inbox();
      drain_replies();
      retry_stalled();
      io_sleeping_.store(true);
      const bool idle = replies_.empty();
      const int n = epoll_.wait(events, idle ? 100 : 0);
      io_sleeping_.store(false);
      for (int i = 0; i < n; ++i) {
        const auto& ev = events[static_cast<std::size_t>(i)];
        if (ev.data.ptr == &wake_) {
          wake_.drain();
          continue;
        }
        auto* conn = static_cast<Connection*>(ev.data.ptr);
        if (!conn->closed) service(*conn, ev.events);
      }
      reap();
      if (!running_.load(std::memory_order_relaxed) && in_flight_ > 0 && n == 0) {
        // Shutting down: keep collecting replies for what was already queued.
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
      }
    }
    take_inbox();
    for (auto& [id, conn] : conns_) {
      if (conn->closed) continue;
      Sample none;
      flush(*conn, ctx, none);
      close_connection(*conn, ctx, "engine_stop");
    }
    conns_.clear();
  }

  void take_inbox() {
    std::vector<std::unique_ptr<Connection>> batch;
    {
      std::lock_guard lock(inbox_mu_);
      batch.swap(inbox_);
    }
    for (auto& owned : batch) {
      Connection* c = owned.get();
      c->state.owner_worker = static_cast<int>(io_ctx_.index);
      attach_buffers(*c, io_ctx_);
      c->interest = EPOLLIN;
      epoll_.add(c->fd.get(), c->interest, c);
      c->registered = true;
      conns_.emplace(c->id, std::move(owned));
      Sample none;
      dispatch(*c, none);
    }
  }

  void service(Connection& conn, std::uint32_t events) {
    auto& ctx = io_ctx_;
    Sample sample;
    sample.active = ctx.begin_iteration();
    const std::uint64_t start = sample.active ? now_ns() : 0;

    if ((events & EPOLLOUT) != 0 && conn.want_write) {
      if (flush(conn, ctx, sample) == Status::Closed) return;
    }
    if ((events & (EPOLLIN | EPOLLHUP | EPOLLERR)) != 0 && !stalled(conn)) {
      if (conn.in.writable_size() < 512) ctx.pool.note_copy(conn.in.compact());
      if (conn.in.writable_size() == 0) {
        conn.in = ctx.pool.grow_exclusive(std::move(conn.in), conn.in.capacity() * 2);
      }
      const std::uint64_t t0 = sample.active ? now_ns() : 0;
      std::size_t n = 0;
      const auto r = net::read_some(conn.fd.get(), conn.in.writable(), n);
      if (sample.active) sample.io += now_ns() - t0;
      if (r == net::IoResult::Closed || r == net::IoResult::Error) {
        close_connection(conn, ctx, r == net::IoResult::Closed ? "peer_closed" : "read_error");
        return;
      }
      if (r == net::IoResult::Ok) conn.in.commit(n);
      if (dispatch(conn, sample) == Status::Closed) return;
    }
    if (!conn.want_write && flush(conn, ctx, sample) == Status::Closed) return;
    update_interest(conn);
    if (sample.active) record_sample(ctx, sample, now_ns() - start);
  }

  // Queues every complete packet-in; answers control messages inline.
  Status dispatch(Connection& conn, Sample& sample) {
    auto& ctx = io_ctx_;
    for (;;) {
      auto frame = wire::next_frame(conn.in.readable());
      if (!frame) {
        if (frame.error() == wire::WireError::MalformedLength) ctx.counters.malformed_closes.add();
        ctx.counters.protocol_errors.add();
        close_connection(conn, ctx, wire::to_string(frame.error()).data());
        return Status::Closed;
      }
      if (!frame->has_value()) break;
      const wire::Frame& f = **frame;
      if (f.header.type == wire::MsgType::PacketIn) {
        if (!spare_.valid()) spare_ = item_pool_.acquire(f.bytes.size());
        if (spare_.capacity() < f.bytes.size()) {
          spare_ = item_pool_.grow_exclusive(std::move(spare_), f.bytes.size());
        }
        std::memcpy(spare_.writable().data(), f.bytes.data(), f.bytes.size());
        spare_.commit(f.bytes.size());
        WorkItem item{conn.id, conn.state.datapath_id, std::move(spare_), false};
        if (!requests_.try_push(item)) {
          spare_ = std::move(item.buf);
          spare_.clear();
          stall(conn);
          return Status::Open;
        }
        item_pool_.note_copy(f.bytes.size());
        ctx.counters.handoffs.add();
        ++in_flight_;
      } else {
        const auto st = handle_control(conn, ctx, f, sample);
        if (st == Status::Closed) return st;
        if (conn.want_write) return Status::Open;
      }
      conn.in.consume(f.bytes.size());
    }
    return Status::Open;
  }

  void drain_replies() {
    auto& ctx = io_ctx_;
    batch_.clear();
    replies_.drain(batch_);
    for (auto& item : batch_) {
      --in_flight_;
      auto it = conns_.find(item.conn_id);
      if (it != conns_.end() && !it->second->closed) {
        Connection& conn = *it->second;
        if (item.failed) {
          ctx.counters.protocol_errors.add();
          close_connection(conn, ctx, "bad_packet_in");
        } else {
          const auto bytes = item.buf.readable();
          if (conn.out.writable_size() < bytes.size()) ctx.pool.note_copy(conn.out.compact());
          if (conn.out.writable_size() < bytes.size()) {
            conn.out = ctx.pool.grow_exclusive(std::move(conn.out), conn.out.capacity() * 2 + bytes.size());
          }
          std::memcpy(conn.out.writable().data(), bytes.data(), bytes.size());
          conn.out.commit(bytes.size());
          ctx.pool.note_copy(bytes.size());
          dirty_.push_back(&conn);
        }
      }
      item_pool_.release(std::move(item.buf));
    }
    for (Connection* conn : dirty_) {
      if (conn->closed || conn->want_write) continue;
      Sample none;
      if (flush(*conn, ctx, none) == Status::Open) update_interest(*conn);
    }
    dirty_.clear();
  }

  [[nodiscard]] bool stalled(const Connection& conn) const {
    for (const Connection* c : stalled_) {
      if (c == &conn) return true;
    }
    return false;
  }

  void stall(Connection& conn) {
    if (stalled(conn)) return;
    io_ctx_.counters.backpressure_stalls.add();
    stalled_.push_back(&conn);
    update_interest(conn);
  }

  void retry_stalled() {
    if (stalled_.empty()) return;
    std::vector<Connection*> retry;
    retry.swap(stalled_);
    for (Connection* conn : retry) {
      if (conn->closed) continue;
      Sample none;
      if (dispatch(*conn, none) == Status::Open) update_interest(*conn);
    }
  }

  void update_interest(Connection& conn) {
    if (conn.closed) return;
    std::uint32_t mask = stalled(conn) ? 0u : static_cast<std::uint32_t>(EPOLLIN);
    if (conn.want_write) mask |= EPOLLOUT;
    if (mask != conn.interest) {
      conn.interest = mask;
      epoll_.modify(conn.fd.get(), mask, &conn);
    }
  }

  void reap() {
    for (auto it = conns_.begin(); it != conns_.end();) {
      if (it->second->closed && !stalled(*it->second)) {
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
  }

  // Work items live in their own pool, deep enough for everything that can
  // be queued in both directions at once.
  static buffers::BufferStrategy item_strategy(const StrategyMatrix& m) {
    buffers::BufferStrategy s = m.buffers;
    s.pool_buffer_size = 128;
    s.pool_depth = 2 * m.queue_capacity + m.threading.worker_count + 2;
    return s;
  }

  WorkerContext io_ctx_;
  buffers::BufferPool item_pool_;
  std::vector<std::unique_ptr<WorkerContext>> contexts_;
  BoundedQueue<WorkItem> requests_;
  BoundedQueue<WorkItem> replies_;

  net::Epoll epoll_;
  net::EventFd wake_;
  std::atomic<bool> io_sleeping_{false};
  std::atomic<bool> running_{false};
  std::thread io_thread_;
  std::vector<std::thread> workers_;

  std::mutex inbox_mu_;
  std::vector<std::unique_ptr<Connection>> inbox_;

  // IO-thread state.
  std::unordered_map<std::uint64_t, std::unique_ptr<Connection>> conns_;
  std::vector<Connection*> stalled_;
  std::vector<Connection*> dirty_;
  std::vector<WorkItem> batch_;
  buffers::IoBuffer spare_;
  std::size_t in_flight_ = 0;
};

}  // namespace

std::unique_ptr<Runtime> make_single_io_queue(const StrategyMatrix& m, learn::MacTable& table) {
  return std::make_unique<SingleIoQueue>(m, table);
}

}  // namespace ofb::engine::detail
