#include "session.hpp"

#include <sys/epoll.h>

#include <cstring>
#include <string>

#include "ofbench/log.hpp"

namespace ofb::engine::detail {

namespace {

// Below this much free space the input buffer is compacted before reading.
constexpr std::size_t kCompactThreshold = 512;

bool answer_zero_copy(const wire::Frame& frame, std::uint64_t dpid, buffers::IoBuffer& out, WorkerContext& ctx,
                      Sample& sample) {
  const std::uint64_t t0 = sample.active ? now_ns() : 0;
  auto view = wire::view_packet_in(frame.header, frame.body());
  if (!view) return false;
  const std::uint64_t t1 = sample.active ? now_ns() : 0;
  const std::uint64_t src = view->src_mac();
  const std::uint64_t dst = view->dst_mac();
  const auto decision = ctx.table.learn_and_decide(dpid, view->in_port, src, dst, ctx.index);
  const std::uint64_t t2 = sample.active ? now_ns() : 0;
  auto written = wire::encode_flow_mod_into(
      make_learned_flow(ctx.matrix, view->xid, view->buffer_id, view->in_port, src, dst, decision), out.writable());
  if (!written) return false;
  out.commit(*written);
  if (sample.active) {
    const std::uint64_t t3 = now_ns();
    sample.decode += t1 - t0;
    sample.app += t2 - t1;
    sample.encode += t3 - t2;
  }
  return true;
}

// The legacy pipeline: copy the message into its own buffer, materialize it
// as an object, build a reply object, serialize it into another buffer and
// copy that into the connection's output.
bool answer_with_objects(const wire::Frame& frame, std::uint64_t dpid, buffers::IoBuffer& out,
                         WorkerContext& ctx, Sample& sample) {
  auto& pool = ctx.pool;
  const std::uint64_t t0 = sample.active ? now_ns() : 0;
  buffers::IoBuffer msg = pool.acquire(frame.bytes.size());
  std::memcpy(msg.writable().data(), frame.bytes.data(), frame.bytes.size());
  msg.commit(frame.bytes.size());
  pool.note_copy(frame.bytes.size());
  auto decoded = wire::decode_message(frame.header, msg.readable().subspan(wire::kHeaderSize));
  if (!decoded || !std::holds_alternative<wire::PacketIn>(*decoded)) {
    pool.release(std::move(msg));
    return false;
  }
  const auto& pin = std::get<wire::PacketIn>(*decoded);
  pool.note_allocation();
  pool.note_copy(pin.frame.size());
  const std::uint64_t t1 = sample.active ? now_ns() : 0;
  const std::uint64_t src = pin.src_mac().to_u64();
  const std::uint64_t dst = pin.dst_mac().to_u64();
  const auto decision = ctx.table.learn_and_decide(dpid, pin.in_port, src, dst, ctx.index);
  const std::uint64_t t2 = sample.active ? now_ns() : 0;
  wire::Message reply{wire::make_flow_mod(make_learned_flow(ctx.matrix, pin.xid, pin.buffer_id, pin.in_port, src, dst, decision))};
  pool.note_allocation();
  buffers::IoBuffer serialized = pool.acquire(wire::encoded_size(reply));
  auto written = wire::encode_into(reply, serialized.writable());
  bool ok = written.ok() && out.writable_size() >= *written;
  if (ok) {
    serialized.commit(*written);
    std::memcpy(out.writable().data(), serialized.readable().data(), *written);
    out.commit(*written);
    pool.note_copy(*written);
  }
  pool.release(std::move(serialized));
  pool.release(std::move(msg));
  if (sample.active) {
    const std::uint64_t t3 = now_ns();
    sample.decode += t1 - t0;
    sample.app += t2 - t1;
    sample.encode += t3 - t2;
  }
  return ok;
}

}  // namespace

// Makes room for `need` bytes at the end of conn.out, flushing and
// compacting first.  Returns false if the socket cannot take more yet.
bool reserve_output(Connection& conn, WorkerContext& ctx, Sample& sample, std::size_t need, Status& status) {
  status = Status::Open;
  if (conn.out.writable_size() >= need) return true;
  status = flush(conn, ctx, sample);
  if (status == Status::Closed) return false;
  if (conn.out.writable_size() >= need) return true;
  ctx.pool.note_copy(conn.out.compact());
  if (conn.out.writable_size() >= need) return true;
  if (conn.out.readable_size() == 0) {
    conn.out = ctx.pool.grow_exclusive(std::move(conn.out), need);
    return true;
  }
  conn.want_write = true;
  ctx.counters.backpressure_stalls.add();
  return false;
}

Status handle_control(Connection& conn, WorkerContext& ctx, const wire::Frame& frame, Sample& sample) {
  auto decoded = wire::decode_message(frame.header, frame.body());
  if (!decoded) {
    ctx.counters.protocol_errors.add();
    close_connection(conn, ctx, wire::to_string(decoded.error()).data());
    return Status::Closed;
  }
  if (const auto* echo = std::get_if<wire::EchoRequest>(&*decoded)) {
    wire::Message reply{wire::EchoReply{echo->xid, echo->data}};
    const auto size = wire::encoded_size(reply);
    Status st;
    if (!reserve_output(conn, ctx, sample, size, st)) return st;
    auto n = wire::encode_into(reply, conn.out.writable());
    if (n) conn.out.commit(*n);
  }
  // Everything else is ignored once READY.
  return Status::Open;
}

wire::LearnedFlow make_learned_flow(const StrategyMatrix& m, std::uint32_t xid, std::uint32_t buffer_id,
                                    std::uint16_t in_port, std::uint64_t src, std::uint64_t dst,
                                    const learn::Decision& d) {
  wire::LearnedFlow f;
  f.xid = xid;
  f.buffer_id = buffer_id;
  f.in_port = in_port;
  f.src_mac = src;
  f.dst_mac = dst;
  f.out_port = d.out_port();
  f.idle_timeout = m.flow_idle_timeout;
  f.hard_timeout = m.flow_hard_timeout;
  return f;
}

EngineStats WorkerContext::snapshot() const {
  EngineStats s;
  s.packet_ins = counters.packet_ins.get();
  s.flow_mods = counters.flow_mods.get();
  s.packet_outs = counters.packet_outs.get();
  s.handoffs = counters.handoffs.get();
  s.lock_acquisitions = counters.lock_acquisitions.get();
  s.protocol_errors = counters.protocol_errors.get();
  s.malformed_closes = counters.malformed_closes.get();
  s.connections_closed = counters.connections_closed.get();
  s.backpressure_stalls = counters.backpressure_stalls.get();
  s.alloc = pool.stats();
  s.phases.decode_ns = counters.decode_ns.get();
  s.phases.app_ns = counters.app_ns.get();
  s.phases.encode_ns = counters.encode_ns.get();
  s.phases.io_ns = counters.io_ns.get();
  s.phases.sampled_ns = counters.sampled_ns.get();
  s.phases.samples = counters.samples.get();
  return s;
}

void record_sample(WorkerContext& ctx, const Sample& s, std::uint64_t wall_ns) noexcept {
  if (!s.active) return;
  ctx.counters.decode_ns.add(s.decode);
  ctx.counters.app_ns.add(s.app);
  ctx.counters.encode_ns.add(s.encode);
  ctx.counters.io_ns.add(s.io);
  ctx.counters.sampled_ns.add(wall_ns);
  ctx.counters.samples.add();
}

bool answer_packet_in(const wire::Frame& frame, std::uint64_t datapath_id, buffers::IoBuffer& out,
                      WorkerContext& ctx, Sample& sample) {
  if (ctx.pool.strategy().kind == buffers::BufferKind::PreallocatedPool) {
    return answer_zero_copy(frame, datapath_id, out, ctx, sample);
  }
  return answer_with_objects(frame, datapath_id, out, ctx, sample);
}

void attach_buffers(Connection& conn, WorkerContext& ctx) {
  const std::size_t size = ctx.matrix.buffers.pool_buffer_size;
  if (!conn.in.valid()) conn.in = ctx.pool.acquire(size);
  if (!conn.out.valid()) conn.out = ctx.pool.acquire(size);
  if (!conn.carried.empty()) {
    if (conn.carried.size() > conn.in.writable_size()) {
      conn.in = ctx.pool.grow_exclusive(std::move(conn.in), conn.in.write_cursor() + conn.carried.size());
    }
    std::memcpy(conn.in.writable().data(), conn.carried.data(), conn.carried.size());
    conn.in.commit(conn.carried.size());
    ctx.pool.note_copy(conn.carried.size());
    conn.carried.clear();
    conn.carried.shrink_to_fit();
  }
}

void close_connection(Connection& conn, WorkerContext& ctx, const char* reason) {
  if (conn.closed) return;
  conn.closed = true;
  if (conn.in.valid()) ctx.pool.release(std::move(conn.in));
  if (conn.out.valid()) ctx.pool.release(std::move(conn.out));
  conn.fd.reset();
  ctx.counters.connections_closed.add();
  log::info("connection_closed", {{"conn", std::to_string(conn.id)},
                                  {"dpid", std::to_string(conn.state.datapath_id)},
                                  {"worker", std::to_string(ctx.index)},
                                  {"reason", reason}});
}

Status flush(Connection& conn, WorkerContext& ctx, Sample& sample) {
  while (conn.out.readable_size() > 0) {
    const std::uint64_t t0 = sample.active ? now_ns() : 0;
    std::size_t n = 0;
    const auto r = net::write_some(conn.fd.get(), conn.out.readable(), n);
    if (sample.active) sample.io += now_ns() - t0;
    if (r == net::IoResult::Ok && n > 0) {
      conn.out.consume(n);
      continue;
    }
    if (r == net::IoResult::WouldBlock || (r == net::IoResult::Ok && n == 0)) {
      conn.want_write = true;
      return Status::Open;
    }
    close_connection(conn, ctx, "write_error");
    return Status::Closed;
  }
  conn.want_write = false;
  return Status::Open;
}

Status process_buffered(Connection& conn, WorkerContext& ctx, Sample& sample) {
  for (;;) {
    auto frame = wire::next_frame(conn.in.readable());
    if (!frame) {
      if (frame.error() == wire::WireError::MalformedLength) ctx.counters.malformed_closes.add();
      ctx.counters.protocol_errors.add();
      close_connection(conn, ctx, wire::to_string(frame.error()).data());
      return Status::Closed;
    }
    if (!frame->has_value()) return Status::Open;
    const wire::Frame& f = **frame;
    if (f.header.type == wire::MsgType::PacketIn) {
      Status st;
      if (!reserve_output(conn, ctx, sample, wire::kMinimalFlowModSize, st)) return st;
      if (!answer_packet_in(f, conn.state.datapath_id, conn.out, ctx, sample)) {
        ctx.counters.protocol_errors.add();
        close_connection(conn, ctx, "bad_packet_in");
        return Status::Closed;
      }
      ctx.counters.packet_ins.add();
      ctx.counters.flow_mods.add();
    } else if (handle_control(conn, ctx, f, sample) == Status::Closed) {
      return Status::Closed;
    } else if (conn.want_write) {
      return Status::Open;
    }
    conn.in.consume(f.bytes.size());
  }
}

Status on_event(Connection& conn, WorkerContext& ctx, std::uint32_t events) {
  Sample sample;
  sample.active = ctx.begin_iteration();
  const std::uint64_t start = sample.active ? now_ns() : 0;
  Status st = Status::Open;

  if (conn.want_write) {
    st = flush(conn, ctx, sample);
    if (st == Status::Open && !conn.want_write) st = process_buffered(conn, ctx, sample);
  } else if ((events & (EPOLLIN | EPOLLHUP | EPOLLERR)) != 0) {
    if (conn.in.writable_size() < kCompactThreshold) ctx.pool.note_copy(conn.in.compact());
    if (conn.in.writable_size() == 0) {
      conn.in = ctx.pool.grow_exclusive(std::move(conn.in), conn.in.capacity() * 2);
    }
    const std::uint64_t t0 = sample.active ? now_ns() : 0;
    std::size_t n = 0;
    const auto r = net::read_some(conn.fd.get(), conn.in.writable(), n);
    if (sample.active) sample.io += now_ns() - t0;
    if (r == net::IoResult::Closed || r == net::IoResult::Error) {
      close_connection(conn, ctx, r == net::IoResult::Closed ? "peer_closed" : "read_error");
      st = Status::Closed;
    } else {
      if (r == net::IoResult::Ok) conn.in.commit(n);
      st = process_buffered(conn, ctx, sample);
    }
  }
  if (st == Status::Open && !conn.want_write) st = flush(conn, ctx, sample);
  ctx.sync_lock_counter();
  if (sample.active) record_sample(ctx, sample, now_ns() - start);
  return st;
}

}  // namespace ofb::engine::detail
