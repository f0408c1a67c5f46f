#include <poll.h>
#include <sys/epoll.h>

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "byte_io.hpp"
#include "ofbench/bench.hpp"
#include "ofbench/log.hpp"
#include "ofbench/net.hpp"

namespace ofb::bench {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t now_ns() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now().time_since_epoch()).count());
}

// Bytes of encoded probes buffered per switch before waiting for the socket.
constexpr std::size_t kMaxPendingOut = 64 * 1024;
constexpr std::size_t kReadChunk = 256 * 1024;
// Sampled send times kept per switch when the controller's xids don't match.
constexpr std::size_t kMaxSampled = 1u << 14;

std::size_t pow2_at_least(std::size_t n) {
  std::size_t p = 64;
  while (p < n) p <<= 1;
  return p;
}

struct LoopTally {
  std::uint64_t probes = 0;
  std::uint64_t carried_in = 0;  // outstanding when the loop started
  AuditReport audit;
  std::vector<double> latencies_us;
  std::uint64_t max_in_flight = 0;
  std::uint64_t end_ns = 0;
  bool lost = false;
};

struct Switch {
  std::uint64_t id = 0;
  std::uint64_t dpid = 0;
  net::UniqueFd fd;
  bool dead = false;  // could not reconnect; sends nothing
  bool lost = false;

  std::vector<std::uint8_t> in;
  std::size_t in_begin = 0;
  std::size_t in_end = 0;
  std::vector<std::uint8_t> out;
  std::size_t out_begin = 0;
  bool want_out = false;

  std::uint64_t seq = 0;  // next probe
  std::uint64_t sent_this_loop = 0;
  std::uint64_t in_flight = 0;
  std::uint64_t pending_latency_ns = 0;  // latency mode
  std::unordered_map<std::uint32_t, std::uint64_t> sampled;  // xid -> send time
  std::vector<std::uint64_t> outstanding_bits;
  std::size_t ring_mask = 0;
};

class Emulator;

struct Shared {
  Shared(const BenchConfig& c, const EngineTap& t, std::size_t n) : cfg(c), tap(t), threads(n) {}

  const BenchConfig& cfg;
  const EngineTap& tap;
  std::size_t threads;

  std::uint64_t loop_start_ns = 0;
  std::size_t loop_index = 0;
  std::size_t attempts = 1;
  bool rerun = false;
  bool done = false;
  bool failed = false;
  std::string failure;
  std::optional<engine::EngineStats> engine_before;

  std::mutex mu;
  std::vector<LoopTally> tallies;  // one per thread, filled before the end barrier
  std::vector<LoopResult> results;
  std::vector<CapturedResponse> captured;
};

struct PhaseCompletion {
  Shared* shared;
  bool* at_end;
  void operator()() noexcept;
};

class Emulator {
 public:
  Emulator(Shared& shared, std::size_t index, std::vector<std::uint64_t> switch_ids)
      : shared_(shared), cfg_(shared.cfg), index_(index) {
    for (auto id : switch_ids) {
      auto sw = std::make_unique<Switch>();
      sw->id = id;
      sw->dpid = datapath_id_for(id);
      const std::size_t ring = pow2_at_least(cfg_.window * 4);
      sw->outstanding_bits.assign(ring / 64, 0);
      sw->ring_mask = ring - 1;
      sw->in.resize(kReadChunk);
      switches_.push_back(std::move(sw));
    }
  }

  // Returns an error description, empty on success.
  std::string connect_all() {
    try {
      for (auto& sw : switches_) connect_switch(*sw);
    } catch (const std::exception& e) {
      return e.what();
    }
    if (cfg_.handshake_delay_ms > 0) idle_for(std::chrono::milliseconds(cfg_.handshake_delay_ms));
    return {};
  }

  void run_loop(LoopTally& tally) {
    tally_ = &tally;
    for (auto& sw : switches_) {
      sw->sent_this_loop = 0;
      tally.carried_in += sw->in_flight;
    }
    const std::uint64_t start = shared_.loop_start_ns;
    const auto duration_ns = static_cast<std::uint64_t>(cfg_.loop_duration_s * 1e9);
    const std::uint64_t deadline = start + duration_ns;
    sending_ = duration_ns > 0;

    for (auto& sw : switches_) pump(*sw);
    while (sending_) {
      const std::uint64_t now = now_ns();
      if (now >= deadline || all_limits_reached()) break;
      const auto wait_ms = static_cast<int>(std::min<std::uint64_t>((deadline - now) / 1'000'000 + 1, 10));
      poll_once(wait_ms);
    }
    sending_ = false;

    const std::uint64_t drain_deadline = now_ns() + static_cast<std::uint64_t>(cfg_.drain_timeout_s * 1e9);
    while (any_in_flight() && now_ns() < drain_deadline) poll_once(5);

    tally.end_ns = now_ns();
    for (auto& sw : switches_) tally.lost = tally.lost || sw->lost;
    tally_ = nullptr;
  }

  // Re-establishes switches whose connection dropped.
  void reconnect_lost() {
    for (auto& sw : switches_) {
      if (!sw->lost || sw->dead) continue;
      try {
        connect_switch(*sw);
      } catch (const std::exception& e) {
        log::warn("switch_reconnect_failed", {{"switch", std::to_string(sw->id)}, {"error", e.what()}});
        sw->dead = true;
      }
    }
  }

  std::vector<CapturedResponse>& captured() { return captured_; }

 private:
  void connect_switch(Switch& sw) {
    if (sw.fd.valid()) epoll_.remove(sw.fd.get());
    sw.fd = net::connect_tcp(cfg_.controller_host, cfg_.controller_port, cfg_.connect_timeout);
    sw.lost = false;
    sw.in_begin = sw.in_end = 0;
    sw.out.clear();
    sw.out_begin = 0;
    sw.want_out = false;
    sw.in_flight = 0;
    sw.pending_latency_ns = 0;
    sw.sampled.clear();
    std::fill(sw.outstanding_bits.begin(), sw.outstanding_bits.end(), 0);
    handshake(sw);
    epoll_.add(sw.fd.get(), EPOLLIN, &sw);
  }

  // Blocking handshake: HELLO out, answer FEATURES_REQUEST, keep whatever
  // else arrived for the main loop.
  void handshake(Switch& sw) {
    send_blocking(sw, wire::encode(wire::Hello{1}));
    const auto deadline = Clock::now() + cfg_.connect_timeout;
    bool featured = false;
    while (!featured) {
      if (Clock::now() > deadline) throw ConnectionLost("handshake timed out for switch " + std::to_string(sw.id));
      pollfd p{sw.fd.get(), POLLIN, 0};
      ::poll(&p, 1, 50);
      if (!read_available(sw)) throw ConnectionLost("controller closed during handshake");
      for (;;) {
        const std::span<const std::uint8_t> rest(sw.in.data() + sw.in_begin, sw.in_end - sw.in_begin);
        auto frame = wire::next_frame(rest, true);
        if (!frame) throw ConnectionLost("bad frame during handshake: " + std::string(wire::to_string(frame.error())));
        if (!frame->has_value()) break;
        const wire::Frame& f = **frame;
        sw.in_begin += f.bytes.size();
        if (f.header.type == wire::MsgType::FeaturesRequest) {
          send_blocking(sw, wire::encode(features_for(sw.id, f.header.xid)));
          featured = true;
          break;
        }
        auto reply = control_reply(f);
        if (!reply.empty()) send_blocking(sw, reply);
      }
    }
  }

  void send_blocking(Switch& sw, std::span<const std::uint8_t> bytes) {
    if (!net::write_all(sw.fd.get(), bytes, cfg_.connect_timeout)) {
      throw ConnectionLost("write failed for switch " + std::to_string(sw.id));
    }
  }

  // Answers the controller-initiated requests a switch must handle.
  std::vector<std::uint8_t> control_reply(const wire::Frame& f) {
    switch (f.header.type) {
      case wire::MsgType::EchoRequest: {
        auto body = f.body();
        return wire::encode(wire::EchoReply{f.header.xid, {body.begin(), body.end()}});
      }
      case wire::MsgType::BarrierRequest: {
        const auto h = wire::serialize_header(wire::Header{wire::kVersion, wire::MsgType::BarrierReply, 8, f.header.xid});
        return {h.begin(), h.end()};
      }
      case wire::MsgType::FeaturesRequest: {
        const auto* sw = current_;
        return sw ? wire::encode(features_for(sw->id, f.header.xid)) : std::vector<std::uint8_t>{};
      }
      case wire::MsgType::GetConfigRequest: {
        const auto h = wire::serialize_header(wire::Header{wire::kVersion, wire::MsgType::GetConfigReply, 12, f.header.xid});
        std::vector<std::uint8_t> out(h.begin(), h.end());
        out.resize(12);
        out[10] = 0;
        out[11] = 128;  // miss_send_len
        return out;
      }
      default:
        return {};
    }
  }

  // Reads whatever is available.  Returns false if the peer closed.
  bool read_available(Switch& sw) {
    for (;;) {
      if (sw.in_begin == sw.in_end) sw.in_begin = sw.in_end = 0;
      if (sw.in.size() - sw.in_end < kReadChunk / 4) {
        if (sw.in_begin > 0) {
          std::memmove(sw.in.data(), sw.in.data() + sw.in_begin, sw.in_end - sw.in_begin);
          sw.in_end -= sw.in_begin;
          sw.in_begin = 0;
        } else {
          sw.in.resize(sw.in.size() * 2);
        }
      }
      std::size_t n = 0;
      const auto r = net::read_some(sw.fd.get(), std::span(sw.in).subspan(sw.in_end), n);
      if (r == net::IoResult::Ok) {
        sw.in_end += n;
        if (sw.in_end < sw.in.size()) return true;
        continue;
      }
      return r == net::IoResult::WouldBlock;
    }
  }

  void lose(Switch& sw, const char* why) {
    if (sw.lost) return;
    log::warn("switch_connection_lost", {{"switch", std::to_string(sw.id)}, {"reason", why}});
    sw.lost = true;
    epoll_.remove(sw.fd.get());
    sw.fd.reset();
    sw.in_flight = 0;
  }

  void poll_once(int timeout_ms) {
    std::array<epoll_event, 128> events{};
    const int n = epoll_.wait(events, timeout_ms);
    for (int i = 0; i < n; ++i) {
      auto& sw = *static_cast<Switch*>(events[static_cast<std::size_t>(i)].data.ptr);
      if (sw.lost) continue;
      const auto ev = events[static_cast<std::size_t>(i)].events;
      if ((ev & (EPOLLIN | EPOLLHUP | EPOLLERR)) != 0) {
        if (!read_available(sw)) {
          consume(sw);
          lose(sw, "peer_closed");
          continue;
        }
        consume(sw);
      }
      if (sw.lost) continue;
      pump(sw);
    }
  }

  void consume(Switch& sw) {
    current_ = &sw;
    const std::uint64_t now = now_ns();
    for (;;) {
      const std::span<const std::uint8_t> rest(sw.in.data() + sw.in_begin, sw.in_end - sw.in_begin);
      auto frame = wire::next_frame(rest);
      if (!frame) {
        lose(sw, "malformed_response");
        break;
      }
      if (!frame->has_value()) break;
      const wire::Frame& f = **frame;
      sw.in_begin += f.bytes.size();
      const auto type = f.header.type;
      if (type == wire::MsgType::FlowMod || type == wire::MsgType::PacketOut) {
        on_response(sw, f, now);
      } else {
        auto reply = control_reply(f);
        if (!reply.empty()) queue_out(sw, reply);
      }
    }
    current_ = nullptr;
  }

  void on_response(Switch& sw, const wire::Frame& f, std::uint64_t now) {
    if (sw.in_flight > 0) --sw.in_flight;
    const std::uint32_t xid = f.header.xid;
    auto& word = sw.outstanding_bits[(xid & sw.ring_mask) / 64];
    const std::uint64_t bit = std::uint64_t{1} << (xid & 63);
    const bool expected = (word & bit) != 0;
    word &= ~bit;
    if (tally_ == nullptr) return;  // outside a loop; not counted

    auto& audit = tally_->audit;
    audit_one(audit, f.header);
    if (!expected) ++audit.unexpected_xids;

    if (cfg_.mode == Mode::Latency || sw.seq <= cfg_.ordered_prefix) {
      if (sw.pending_latency_ns != 0) {
        if (cfg_.mode == Mode::Latency) {
          tally_->latencies_us.push_back(static_cast<double>(now - sw.pending_latency_ns) / 1e3);
        }
        sw.pending_latency_ns = 0;
      }
    }
    if (cfg_.mode == Mode::Throughput && !sw.sampled.empty()) {
      auto it = sw.sampled.find(xid);
      if (it != sw.sampled.end()) {
        tally_->latencies_us.push_back(static_cast<double>(now - it->second) / 1e3);
        sw.sampled.erase(it);
      }
    }
    if (cfg_.capture && f.header.type == wire::MsgType::FlowMod && f.bytes.size() >= wire::kMinimalFlowModSize) {
      detail::BeReader r(f.bytes.subspan(wire::kFlowModFixedSize + 4, 2));
      captured_.push_back(CapturedResponse{sw.dpid, xid, r.u16()});
    }
  }

  bool may_send(const Switch& sw) const {
    if (!sending_ || sw.lost || sw.dead) return false;
    if (cfg_.probe_limit != 0 && sw.sent_this_loop >= cfg_.probe_limit) return false;
    if (cfg_.mode == Mode::Latency || sw.seq < cfg_.ordered_prefix) return sw.in_flight == 0;
    return sw.in_flight < cfg_.window;
  }

  // Encodes probes up to the window and writes them.
  void pump(Switch& sw) {
    while (may_send(sw) && sw.out.size() - sw.out_begin < kMaxPendingOut) {
      const auto probe = encode_probe(sw.id, sw.seq, cfg_.unique_macs);
      const std::uint64_t seq = sw.seq++;
      const auto xid = static_cast<std::uint32_t>(seq);
      sw.outstanding_bits[(xid & sw.ring_mask) / 64] |= std::uint64_t{1} << (xid & 63);
      ++sw.in_flight;
      ++sw.sent_this_loop;
      ++tally_->probes;
      tally_->max_in_flight = std::max(tally_->max_in_flight, sw.in_flight);
      if (cfg_.mode == Mode::Latency || seq < cfg_.ordered_prefix) {
        sw.pending_latency_ns = now_ns();
      } else if (seq % cfg_.latency_sample_every == 0) {
        if (sw.sampled.size() >= kMaxSampled) sw.sampled.clear();
        sw.sampled.emplace(xid, now_ns());
      }
      sw.out.insert(sw.out.end(), probe.begin(), probe.end());
    }
    flush(sw);
  }

  void queue_out(Switch& sw, std::span<const std::uint8_t> bytes) {
    sw.out.insert(sw.out.end(), bytes.begin(), bytes.end());
  }

  void flush(Switch& sw) {
    while (sw.out_begin < sw.out.size()) {
      std::size_t n = 0;
      const auto r = net::write_some(sw.fd.get(), std::span(sw.out).subspan(sw.out_begin), n);
      if (r == net::IoResult::Ok && n > 0) {
        sw.out_begin += n;
        continue;
      }
      if (r == net::IoResult::WouldBlock || r == net::IoResult::Ok) break;
      lose(sw, "write_error");
      return;
    }
    if (sw.out_begin == sw.out.size()) {
      sw.out.clear();
      sw.out_begin = 0;
    } else if (sw.out_begin > kMaxPendingOut) {
      sw.out.erase(sw.out.begin(), sw.out.begin() + static_cast<std::ptrdiff_t>(sw.out_begin));
      sw.out_begin = 0;
    }
    const bool want = sw.out_begin < sw.out.size();
    if (want != sw.want_out) {
      sw.want_out = want;
      epoll_.modify(sw.fd.get(), want ? (EPOLLIN | EPOLLOUT) : EPOLLIN, &sw);
    }
  }

  bool all_limits_reached() const {
    if (cfg_.probe_limit == 0) return false;
    for (const auto& sw : switches_) {
      if (!sw->lost && !sw->dead && sw->sent_this_loop < cfg_.probe_limit) return false;
    }
    return true;
  }

  bool any_in_flight() const {
    for (const auto& sw : switches_) {
      if (!sw->lost && !sw->dead && (sw->in_flight > 0 || sw->out_begin < sw->out.size())) return true;
    }
    return false;
  }

  // Services control traffic without sending probes.
  void idle_for(std::chrono::milliseconds d) {
    const auto until = Clock::now() + d;
    while (Clock::now() < until) poll_once(10);
  }

  Shared& shared_;
  const BenchConfig& cfg_;
  std::size_t index_;
  net::Epoll epoll_;
  std::vector<std::unique_ptr<Switch>> switches_;
  std::vector<CapturedResponse> captured_;
  LoopTally* tally_ = nullptr;
  Switch* current_ = nullptr;
  bool sending_ = false;
};

void PhaseCompletion::operator()() noexcept {
  Shared& s = *shared;
  if (!*at_end) {
    // Loop start.
    try {
      s.engine_before = s.tap ? s.tap() : std::nullopt;
    } catch (...) {
      s.engine_before.reset();
    }
    s.loop_start_ns = now_ns();
    *at_end = true;
    return;
  }
  *at_end = false;

  LoopResult r;
  std::uint64_t end = s.loop_start_ns;
  std::uint64_t carried = 0;
  bool lost = false;
  for (auto& t : s.tallies) {
    r.probes += t.probes;
    carried += t.carried_in;
    r.audit += t.audit;
    r.latencies_us.insert(r.latencies_us.end(), t.latencies_us.begin(), t.latencies_us.end());
    r.max_in_flight = std::max(r.max_in_flight, t.max_in_flight);
    end = std::max(end, t.end_ns);
    lost = lost || t.lost;
    t = LoopTally{};
  }
  r.flow_mods = r.audit.flow_mods;
  r.packet_outs = r.audit.packet_outs;
  r.responses = r.audit.responses();
  if (r.responses > r.probes + carried) r.audit.over_responses = 1;
  r.elapsed_s = static_cast<double>(end - s.loop_start_ns) / 1e9;
  r.throughput_rps = r.elapsed_s > 0 ? static_cast<double>(r.responses) / r.elapsed_s : 0.0;
  try {
    if (s.engine_before && s.tap) {
      if (auto after = s.tap()) r.engine = *after - *s.engine_before;
    }
  } catch (...) {
  }
  r.attempts = s.attempts;
  r.valid = !lost;

  if (lost && s.attempts <= s.cfg.max_reruns) {
    ++s.attempts;
    s.rerun = true;
    log::warn("loop_rerun", {{"loop", std::to_string(s.loop_index)}, {"attempt", std::to_string(s.attempts)}});
  } else {
    s.rerun = false;
    s.attempts = 1;
    s.results.push_back(std::move(r));
    ++s.loop_index;
  }
  s.done = s.loop_index >= s.cfg.loops;
}

}  // namespace

RunResult run_bench(const BenchConfig& config, const EngineTap& tap) {
  config.validate();
  const std::size_t threads = config.effective_threads();
  Shared shared{config, tap, threads};
  shared.tallies.resize(threads);

  std::vector<std::unique_ptr<Emulator>> emulators;
  for (std::size_t t = 0; t < threads; ++t) {
    std::vector<std::uint64_t> ids;
    for (std::uint64_t id = t; id < config.switches; id += threads) ids.push_back(id);
    emulators.push_back(std::make_unique<Emulator>(shared, t, std::move(ids)));
  }

  bool at_end = false;
  std::barrier sync(static_cast<std::ptrdiff_t>(threads), PhaseCompletion{&shared, &at_end});
  std::barrier ready(static_cast<std::ptrdiff_t>(threads));

  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      auto& emu = *emulators[t];
      const std::string err = emu.connect_all();
      if (!err.empty()) {
        std::lock_guard lock(shared.mu);
        shared.failed = true;
        if (shared.failure.empty()) shared.failure = err;
      }
      ready.arrive_and_wait();
      if (shared.failed) return;
      while (!shared.done) {
        sync.arrive_and_wait();  // start
        emu.run_loop(shared.tallies[t]);
        sync.arrive_and_wait();  // end; completion aggregates
        if (!shared.done) emu.reconnect_lost();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (shared.failed) throw ConnectionLost(shared.failure);

  RunResult result;
  result.config = config;
  result.loops = std::move(shared.results);
  for (const auto& l : result.loops) result.audit += l.audit;
  for (auto& emu : emulators) {
    auto& c = emu->captured();
    result.captured.insert(result.captured.end(), c.begin(), c.end());
  }
  result.peak_rss_bytes = peak_rss_bytes();
  return result;
}

}  // namespace ofb::bench
