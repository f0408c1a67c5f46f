#include <pthread.h>
#include <sched.h>
#include <unistd.h>

#include <string>
#include <thread>

#include "ofbench/engine.hpp"
#include "ofbench/log.hpp"

namespace ofb::engine {

std::string_view to_string(ThreadingKind kind) {
  switch (kind) {
    case ThreadingKind::SingleIoQueue: return "single_io_queue";
    case ThreadingKind::SharedPoolQueue: return "shared_pool_queue";
    case ThreadingKind::RunToCompletion: return "run_to_completion";
  }
  return "unknown";
}

ThreadingKind parse_threading_kind(std::string_view text) {
  if (text == "single_io_queue" || text == "siq") return ThreadingKind::SingleIoQueue;
  if (text == "shared_pool_queue" || text == "spq") return ThreadingKind::SharedPoolQueue;
  if (text == "run_to_completion" || text == "rtc") return ThreadingKind::RunToCompletion;
  throw ConfigError("unknown threading model: " + std::string(text));
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::ExpectHello: return "EXPECT_HELLO";
    case Phase::ExpectFeaturesReply: return "EXPECT_FEATURES_REPLY";
    case Phase::Ready: return "READY";
  }
  return "?";
}

void StrategyMatrix::validate() const {
  if (threading.worker_count == 0) throw ConfigError("worker_count must be >= 1");
  if (threading.worker_count > max_workers) {
    throw ConfigError("worker_count " + std::to_string(threading.worker_count) + " exceeds max_workers " +
                      std::to_string(max_workers));
  }
  if (threading.kind != ThreadingKind::RunToCompletion && table == learn::TableStrategy::ShardedPerWorker) {
    throw ConfigError(std::string(to_string(threading.kind)) +
                      " requires the shared_locked table: queue workers do not own shards");
  }
  if (queue_capacity == 0) throw ConfigError("queue_capacity must be >= 1");
  if (table_stripes == 0) throw ConfigError("table_stripes must be >= 1");
  try {
    buffers.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

HandshakeOutcome handshake_step(const ConnState& state, const wire::Message& msg) {
  HandshakeOutcome out{state, {}, false, {}};
  const auto type = wire::type_of(msg);

  if (type == wire::MsgType::EchoRequest) {
    const auto& echo = std::get<wire::EchoRequest>(msg);
    out.replies.emplace_back(wire::EchoReply{echo.xid, echo.data});
    return out;
  }
  if (std::holds_alternative<wire::Unknown>(msg) || type == wire::MsgType::EchoReply) {
    return out;  // skipped
  }

  switch (state.phase) {
    case Phase::ExpectHello:
      if (type == wire::MsgType::Hello) {
        out.replies.emplace_back(wire::Hello{wire::xid_of(msg)});
        out.replies.emplace_back(wire::FeaturesRequest{kFeaturesRequestXid});
        out.state.phase = Phase::ExpectFeaturesReply;
        return out;
      }
      break;
    case Phase::ExpectFeaturesReply:
      if (type == wire::MsgType::FeaturesReply) {
        out.state.datapath_id = std::get<wire::FeaturesReply>(msg).datapath_id;
        out.state.phase = Phase::Ready;
        return out;
      }
      break;
    case Phase::Ready:
      break;
  }
  out.protocol_error = true;
  out.reason = std::string(wire::to_string(type)) + " while " + std::string(to_string(state.phase));
  return out;
}

std::size_t core_for_worker(std::size_t worker_index, std::size_t available_cores) noexcept {
  return available_cores == 0 ? 0 : worker_index % available_cores;
}

bool pin_worker(std::size_t worker_index) noexcept {
  const long online = ::sysconf(_SC_NPROCESSORS_ONLN);
  const std::size_t cores = online > 0 ? static_cast<std::size_t>(online) : 1;
  const std::size_t core = core_for_worker(worker_index, cores);
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(core, &set);
  const int rc = ::pthread_setaffinity_np(::pthread_self(), sizeof set, &set);
  if (rc != 0) {
    log::warn("pin_failed", {{"worker", std::to_string(worker_index)},
                             {"core", std::to_string(core)},
                             {"errno", std::to_string(rc)}});
    return false;
  }
  log::debug("pinned", {{"worker", std::to_string(worker_index)}, {"core", std::to_string(core)}});
  return true;
}

PhaseTotals& PhaseTotals::operator+=(const PhaseTotals& o) noexcept {
  decode_ns += o.decode_ns;
  app_ns += o.app_ns;
  encode_ns += o.encode_ns;
  io_ns += o.io_ns;
  sampled_ns += o.sampled_ns;
  samples += o.samples;
  return *this;
}

PhaseTotals operator-(PhaseTotals a, const PhaseTotals& b) noexcept {
  a.decode_ns -= b.decode_ns;
  a.app_ns -= b.app_ns;
  a.encode_ns -= b.encode_ns;
  a.io_ns -= b.io_ns;
  a.sampled_ns -= b.sampled_ns;
  a.samples -= b.samples;
  return a;
}

EngineStats& EngineStats::operator+=(const EngineStats& o) noexcept {
  packet_ins += o.packet_ins;
  flow_mods += o.flow_mods;
  packet_outs += o.packet_outs;
  handoffs += o.handoffs;
  lock_acquisitions += o.lock_acquisitions;
  protocol_errors += o.protocol_errors;
  malformed_closes += o.malformed_closes;
  connections_accepted += o.connections_accepted;
  connections_ready += o.connections_ready;
  connections_closed += o.connections_closed;
  backpressure_stalls += o.backpressure_stalls;
  alloc += o.alloc;
  phases += o.phases;
  return *this;
}

EngineStats operator-(EngineStats a, const EngineStats& b) noexcept {
  a.packet_ins -= b.packet_ins;
  a.flow_mods -= b.flow_mods;
  a.packet_outs -= b.packet_outs;
  a.handoffs -= b.handoffs;
  a.lock_acquisitions -= b.lock_acquisitions;
  a.protocol_errors -= b.protocol_errors;
  a.malformed_closes -= b.malformed_closes;
  a.connections_accepted -= b.connections_accepted;
  a.connections_ready -= b.connections_ready;
  a.connections_closed -= b.connections_closed;
  a.backpressure_stalls -= b.backpressure_stalls;
  a.alloc = a.alloc - b.alloc;
  a.phases = a.phases - b.phases;
  return a;
}

}  // namespace ofb::engine
