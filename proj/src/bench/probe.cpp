#include <algorithm>
#include <stdexcept>
#include <string>
#include <thread>

#include "byte_io.hpp"
#include "ofbench/bench.hpp"

namespace ofb::bench {

namespace {

// Ethernet + IPv4 + UDP, 64 bytes.  The MAC octets are patched per probe.
constexpr std::array<std::uint8_t, wire::kProbeFrameSize> kFrameTemplate = {
    0, 0, 0, 0, 0, 0,                                // dst
    0, 0, 0, 0, 0, 0,                                // src
    0x08, 0x00,                                      // IPv4
    0x45, 0x00, 0x00, 0x32, 0x00, 0x00, 0x00, 0x00,  // ver/ihl, tos, len 50, id, frag
    0x40, 0x11, 0x00, 0x00,                          // ttl, udp, checksum
    10, 0, 0, 1, 10, 0, 0, 2,                        // src / dst ip
    0x04, 0xd2, 0x16, 0x2e, 0x00, 0x1e, 0x00, 0x00,  // udp 1234 -> 5678, len 30
};

}  // namespace

std::string_view to_string(Mode mode) {
  return mode == Mode::Latency ? "latency" : "throughput";
}

void BenchConfig::validate() const {
  if (switches < 1) throw std::invalid_argument("switches must be >= 1");
  if (switches > 0xffff) throw std::invalid_argument("switches must fit in 16 bits");
  if (unique_macs < 2) throw std::invalid_argument("unique_macs must be >= 2");
  if (unique_macs > 0xffffffffull) throw std::invalid_argument("unique_macs must fit in 32 bits");
  if (loops < 1) throw std::invalid_argument("loops must be >= 1");
  if (loop_duration_s < 0) throw std::invalid_argument("loop duration must be >= 0");
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (latency_sample_every < 1) throw std::invalid_argument("latency_sample_every must be >= 1");
  if (drain_timeout_s < 0) throw std::invalid_argument("drain timeout must be >= 0");
}

std::size_t BenchConfig::effective_threads() const {
  std::size_t hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const std::size_t wanted = worker_threads == 0 ? hw : worker_threads;
  return std::clamp<std::size_t>(wanted, 1, switches);
}

MacPair gen_macs(std::uint64_t switch_id, std::uint64_t sequence_index, std::uint64_t unique_macs) {
  if (unique_macs < 2) throw std::invalid_argument("unique_macs must be >= 2");
  return MacPair{encode_mac(switch_id, sequence_index % unique_macs),
                 encode_mac(switch_id, (sequence_index + 1) % unique_macs)};
}

ProbeBytes encode_probe(std::uint64_t switch_id, std::uint64_t seq, std::uint64_t unique_macs) {
  const auto macs = gen_macs(switch_id, seq, unique_macs);
  ProbeBytes out{};
  detail::BeWriter w(out);
  w.u8(wire::kVersion);
  w.u8(static_cast<std::uint8_t>(wire::MsgType::PacketIn));
  w.u16(static_cast<std::uint16_t>(wire::kProbePacketInSize));
  w.u32(static_cast<std::uint32_t>(seq));
  w.u32(static_cast<std::uint32_t>(seq));  // buffer_id
  w.u16(static_cast<std::uint16_t>(wire::kProbeFrameSize));
  w.u16(probe_in_port(macs.src));
  w.u8(0);  // no match
  w.u8(0);
  w.mac48(macs.dst);
  w.mac48(macs.src);
  w.bytes(std::span(kFrameTemplate).subspan(12));
  return out;
}

wire::FeaturesReply features_for(std::uint64_t switch_id, std::uint32_t xid) {
  wire::FeaturesReply r;
  r.xid = xid;
  r.datapath_id = datapath_id_for(switch_id);
  r.n_buffers = 256;
  r.n_tables = 1;
  r.capabilities = 0;
  r.actions = 1;  // output
  for (std::uint16_t p = 1; p <= kPortsPerSwitch; ++p) {
    wire::PhyPort port;
    port.port_no = p;
    port.hw_addr = wire::MacAddress::from_u64((std::uint64_t{0xfe} << 40) | (switch_id << 8) | p);
    const std::string name = "s" + std::to_string(switch_id) + "-eth" + std::to_string(p);
    std::copy_n(name.begin(), std::min(name.size(), port.name.size() - 1), port.name.begin());
    r.ports.push_back(port);
  }
  return r;
}

double AuditReport::flow_mod_ratio() const noexcept {
  const auto total = responses();
  return total == 0 ? 1.0 : static_cast<double>(flow_mods) / static_cast<double>(total);
}

double AuditReport::byte_ratio() const noexcept {
  return flow_mod_bytes == 0 ? 0.0 : static_cast<double>(packet_out_bytes) / static_cast<double>(flow_mod_bytes);
}

AuditReport& AuditReport::operator+=(const AuditReport& o) noexcept {
  flow_mods += o.flow_mods;
  packet_outs += o.packet_outs;
  other += o.other;
  flow_mod_bytes += o.flow_mod_bytes;
  packet_out_bytes += o.packet_out_bytes;
  unexpected_xids += o.unexpected_xids;
  over_responses += o.over_responses;
  return *this;
}

void audit_one(AuditReport& report, const wire::Header& header) {
  switch (header.type) {
    case wire::MsgType::FlowMod:
      ++report.flow_mods;
      report.flow_mod_bytes += header.length;
      break;
    case wire::MsgType::PacketOut:
      ++report.packet_outs;
      report.packet_out_bytes += header.length;
      break;
    default:
      ++report.other;
      break;
  }
}

AuditReport audit_responses(std::span<const wire::Header> stream) {
  AuditReport r;
  for (const auto& h : stream) audit_one(r, h);
  return r;
}

std::string_view to_string(Axis axis) {
  switch (axis) {
    case Axis::None: return "none";
    case Axis::Concurrency: return "concurrency";
    case Axis::Heterogeneity: return "heterogeneity";
    case Axis::Connectivity: return "connectivity";
  }
  return "none";
}

Axis parse_axis(std::string_view text) {
  if (text == "none") return Axis::None;
  if (text == "concurrency") return Axis::Concurrency;
  if (text == "heterogeneity") return Axis::Heterogeneity;
  if (text == "connectivity") return Axis::Connectivity;
  throw std::invalid_argument("unknown axis: " + std::string(text));
}

}  // namespace ofb::bench
