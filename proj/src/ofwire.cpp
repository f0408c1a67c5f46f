#include "ofbench/ofwire.hpp"

#include <cstdio>

#include "byte_io.hpp"

namespace ofb::wire {

using detail::BeReader;
using detail::BeWriter;

std::string_view to_string(MsgType type) {
  switch (type) {
    case MsgType::Hello: return "HELLO";
    case MsgType::Error: return "ERROR";
    case MsgType::EchoRequest: return "ECHO_REQUEST";
    case MsgType::EchoReply: return "ECHO_REPLY";
    case MsgType::Vendor: return "VENDOR";
    case MsgType::FeaturesRequest: return "FEATURES_REQUEST";
    case MsgType::FeaturesReply: return "FEATURES_REPLY";
    case MsgType::GetConfigRequest: return "GET_CONFIG_REQUEST";
    case MsgType::GetConfigReply: return "GET_CONFIG_REPLY";
    case MsgType::SetConfig: return "SET_CONFIG";
    case MsgType::PacketIn: return "PACKET_IN";
    case MsgType::FlowRemoved: return "FLOW_REMOVED";
    case MsgType::PortStatus: return "PORT_STATUS";
    case MsgType::PacketOut: return "PACKET_OUT";
    case MsgType::FlowMod: return "FLOW_MOD";
    case MsgType::PortMod: return "PORT_MOD";
    case MsgType::StatsRequest: return "STATS_REQUEST";
    case MsgType::StatsReply: return "STATS_REPLY";
    case MsgType::BarrierRequest: return "BARRIER_REQUEST";
    case MsgType::BarrierReply: return "BARRIER_REPLY";
  }
  return "UNKNOWN";
}

std::string_view to_string(WireError error) {
  switch (error) {
    case WireError::MalformedLength: return "MalformedLength";
    case WireError::BadVersion: return "BadVersion";
    case WireError::TruncatedBody: return "TruncatedBody";
    case WireError::FieldOutOfRange: return "FieldOutOfRange";
    case WireError::InsufficientCapacity: return "InsufficientCapacity";
  }
  return "Unknown";
}

std::string MacAddress::to_string() const {
  char buf[18];
  std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", octets[0], octets[1], octets[2],
                octets[3], octets[4], octets[5]);
  return buf;
}

MacAddress PacketIn::dst_mac() const {
  MacAddress m;
  if (frame.size() >= 12) std::copy_n(frame.begin(), 6, m.octets.begin());
  return m;
}

MacAddress PacketIn::src_mac() const {
  MacAddress m;
  if (frame.size() >= 12) std::copy_n(frame.begin() + 6, 6, m.octets.begin());
  return m;
}

std::uint64_t PacketInView::dst_mac() const noexcept {
  if (frame.size() < 12) return 0;
  return BeReader(frame).mac48();
}

std::uint64_t PacketInView::src_mac() const noexcept {
  if (frame.size() < 12) return 0;
  return BeReader(frame.subspan(6)).mac48();
}

// ---------------------------------------------------------------------------
// Header

namespace {

Result<Header> parse_header_impl(std::span<const std::uint8_t> bytes, bool negotiate_hello) {
  if (bytes.size() < kHeaderSize) return WireError::TruncatedBody;
  BeReader r(bytes);
  Header h;
  h.version = r.u8();
  h.type = static_cast<MsgType>(r.u8());
  h.length = r.u16();
  h.xid = r.u32();
  if (h.length < kHeaderSize) return WireError::MalformedLength;
  if (h.version != kVersion) {
    if (negotiate_hello && h.type == MsgType::Hello && h.version > kVersion) {
      h.version = kVersion;
    } else {
      return WireError::BadVersion;
    }
  }
  return h;
}

void write_header(BeWriter& w, MsgType type, std::size_t length, std::uint32_t xid) {
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(type));
  w.u16(static_cast<std::uint16_t>(length));
  w.u32(xid);
}

}  // namespace

Result<Header> parse_header(std::span<const std::uint8_t> bytes) {
  return parse_header_impl(bytes, false);
}

Result<Header> parse_header_negotiating(std::span<const std::uint8_t> bytes) {
  return parse_header_impl(bytes, true);
}

void serialize_header(const Header& header, std::span<std::uint8_t, kHeaderSize> out) noexcept {
  BeWriter w(out);
  w.u8(header.version);
  w.u8(static_cast<std::uint8_t>(header.type));
  w.u16(header.length);
  w.u32(header.xid);
}

std::array<std::uint8_t, kHeaderSize> serialize_header(const Header& header) noexcept {
  std::array<std::uint8_t, kHeaderSize> out{};
  serialize_header(header, std::span<std::uint8_t, kHeaderSize>(out));
  return out;
}

// ---------------------------------------------------------------------------
// Sizes

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t body_size(const Message& msg) {
  return std::visit(
      Overloaded{
          [](const Hello&) -> std::size_t { return 0; },
          [](const ErrorMsg& m) -> std::size_t { return kErrorFixedSize - kHeaderSize + m.data.size(); },
          [](const EchoRequest& m) -> std::size_t { return m.data.size(); },
          [](const EchoReply& m) -> std::size_t { return m.data.size(); },
          [](const FeaturesRequest&) -> std::size_t { return 0; },
          [](const FeaturesReply& m) -> std::size_t {
            return kFeaturesReplyFixedSize - kHeaderSize + m.ports.size() * kPhyPortSize;
          },
          [](const PacketIn& m) -> std::size_t { return kPacketInFixedSize - kHeaderSize + m.frame.size(); },
          [](const PacketOut& m) -> std::size_t {
            return kPacketOutFixedSize - kHeaderSize + m.actions.size() * kActionOutputSize + m.data.size();
          },
          [](const FlowMod& m) -> std::size_t {
            return kFlowModFixedSize - kHeaderSize + m.actions.size() * kActionOutputSize;
          },
          [](const Unknown& m) -> std::size_t { return m.body.size(); },
      },
      msg);
}

}  // namespace

MsgType type_of(const Message& msg) {
  return std::visit(Overloaded{
                        [](const Hello&) { return MsgType::Hello; },
                        [](const ErrorMsg&) { return MsgType::Error; },
                        [](const EchoRequest&) { return MsgType::EchoRequest; },
                        [](const EchoReply&) { return MsgType::EchoReply; },
                        [](const FeaturesRequest&) { return MsgType::FeaturesRequest; },
                        [](const FeaturesReply&) { return MsgType::FeaturesReply; },
                        [](const PacketIn&) { return MsgType::PacketIn; },
                        [](const PacketOut&) { return MsgType::PacketOut; },
                        [](const FlowMod&) { return MsgType::FlowMod; },
                        [](const Unknown& m) { return m.header.type; },
                    },
                    msg);
}

std::uint32_t xid_of(const Message& msg) {
  return std::visit(Overloaded{
                        [](const Unknown& m) { return m.header.xid; },
                        [](const auto& m) { return m.xid; },
                    },
                    msg);
}

std::size_t encoded_size(const Message& msg) { return kHeaderSize + body_size(msg); }

// ---------------------------------------------------------------------------
// Encoding

namespace {

void write_action(BeWriter& w, const OutputAction& a) {
  w.u16(0);  // OFPAT_OUTPUT
  w.u16(static_cast<std::uint16_t>(kActionOutputSize));
  w.u16(a.port);
  w.u16(a.max_len);
}

void write_match(BeWriter& w, const Match& m) {
  w.u32(m.wildcards);
  w.u16(m.in_port);
  w.bytes(m.dl_src.octets);
  w.bytes(m.dl_dst.octets);
  w.u16(m.dl_vlan);
  w.u8(m.dl_vlan_pcp);
  w.zeros(1);
  w.u16(m.dl_type);
  w.u8(m.nw_tos);
  w.u8(m.nw_proto);
  w.zeros(2);
  w.u32(m.nw_src);
  w.u32(m.nw_dst);
  w.u16(m.tp_src);
  w.u16(m.tp_dst);
}

void write_port(BeWriter& w, const PhyPort& p) {
  w.u16(p.port_no);
  w.bytes(p.hw_addr.octets);
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(p.name.data()), p.name.size()));
  w.u32(p.config);
  w.u32(p.state);
  w.u32(p.curr);
  w.u32(p.advertised);
  w.u32(p.supported);
  w.u32(p.peer);
}

}  // namespace

Result<std::size_t> encode_into(const Message& msg, std::span<std::uint8_t> sink) {
  const std::size_t size = encoded_size(msg);
  if (size > kMaxMessageSize) return WireError::FieldOutOfRange;
  if (sink.size() < size) return WireError::InsufficientCapacity;

  BeWriter w(sink.first(size));
  write_header(w, type_of(msg), size, xid_of(msg));
  std::visit(Overloaded{
                 [](const Hello&) {},
                 [](const FeaturesRequest&) {},
                 [&](const ErrorMsg& m) {
                   w.u16(m.type);
                   w.u16(m.code);
                   w.bytes(m.data);
                 },
                 [&](const EchoRequest& m) { w.bytes(m.data); },
                 [&](const EchoReply& m) { w.bytes(m.data); },
                 [&](const FeaturesReply& m) {
                   w.u64(m.datapath_id);
                   w.u32(m.n_buffers);
                   w.u8(m.n_tables);
                   w.zeros(3);
                   w.u32(m.capabilities);
                   w.u32(m.actions);
                   for (const auto& p : m.ports) write_port(w, p);
                 },
                 [&](const PacketIn& m) {
                   w.u32(m.buffer_id);
                   w.u16(m.total_len);
                   w.u16(m.in_port);
                   w.u8(static_cast<std::uint8_t>(m.reason));
                   w.zeros(1);
                   w.bytes(m.frame);
                 },
                 [&](const PacketOut& m) {
                   w.u32(m.buffer_id);
                   w.u16(m.in_port);
                   w.u16(static_cast<std::uint16_t>(m.actions.size() * kActionOutputSize));
                   for (const auto& a : m.actions) write_action(w, a);
                   w.bytes(m.data);
                 },
                 [&](const FlowMod& m) {
                   write_match(w, m.match);
                   w.u64(m.cookie);
                   w.u16(static_cast<std::uint16_t>(m.command));
                   w.u16(m.idle_timeout);
                   w.u16(m.hard_timeout);
                   w.u16(m.priority);
                   w.u32(m.buffer_id);
                   w.u16(m.out_port);
                   w.u16(m.flags);
                   for (const auto& a : m.actions) write_action(w, a);
                 },
                 [&](const Unknown& m) { w.bytes(m.body); },
             },
             msg);
  return w.written();
}

std::vector<std::uint8_t> encode(const Message& msg) {
  std::vector<std::uint8_t> out(encoded_size(msg));
  auto written = encode_into(msg, out);
  if (!written) return {};
  return out;
}

Result<std::size_t> encode_flow_mod_into(const LearnedFlow& flow, std::span<std::uint8_t> sink) noexcept {
  if (sink.size() < kMinimalFlowModSize) return WireError::InsufficientCapacity;
  BeWriter w(sink.first(kMinimalFlowModSize));
  write_header(w, MsgType::FlowMod, kMinimalFlowModSize, flow.xid);
  // match
  w.u32(wildcard::kLearningSwitch);
  w.u16(flow.in_port);
  w.mac48(flow.src_mac);
  w.mac48(flow.dst_mac);
  w.zeros(kMatchSize - 4 - 2 - 12);
  w.u64(0);  // cookie
  w.u16(static_cast<std::uint16_t>(FlowModCommand::Add));
  w.u16(flow.idle_timeout);
  w.u16(flow.hard_timeout);
  w.u16(flow.priority);
  w.u32(flow.buffer_id);
  w.u16(port::kNone);
  w.u16(0);
  write_action(w, OutputAction{flow.out_port, 0});
  return w.written();
}

FlowMod make_flow_mod(const LearnedFlow& flow) {
  FlowMod fm;
  fm.xid = flow.xid;
  fm.match.wildcards = wildcard::kLearningSwitch;
  fm.match.in_port = flow.in_port;
  fm.match.dl_src = MacAddress::from_u64(flow.src_mac);
  fm.match.dl_dst = MacAddress::from_u64(flow.dst_mac);
  fm.command = FlowModCommand::Add;
  fm.idle_timeout = flow.idle_timeout;
  fm.hard_timeout = flow.hard_timeout;
  fm.priority = flow.priority;
  fm.buffer_id = flow.buffer_id;
  fm.out_port = port::kNone;
  fm.actions.push_back(OutputAction{flow.out_port, 0});
  return fm;
}

// ---------------------------------------------------------------------------
// Decoding

namespace {

Result<std::vector<OutputAction>> read_actions(BeReader& r, std::size_t actions_len) {
  if (actions_len % kActionOutputSize != 0 || actions_len > r.remaining()) {
    return WireError::FieldOutOfRange;
  }
  std::vector<OutputAction> actions;
  actions.reserve(actions_len / kActionOutputSize);
  for (std::size_t i = 0; i < actions_len; i += kActionOutputSize) {
    const auto type = r.u16();
    const auto len = r.u16();
    if (type != 0 || len != kActionOutputSize) return WireError::FieldOutOfRange;
    OutputAction a;
    a.port = r.u16();
    a.max_len = r.u16();
    actions.push_back(a);
  }
  return actions;
}

Match read_match(BeReader& r) {
  Match m;
  m.wildcards = r.u32();
  m.in_port = r.u16();
  m.dl_src = MacAddress::from_u64(r.mac48());
  m.dl_dst = MacAddress::from_u64(r.mac48());
  m.dl_vlan = r.u16();
  m.dl_vlan_pcp = r.u8();
  r.skip(1);
  m.dl_type = r.u16();
  m.nw_tos = r.u8();
  m.nw_proto = r.u8();
  r.skip(2);
  m.nw_src = r.u32();
  m.nw_dst = r.u32();
  m.tp_src = r.u16();
  m.tp_dst = r.u16();
  return m;
}

std::vector<std::uint8_t> to_vec(std::span<const std::uint8_t> s) { return {s.begin(), s.end()}; }

Result<Message> decode_features_reply(const Header& h, BeReader& r) {
  if (r.remaining() < kFeaturesReplyFixedSize - kHeaderSize) return WireError::TruncatedBody;
  FeaturesReply m;
  m.xid = h.xid;
  m.datapath_id = r.u64();
  m.n_buffers = r.u32();
  m.n_tables = r.u8();
  r.skip(3);
  m.capabilities = r.u32();
  m.actions = r.u32();
  if (r.remaining() % kPhyPortSize != 0) return WireError::FieldOutOfRange;
  m.ports.reserve(r.remaining() / kPhyPortSize);
  while (r.remaining() > 0) {
    PhyPort p;
    p.port_no = r.u16();
    p.hw_addr = MacAddress::from_u64(r.mac48());
    auto name = r.take(p.name.size());
    std::copy(name.begin(), name.end(), reinterpret_cast<std::uint8_t*>(p.name.data()));
    p.config = r.u32();
    p.state = r.u32();
    p.curr = r.u32();
    p.advertised = r.u32();
    p.supported = r.u32();
    p.peer = r.u32();
    m.ports.push_back(p);
  }
  return Message{std::move(m)};
}

Result<Message> decode_flow_mod(const Header& h, BeReader& r) {
  if (r.remaining() < kFlowModFixedSize - kHeaderSize) return WireError::TruncatedBody;
  FlowMod m;
  m.xid = h.xid;
  m.match = read_match(r);
  m.cookie = r.u64();
  const auto command = r.u16();
  if (command > static_cast<std::uint16_t>(FlowModCommand::DeleteStrict)) return WireError::FieldOutOfRange;
  m.command = static_cast<FlowModCommand>(command);
  m.idle_timeout = r.u16();
  m.hard_timeout = r.u16();
  m.priority = r.u16();
  m.buffer_id = r.u32();
  m.out_port = r.u16();
  m.flags = r.u16();
  auto actions = read_actions(r, r.remaining());
  if (!actions) return actions.error();
  m.actions = std::move(actions).value();
  return Message{std::move(m)};
}

Result<Message> decode_packet_out(const Header& h, BeReader& r) {
  if (r.remaining() < kPacketOutFixedSize - kHeaderSize) return WireError::TruncatedBody;
  PacketOut m;
  m.xid = h.xid;
  m.buffer_id = r.u32();
  m.in_port = r.u16();
  const auto actions_len = r.u16();
  auto actions = read_actions(r, actions_len);
  if (!actions) return actions.error();
  m.actions = std::move(actions).value();
  m.data = to_vec(r.take(r.remaining()));
  return Message{std::move(m)};
}

}  // namespace

Result<PacketInView> view_packet_in(const Header& header, std::span<const std::uint8_t> body) {
  if (header.type != MsgType::PacketIn) return WireError::FieldOutOfRange;
  if (body.size() + kHeaderSize != header.length || body.size() < kPacketInFixedSize - kHeaderSize) {
    return WireError::TruncatedBody;
  }
  BeReader r(body);
  PacketInView v;
  v.xid = header.xid;
  v.buffer_id = r.u32();
  v.total_len = r.u16();
  v.in_port = r.u16();
  const auto reason = r.u8();
  if (reason > static_cast<std::uint8_t>(PacketInReason::Action)) return WireError::FieldOutOfRange;
  v.reason = static_cast<PacketInReason>(reason);
  r.skip(1);
  v.frame = r.take(r.remaining());
  return v;
}

Result<Message> decode_message(const Header& header, std::span<const std::uint8_t> body) {
  if (header.length < kHeaderSize) return WireError::MalformedLength;
  if (body.size() + kHeaderSize != header.length) return WireError::TruncatedBody;
  BeReader r(body);
  switch (header.type) {
    case MsgType::Hello:
      // Hello elements (newer versions) are ignored.
      return Message{Hello{header.xid}};
    case MsgType::Error: {
      if (r.remaining() < kErrorFixedSize - kHeaderSize) return WireError::TruncatedBody;
      ErrorMsg m;
      m.xid = header.xid;
      m.type = r.u16();
      m.code = r.u16();
      m.data = to_vec(r.take(r.remaining()));
      return Message{std::move(m)};
    }
    case MsgType::EchoRequest:
      return Message{EchoRequest{header.xid, to_vec(body)}};
    case MsgType::EchoReply:
      return Message{EchoReply{header.xid, to_vec(body)}};
    case MsgType::FeaturesRequest:
      if (!body.empty()) return WireError::FieldOutOfRange;
      return Message{FeaturesRequest{header.xid}};
    case MsgType::FeaturesReply:
      return decode_features_reply(header, r);
    case MsgType::PacketIn: {
      auto v = view_packet_in(header, body);
      if (!v) return v.error();
      PacketIn m;
      m.xid = v->xid;
      m.buffer_id = v->buffer_id;
      m.total_len = v->total_len;
      m.in_port = v->in_port;
      m.reason = v->reason;
      m.frame = to_vec(v->frame);
      return Message{std::move(m)};
    }
    case MsgType::PacketOut:
      return decode_packet_out(header, r);
    case MsgType::FlowMod:
      return decode_flow_mod(header, r);
    default:
      return Message{Unknown{header, to_vec(body)}};
  }
}

// ---------------------------------------------------------------------------
// Framing

Result<std::optional<Frame>> next_frame(std::span<const std::uint8_t> stream, bool negotiate_hello) {
  if (stream.size() < kHeaderSize) return std::optional<Frame>{};
  auto header = negotiate_hello ? parse_header_negotiating(stream) : parse_header(stream);
  if (!header) return header.error();
  if (stream.size() < header->length) return std::optional<Frame>{};
  return std::optional<Frame>{Frame{*header, stream.first(header->length)}};
}

}  // namespace ofb::wire
