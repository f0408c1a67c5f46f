#pragma once

// OpenFlow 1.0 codec for the subset exchanged between an emulated switch and
// a reactive learning-switch controller.  All multi-byte fields are
// big-endian on the wire; layouts follow the OpenFlow 1.0.0 wire protocol.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace ofb::wire {

inline constexpr std::uint8_t kVersion = 0x01;

inline constexpr std::size_t kHeaderSize = 8;
inline constexpr std::size_t kPacketInFixedSize = 18;
inline constexpr std::size_t kMatchSize = 40;
inline constexpr std::size_t kFlowModFixedSize = 72;
inline constexpr std::size_t kActionOutputSize = 8;
inline constexpr std::size_t kPacketOutFixedSize = 16;
inline constexpr std::size_t kFeaturesReplyFixedSize = 32;
inline constexpr std::size_t kPhyPortSize = 48;
inline constexpr std::size_t kErrorFixedSize = 12;
inline constexpr std::size_t kMaxMessageSize = 0xffff;

// CBench-style probe: packet-in fixed part plus a 64-byte Ethernet frame.
inline constexpr std::size_t kProbeFrameSize = 64;
inline constexpr std::size_t kProbePacketInSize = kPacketInFixedSize + kProbeFrameSize;
inline constexpr std::size_t kMinimalFlowModSize = kFlowModFixedSize + kActionOutputSize;

enum class MsgType : std::uint8_t {
  Hello = 0,
  Error = 1,
  EchoRequest = 2,
  EchoReply = 3,
  Vendor = 4,
  FeaturesRequest = 5,
  FeaturesReply = 6,
  GetConfigRequest = 7,
  GetConfigReply = 8,
  SetConfig = 9,
  PacketIn = 10,
  FlowRemoved = 11,
  PortStatus = 12,
  PacketOut = 13,
  FlowMod = 14,
  PortMod = 15,
  StatsRequest = 16,
  StatsReply = 17,
  BarrierRequest = 18,
  BarrierReply = 19,
};

std::string_view to_string(MsgType type);

// Reserved port numbers.
namespace port {
inline constexpr std::uint16_t kMax = 0xff00;
inline constexpr std::uint16_t kInPort = 0xfff8;
inline constexpr std::uint16_t kTable = 0xfff9;
inline constexpr std::uint16_t kNormal = 0xfffa;
inline constexpr std::uint16_t kFlood = 0xfffb;
inline constexpr std::uint16_t kAll = 0xfffc;
inline constexpr std::uint16_t kController = 0xfffd;
inline constexpr std::uint16_t kLocal = 0xfffe;
inline constexpr std::uint16_t kNone = 0xffff;
}  // namespace port

inline constexpr std::uint32_t kNoBuffer = 0xffffffff;

// Match wildcard bits.
namespace wildcard {
inline constexpr std::uint32_t kInPort = 1u << 0;
inline constexpr std::uint32_t kDlVlan = 1u << 1;
inline constexpr std::uint32_t kDlSrc = 1u << 2;
inline constexpr std::uint32_t kDlDst = 1u << 3;
inline constexpr std::uint32_t kDlType = 1u << 4;
inline constexpr std::uint32_t kNwProto = 1u << 5;
inline constexpr std::uint32_t kTpSrc = 1u << 6;
inline constexpr std::uint32_t kTpDst = 1u << 7;
inline constexpr std::uint32_t kNwSrcAll = 32u << 8;
inline constexpr std::uint32_t kNwDstAll = 32u << 14;
inline constexpr std::uint32_t kDlVlanPcp = 1u << 20;
inline constexpr std::uint32_t kNwTos = 1u << 21;
inline constexpr std::uint32_t kAll = (1u << 22) - 1;
// Exact match on in_port, dl_src and dl_dst; everything else wildcarded.
inline constexpr std::uint32_t kLearningSwitch = kAll & ~(kInPort | kDlSrc | kDlDst);
}  // namespace wildcard

enum class WireError : std::uint8_t {
  MalformedLength,
  BadVersion,
  TruncatedBody,
  FieldOutOfRange,
  InsufficientCapacity,
};

std::string_view to_string(WireError error);

/// Value-or-error return used throughout the codec.  Never throws.
template <typename T>
class Result {
 public:
  Result(T value) : state_(std::in_place_index<0>, std::move(value)) {}  // NOLINT
  Result(WireError error) : state_(std::in_place_index<1>, error) {}     // NOLINT

  [[nodiscard]] bool ok() const noexcept { return state_.index() == 0; }
  explicit operator bool() const noexcept { return ok(); }

  [[nodiscard]] const T& value() const& { return std::get<0>(state_); }
  [[nodiscard]] T& value() & { return std::get<0>(state_); }
  [[nodiscard]] T&& value() && { return std::get<0>(std::move(state_)); }
  [[nodiscard]] WireError error() const { return std::get<1>(state_); }

  const T& operator*() const& { return value(); }
  T& operator*() & { return value(); }
  const T* operator->() const { return &value(); }
  T* operator->() { return &value(); }

 private:
  std::variant<T, WireError> state_;
};

struct MacAddress {
  std::array<std::uint8_t, 6> octets{};

  static constexpr MacAddress from_u64(std::uint64_t v) noexcept {
    MacAddress m;
    for (int i = 5; i >= 0; --i) {
      m.octets[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v & 0xff);
      v >>= 8;
    }
    return m;
  }
  [[nodiscard]] constexpr std::uint64_t to_u64() const noexcept {
    std::uint64_t v = 0;
    for (auto o : octets) v = (v << 8) | o;
    return v;
  }
  [[nodiscard]] std::string to_string() const;

  friend constexpr auto operator<=>(const MacAddress&, const MacAddress&) = default;
};

struct Header {
  std::uint8_t version = kVersion;
  MsgType type = MsgType::Hello;
  std::uint16_t length = kHeaderSize;
  std::uint32_t xid = 0;

  friend bool operator==(const Header&, const Header&) = default;
};

struct Hello {
  std::uint32_t xid = 0;
  friend bool operator==(const Hello&, const Hello&) = default;
};

struct ErrorMsg {
  std::uint32_t xid = 0;
  std::uint16_t type = 0;
  std::uint16_t code = 0;
  std::vector<std::uint8_t> data;
  friend bool operator==(const ErrorMsg&, const ErrorMsg&) = default;
};

struct EchoRequest {
  std::uint32_t xid = 0;
  std::vector<std::uint8_t> data;
  friend bool operator==(const EchoRequest&, const EchoRequest&) = default;
};

struct EchoReply {
  std::uint32_t xid = 0;
  std::vector<std::uint8_t> data;
  friend bool operator==(const EchoReply&, const EchoReply&) = default;
};

struct FeaturesRequest {
  std::uint32_t xid = 0;
  friend bool operator==(const FeaturesRequest&, const FeaturesRequest&) = default;
};

struct PhyPort {
  std::uint16_t port_no = 0;
  MacAddress hw_addr;
  std::array<char, 16> name{};
  std::uint32_t config = 0;
  std::uint32_t state = 0;
  std::uint32_t curr = 0;
  std::uint32_t advertised = 0;
  std::uint32_t supported = 0;
  std::uint32_t peer = 0;
  friend bool operator==(const PhyPort&, const PhyPort&) = default;
};

struct FeaturesReply {
  std::uint32_t xid = 0;
  std::uint64_t datapath_id = 0;
  std::uint32_t n_buffers = 0;
  std::uint8_t n_tables = 0;
  std::uint32_t capabilities = 0;
  std::uint32_t actions = 0;
  std::vector<PhyPort> ports;
  friend bool operator==(const FeaturesReply&, const FeaturesReply&) = default;
};

enum class PacketInReason : std::uint8_t { NoMatch = 0, Action = 1 };

struct PacketIn {
  std::uint32_t xid = 0;
  std::uint32_t buffer_id = kNoBuffer;
  std::uint16_t total_len = 0;
  std::uint16_t in_port = 0;
  PacketInReason reason = PacketInReason::NoMatch;
  std::vector<std::uint8_t> frame;

  // Both return all-zero for frames shorter than an Ethernet address pair.
  [[nodiscard]] MacAddress dst_mac() const;
  [[nodiscard]] MacAddress src_mac() const;

  friend bool operator==(const PacketIn&, const PacketIn&) = default;
};

struct OutputAction {
  std::uint16_t port = 0;
  std::uint16_t max_len = 0;
  friend bool operator==(const OutputAction&, const OutputAction&) = default;
};

struct Match {
  std::uint32_t wildcards = wildcard::kAll;
  std::uint16_t in_port = 0;
  MacAddress dl_src;
  MacAddress dl_dst;
  std::uint16_t dl_vlan = 0;
  std::uint8_t dl_vlan_pcp = 0;
  std::uint16_t dl_type = 0;
  std::uint8_t nw_tos = 0;
  std::uint8_t nw_proto = 0;
  std::uint32_t nw_src = 0;
  std::uint32_t nw_dst = 0;
  std::uint16_t tp_src = 0;
  std::uint16_t tp_dst = 0;
  friend bool operator==(const Match&, const Match&) = default;
};

enum class FlowModCommand : std::uint16_t {
  Add = 0,
  Modify = 1,
  ModifyStrict = 2,
  Delete = 3,
  DeleteStrict = 4,
};

struct FlowMod {
  std::uint32_t xid = 0;
  Match match;
  std::uint64_t cookie = 0;
  FlowModCommand command = FlowModCommand::Add;
  std::uint16_t idle_timeout = 0;
  std::uint16_t hard_timeout = 0;
  std::uint16_t priority = 0x8000;
  std::uint32_t buffer_id = kNoBuffer;
  std::uint16_t out_port = port::kNone;
  std::uint16_t flags = 0;
  std::vector<OutputAction> actions;
  friend bool operator==(const FlowMod&, const FlowMod&) = default;
};

struct PacketOut {
  std::uint32_t xid = 0;
  std::uint32_t buffer_id = kNoBuffer;
  std::uint16_t in_port = port::kNone;
  std::vector<OutputAction> actions;
  std::vector<std::uint8_t> data;
  friend bool operator==(const PacketOut&, const PacketOut&) = default;
};

/// A message whose type this codec does not materialize.  Kept as raw bytes
/// so callers can skip it without tearing down the connection.
struct Unknown {
  Header header;
  std::vector<std::uint8_t> body;
  friend bool operator==(const Unknown&, const Unknown&) = default;
};

using Message = std::variant<Hello, ErrorMsg, EchoRequest, EchoReply, FeaturesRequest,
                             FeaturesReply, PacketIn, PacketOut, FlowMod, Unknown>;

[[nodiscard]] MsgType type_of(const Message& msg);
[[nodiscard]] std::uint32_t xid_of(const Message& msg);
[[nodiscard]] std::size_t encoded_size(const Message& msg);

/// Decodes the first 8 bytes of `bytes`.  Rejects length < 8 and any
/// version other than 1.
[[nodiscard]] Result<Header> parse_header(std::span<const std::uint8_t> bytes);

/// Like parse_header, but a HELLO carrying a newer version is accepted and
/// reported as version 1 (version negotiation settles on the lower version).
[[nodiscard]] Result<Header> parse_header_negotiating(std::span<const std::uint8_t> bytes);

void serialize_header(const Header& header, std::span<std::uint8_t, kHeaderSize> out) noexcept;
[[nodiscard]] std::array<std::uint8_t, kHeaderSize> serialize_header(const Header& header) noexcept;

/// `body` is everything after the header; its size must equal
/// header.length - 8.
[[nodiscard]] Result<Message> decode_message(const Header& header,
                                             std::span<const std::uint8_t> body);

/// Writes the wire form into `sink`.  Fails with InsufficientCapacity rather
/// than allocating when the sink is too small.
[[nodiscard]] Result<std::size_t> encode_into(const Message& msg, std::span<std::uint8_t> sink);

/// Convenience for cold paths (handshake, tests).
[[nodiscard]] std::vector<std::uint8_t> encode(const Message& msg);

// ---------------------------------------------------------------------------
// Zero-copy hot path.

/// Non-owning view of a packet-in still sitting in a receive buffer.
struct PacketInView {
  std::uint32_t xid = 0;
  std::uint32_t buffer_id = kNoBuffer;
  std::uint16_t total_len = 0;
  std::uint16_t in_port = 0;
  PacketInReason reason = PacketInReason::NoMatch;
  std::span<const std::uint8_t> frame;

  [[nodiscard]] std::uint64_t dst_mac() const noexcept;
  [[nodiscard]] std::uint64_t src_mac() const noexcept;
};

[[nodiscard]] Result<PacketInView> view_packet_in(const Header& header,
                                                  std::span<const std::uint8_t> body);

/// Flow-mod for a learning-switch verdict: exact match on in_port/dl_src/dl_dst,
/// a single output action.  Written straight into `sink`.
struct LearnedFlow {
  std::uint32_t xid = 0;
  std::uint32_t buffer_id = kNoBuffer;
  std::uint16_t in_port = 0;
  std::uint64_t src_mac = 0;
  std::uint64_t dst_mac = 0;
  std::uint16_t out_port = port::kFlood;
  std::uint16_t idle_timeout = 0;
  std::uint16_t hard_timeout = 0;
  std::uint16_t priority = 0x8000;
};

[[nodiscard]] Result<std::size_t> encode_flow_mod_into(const LearnedFlow& flow,
                                                       std::span<std::uint8_t> sink) noexcept;

/// Same flow expressed as a materialized message.
[[nodiscard]] FlowMod make_flow_mod(const LearnedFlow& flow);

// ---------------------------------------------------------------------------
// Framing.

struct Frame {
  Header header;
  std::span<const std::uint8_t> bytes;  // whole message, header included

  [[nodiscard]] std::span<const std::uint8_t> body() const noexcept {
    return bytes.subspan(kHeaderSize);
  }
};

/// Splits the next complete message off the front of `stream`.
/// nullopt means more bytes are needed.  A header with length < 8 is an
/// error and the caller must stop reading the stream.
[[nodiscard]] Result<std::optional<Frame>> next_frame(std::span<const std::uint8_t> stream,
                                                      bool negotiate_hello = false);

}  // namespace ofb::wire
