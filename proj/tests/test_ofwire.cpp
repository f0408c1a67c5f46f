#include <gtest/gtest.h>

#include <array>
#include <cstdint>
#include <vector>

#include "ofbench/bench.hpp"
#include "ofbench/ofwire.hpp"
#include "support/gen.hpp"

using namespace ofb;
using namespace ofb::wire;

namespace {

constexpr int kCasesPerType = 100'000;

Result<Message> decode_all(std::span<const std::uint8_t> bytes) {
  auto h = parse_header(bytes);
  if (!h) return h.error();
  return decode_message(*h, bytes.subspan(kHeaderSize, h->length - kHeaderSize));
}

}  // namespace

TEST(ParseHeader, HelloFromRawBytes) {
  const std::array<std::uint8_t, 8> raw{0x01, 0x00, 0x00, 0x08, 0x00, 0x00, 0x00, 0x2A};
  auto h = parse_header(raw);
  ASSERT_TRUE(h.ok());
  EXPECT_EQ(h->version, 1);
  EXPECT_EQ(h->type, MsgType::Hello);
  EXPECT_EQ(h->length, 8);
  EXPECT_EQ(h->xid, 42u);
}

TEST(ParseHeader, LengthSevenIsMalformed) {
  const std::array<std::uint8_t, 8> raw{0x01, 0x00, 0x00, 0x07, 0x00, 0x00, 0x00, 0x01};
  auto h = parse_header(raw);
  ASSERT_FALSE(h.ok());
  EXPECT_EQ(h.error(), WireError::MalformedLength);
}

TEST(ParseHeader, EveryLengthBelowEightIsRejected) {
  for (std::uint16_t len = 0; len < 8; ++len) {
    const std::array<std::uint8_t, 8> raw{0x01, 0x0a, 0x00, static_cast<std::uint8_t>(len), 0, 0, 0, 0};
    auto h = parse_header(raw);
    ASSERT_FALSE(h.ok()) << len;
    EXPECT_EQ(h.error(), WireError::MalformedLength);
  }
}

TEST(ParseHeader, WrongVersion) {
  const std::array<std::uint8_t, 8> raw{0x04, 0x00, 0x00, 0x08, 0x00, 0x00, 0x00, 0x01};
  EXPECT_EQ(parse_header(raw).error(), WireError::BadVersion);
  // A newer HELLO negotiates down.
  auto n = parse_header_negotiating(raw);
  ASSERT_TRUE(n.ok());
  EXPECT_EQ(n->version, kVersion);
}

TEST(ParseHeader, RoundTripsEveryValidHeader) {
  gen::Rng r(gen::base_seed());
  for (int i = 0; i < kCasesPerType; ++i) {
    Header h{kVersion, static_cast<MsgType>(r.below(20)), static_cast<std::uint16_t>(8 + r.below(0xfff8)), r.u32()};
    auto back = parse_header(serialize_header(h));
    ASSERT_TRUE(back.ok());
    ASSERT_EQ(*back, h);
  }
}

TEST(Codec, RoundTripPerMessageType) {
  for (std::size_t kind = 0; kind < gen::kGeneratedKinds; ++kind) {
    gen::Rng r(gen::base_seed() + kind);
    std::vector<std::uint8_t> sink(kMaxMessageSize);
    for (int i = 0; i < kCasesPerType; ++i) {
      const Message m = gen::gen_message(r, kind);
      auto n = encode_into(m, sink);
      ASSERT_TRUE(n.ok()) << "kind " << kind;
      ASSERT_EQ(*n, encoded_size(m));
      // The length field is the number of bytes written.
      ASSERT_EQ((sink[2] << 8 | sink[3]), static_cast<int>(*n));
      auto back = decode_all(std::span(sink).first(*n));
      ASSERT_TRUE(back.ok()) << "kind " << kind << " case " << i;
      ASSERT_EQ(*back, m) << "kind " << kind << " case " << i;
    }
  }
}

TEST(Codec, EncodeIsDeterministic) {
  gen::Rng r(gen::base_seed() ^ 0xd);
  for (int i = 0; i < 1000; ++i) {
    const Message m = gen::gen_message(r, r.below(gen::kGeneratedKinds));
    ASSERT_EQ(encode(m), encode(m));
  }
}

TEST(Codec, HelloIsItsHeader) {
  const auto bytes = encode(Hello{7});
  ASSERT_EQ(bytes.size(), 8u);
  const auto h = serialize_header(Header{kVersion, MsgType::Hello, 8, 7});
  EXPECT_TRUE(std::equal(bytes.begin(), bytes.end(), h.begin()));
}

TEST(Codec, BenchmarkSizes) {
  const auto probe = bench::encode_probe(3, 11, 1000);
  EXPECT_EQ(probe.size(), 82u);
  EXPECT_EQ(kProbePacketInSize, 82u);

  LearnedFlow f{1, 1, 1, 2, 3, port::kFlood};
  std::array<std::uint8_t, 128> sink{};
  auto n = encode_flow_mod_into(f, sink);
  ASSERT_TRUE(n.ok());
  EXPECT_EQ(*n, 80u);
  EXPECT_EQ(encode(make_flow_mod(f)).size(), 80u);

  PacketOut po;
  po.buffer_id = 1;
  po.actions.push_back({port::kFlood, 0});
  const auto po_size = encode(po).size();
  EXPECT_EQ(po_size, 24u);
  EXPECT_LT(po_size, *n);
  // Packet-outs are roughly a third of a flow-mod.
  EXPECT_NEAR(static_cast<double>(po_size) / static_cast<double>(*n), 1.0 / 3.0, 0.05);
}

TEST(Codec, HotPathFlowModMatchesMaterializedEncoding) {
  gen::Rng r(gen::base_seed() ^ 0xf10);
  std::array<std::uint8_t, 128> sink{};
  for (int i = 0; i < 10'000; ++i) {
    LearnedFlow f{r.u32(), r.u32(), r.u16(), r.next() & 0xffffffffffffull, r.next() & 0xffffffffffffull, r.u16(),
                  r.u16(), r.u16(), r.u16()};
    auto n = encode_flow_mod_into(f, sink);
    ASSERT_TRUE(n.ok());
    const auto ref = encode(make_flow_mod(f));
    ASSERT_TRUE(std::equal(ref.begin(), ref.end(), sink.begin()));
  }
}

TEST(Codec, InsufficientCapacity) {
  std::array<std::uint8_t, 79> small{};
  EXPECT_EQ(encode_flow_mod_into(LearnedFlow{}, small).error(), WireError::InsufficientCapacity);
  FlowMod fm;
  fm.actions.push_back({port::kFlood, 0});
  EXPECT_EQ(encode_into(fm, small).error(), WireError::InsufficientCapacity);
}

TEST(Decode, BenchmarkPacketInMacs) {
  const auto probe = bench::encode_probe(5, 17, 100);
  auto m = decode_all(probe);
  ASSERT_TRUE(m.ok());
  const auto& pin = std::get<PacketIn>(*m);
  const auto macs = bench::gen_macs(5, 17, 100);
  EXPECT_EQ(pin.src_mac().to_u64(), macs.src);
  EXPECT_EQ(pin.dst_mac().to_u64(), macs.dst);
  EXPECT_EQ(pin.xid, 17u);
  EXPECT_EQ(pin.buffer_id, 17u);
  EXPECT_EQ(pin.frame.size(), kProbeFrameSize);

  auto h = parse_header(probe);
  auto v = view_packet_in(*h, std::span(probe).subspan(kHeaderSize));
  ASSERT_TRUE(v.ok());
  EXPECT_EQ(v->src_mac(), macs.src);
  EXPECT_EQ(v->dst_mac(), macs.dst);
  EXPECT_EQ(v->in_port, pin.in_port);
}

TEST(Decode, FeaturesReplyWithoutPorts) {
  FeaturesReply f{9, 7, 256, 1, 0, 0, {}};
  auto m = decode_all(encode(f));
  ASSERT_TRUE(m.ok());
  EXPECT_EQ(std::get<FeaturesReply>(*m).ports.size(), 0u);
  EXPECT_EQ(std::get<FeaturesReply>(*m).datapath_id, 7u);
}

TEST(Decode, TruncatedBody) {
  auto bytes = encode(FlowMod{});
  Header h = *parse_header(bytes);
  EXPECT_EQ(decode_message(h, std::span(bytes).subspan(8, 10)).error(), WireError::TruncatedBody);
}

TEST(Decode, UnknownTypeIsKeptRaw) {
  std::vector<std::uint8_t> bytes{0x01, 17, 0x00, 0x0c, 0, 0, 0, 5, 0xde, 0xad, 0xbe, 0xef};
  auto m = decode_all(bytes);
  ASSERT_TRUE(m.ok());
  const auto& u = std::get<Unknown>(*m);
  EXPECT_EQ(u.header.type, MsgType::StatsReply);
  EXPECT_EQ(u.body.size(), 4u);
}

TEST(Framing, RecoversExactlyKMessages) {
  gen::Rng r(gen::base_seed() ^ 0xf4a);
  for (int round = 0; round < 500; ++round) {
    const std::size_t k = r.below(40);
    std::vector<Message> sent;
    std::vector<std::uint8_t> stream;
    for (std::size_t i = 0; i < k; ++i) {
      sent.push_back(gen::gen_message(r, r.below(gen::kGeneratedKinds)));
      const auto b = encode(sent.back());
      stream.insert(stream.end(), b.begin(), b.end());
    }
    std::span<const std::uint8_t> rest(stream);
    std::vector<Message> got;
    for (;;) {
      auto f = next_frame(rest);
      ASSERT_TRUE(f.ok());
      if (!f->has_value()) break;
      const Frame& fr = **f;
      auto m = decode_message(fr.header, fr.body());
      ASSERT_TRUE(m.ok());
      got.push_back(*m);
      rest = rest.subspan(fr.bytes.size());
    }
    EXPECT_TRUE(rest.empty());
    ASSERT_EQ(got, sent);
  }
}

TEST(Framing, PartialMessageWaitsForMoreBytes) {
  const auto b = encode(FlowMod{});
  for (std::size_t cut = 0; cut < b.size(); ++cut) {
    auto f = next_frame(std::span(b).first(cut));
    ASSERT_TRUE(f.ok());
    EXPECT_FALSE(f->has_value()) << cut;
  }
}

TEST(Framing, MalformedLengthStopsTheStream) {
  gen::Rng r(gen::base_seed() ^ 0xbad);
  for (int round = 0; round < 1000; ++round) {
    std::vector<std::uint8_t> stream = encode(Hello{1});
    const std::array<std::uint8_t, 8> bad{0x01, 0x0a, 0x00, static_cast<std::uint8_t>(r.below(8)), 0, 0, 0, 0};
    stream.insert(stream.end(), bad.begin(), bad.end());
    auto tail = r.bytes(64);
    stream.insert(stream.end(), tail.begin(), tail.end());

    std::span<const std::uint8_t> rest(stream);
    auto first = next_frame(rest);
    ASSERT_TRUE(first.ok() && first->has_value());
    rest = rest.subspan((*first)->bytes.size());
    auto second = next_frame(rest);
    ASSERT_FALSE(second.ok());
    EXPECT_EQ(second.error(), WireError::MalformedLength);
  }
}
