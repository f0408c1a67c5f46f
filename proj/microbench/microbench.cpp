// Per-packet costs of the controller hot path, each next to the plain
// serial version it replaces.
//
//   ofbench_microbench --benchmark_filter=FlowMod

#include <benchmark/benchmark.h>

#include <map>
#include <vector>

#include "ofbench/bench.hpp"
#include "ofbench/bufferpool.hpp"
#include "ofbench/learnswitch.hpp"
#include "ofbench/ofwire.hpp"

namespace {

using namespace ofb;

constexpr std::size_t kProbes = 4096;

std::vector<bench::ProbeBytes> probes(std::uint64_t macs) {
  std::vector<bench::ProbeBytes> out;
  for (std::size_t i = 0; i < kProbes; ++i) out.push_back(bench::encode_probe(i % 64, i, macs));
  return out;
}

// Reference: decode to a Message, build a FlowMod value, encode it.
void BM_FlowModMaterialized(benchmark::State& state) {
  const auto in = probes(1000);
  learn::MacTable table(learn::TableStrategy::SharedLocked, 1, false);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& p = in[i++ % kProbes];
    auto h = wire::parse_header(p);
    auto m = wire::decode_message(*h, std::span(p).subspan(wire::kHeaderSize));
    const auto& pi = std::get<wire::PacketIn>(*m);
    const auto d = learn::handle_packet_in(table, 1, pi.in_port, pi.src_mac().to_u64(), pi.dst_mac().to_u64());
    auto bytes = wire::encode(
        wire::make_flow_mod({pi.xid, pi.buffer_id, pi.in_port, pi.src_mac().to_u64(), pi.dst_mac().to_u64(), d.out_port()}));
    benchmark::DoNotOptimize(bytes.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_FlowModMaterialized);

// Hot path: view the packet-in in place, write the flow-mod into a sink.
void BM_FlowModInPlace(benchmark::State& state) {
  const auto in = probes(1000);
  learn::MacTable table(learn::TableStrategy::ShardedPerWorker, 1, false);
  std::array<std::uint8_t, 128> sink{};
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& p = in[i++ % kProbes];
    auto h = wire::parse_header(p);
    auto v = wire::view_packet_in(*h, std::span(p).subspan(wire::kHeaderSize));
    const auto d = learn::handle_packet_in(table, 1, v->in_port, v->src_mac(), v->dst_mac());
    auto n = wire::encode_flow_mod_into({v->xid, v->buffer_id, v->in_port, v->src_mac(), v->dst_mac(), d.out_port()},
                                        sink);
    benchmark::DoNotOptimize(n);
    benchmark::DoNotOptimize(sink.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_FlowModInPlace);

// Learning-switch lookups: std::map reference against both table strategies.
void BM_LearnStdMap(benchmark::State& state) {
  const auto macs = static_cast<std::uint64_t>(state.range(0));
  std::map<learn::MacKey, std::uint16_t> table;
  std::uint64_t seq = 0;
  for (auto _ : state) {
    const auto m = bench::gen_macs(seq % 64, seq / 64, macs);
    ++seq;
    auto it = table.find({seq % 64 + 1, m.dst});
    const auto port = it == table.end() ? std::uint16_t{0xfffb} : it->second;
    table[{seq % 64 + 1, m.src}] = bench::probe_in_port(m.src);
    benchmark::DoNotOptimize(port);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_LearnStdMap)->Arg(1000)->Arg(1'000'000);

void BM_LearnTable(benchmark::State& state) {
  const auto macs = static_cast<std::uint64_t>(state.range(0));
  const auto strategy = static_cast<learn::TableStrategy>(state.range(1));
  learn::MacTable table(strategy, 1, false);
  std::uint64_t seq = 0;
  for (auto _ : state) {
    const auto m = bench::gen_macs(seq % 64, seq / 64, macs);
    ++seq;
    benchmark::DoNotOptimize(
        learn::handle_packet_in(table, seq % 64 + 1, bench::probe_in_port(m.src), m.src, m.dst));
  }
  state.SetLabel(std::string(learn::to_string(strategy)));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_LearnTable)->ArgsProduct({{1000, 1'000'000}, {0, 1}});

void BM_BufferCycle(benchmark::State& state) {
  buffers::BufferStrategy s;
  s.kind = static_cast<buffers::BufferKind>(state.range(0));
  buffers::BufferPool pool(s, false);
  for (auto _ : state) {
    auto b = pool.acquire(82);
    benchmark::DoNotOptimize(b.writable().data());
    pool.release(std::move(b));
  }
  state.SetLabel(std::string(buffers::to_string(s.kind)));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_BufferCycle)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
