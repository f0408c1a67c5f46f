#include "ofbench/learnswitch.hpp"

#include <string>

#include "ofbench/ofwire.hpp"

namespace ofb::learn {

namespace {

thread_local std::uint64_t t_lock_acquisitions = 0;

constexpr std::uint64_t mix(std::uint64_t x) noexcept {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

constexpr std::uint64_t hash_key(const MacKey& k) noexcept {
  return mix(k.mac ^ mix(k.datapath_id + 0x9e3779b97f4a7c15ULL));
}

constexpr std::uint64_t kMacMask = (std::uint64_t{1} << 48) - 1;

}  // namespace

std::size_t MacKeyHash::operator()(const MacKey& k) const noexcept {
  return static_cast<std::size_t>(hash_key(k));
}

std::string_view to_string(TableStrategy strategy) {
  switch (strategy) {
    case TableStrategy::SharedLocked: return "shared_locked";
    case TableStrategy::ShardedPerWorker: return "sharded_per_worker";
  }
  return "unknown";
}

TableStrategy parse_table_strategy(std::string_view text) {
  if (text == "shared_locked" || text == "shared") return TableStrategy::SharedLocked;
  if (text == "sharded_per_worker" || text == "sharded") return TableStrategy::ShardedPerWorker;
  throw std::invalid_argument("unknown table strategy: " + std::string(text));
}

std::uint16_t Decision::out_port() const noexcept {
  return kind == Kind::Forward ? port : wire::port::kFlood;
}

// ---------------------------------------------------------------------------
// FlatMacMap

FlatMacMap::FlatMacMap() : slots_(16, Slot{kEmpty, 0}), mask_(15) {}

std::optional<std::uint16_t> FlatMacMap::find(const MacKey& key) const noexcept {
  const std::uint64_t mac = key.mac & kMacMask;
  if (key.datapath_id == kEmpty) {
    auto it = reserved_.find(mac);
    if (it == reserved_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t i = static_cast<std::size_t>(hash_key(MacKey{key.datapath_id, mac})) & mask_;
  for (;;) {
    const Slot& s = slots_[i];
    if (s.datapath_id == kEmpty) return std::nullopt;
    if (s.datapath_id == key.datapath_id && (s.mac_port >> 16) == mac) {
      return static_cast<std::uint16_t>(s.mac_port);
    }
    i = (i + 1) & mask_;
  }
}

void FlatMacMap::upsert(const MacKey& key, std::uint16_t port) {
  const std::uint64_t mac = key.mac & kMacMask;
  if (key.datapath_id == kEmpty) {
    reserved_[mac] = port;
    return;
  }
  if ((size_ + 1) * 4 > slots_.size() * 3) grow();
  std::size_t i = static_cast<std::size_t>(hash_key(MacKey{key.datapath_id, mac})) & mask_;
  for (;;) {
    Slot& s = slots_[i];
    if (s.datapath_id == kEmpty) {
      s.datapath_id = key.datapath_id;
      s.mac_port = (mac << 16) | port;
      ++size_;
      return;
    }
    if (s.datapath_id == key.datapath_id && (s.mac_port >> 16) == mac) {
      s.mac_port = (mac << 16) | port;
      return;
    }
    i = (i + 1) & mask_;
  }
}

void FlatMacMap::grow() {
  std::vector<Slot> old(slots_.size() * 2, Slot{kEmpty, 0});
  old.swap(slots_);
  mask_ = slots_.size() - 1;
  for (const Slot& s : old) {
    if (s.datapath_id == kEmpty) continue;
    std::size_t i = static_cast<std::size_t>(hash_key(MacKey{s.datapath_id, s.mac_port >> 16})) & mask_;
    while (slots_[i].datapath_id != kEmpty) i = (i + 1) & mask_;
    slots_[i] = s;
  }
}

// ---------------------------------------------------------------------------
// MacTable

struct alignas(64) MacTable::Partition {
  mutable std::mutex mu;
  FlatMacMap map;
};

MacTable::MacTable(TableStrategy strategy, std::size_t partitions, bool audit)
    : strategy_(strategy), partition_count_(partitions == 0 ? 1 : partitions), audit_(audit),
      parts_(std::make_unique<Partition[]>(partition_count_)) {}

MacTable::~MacTable() = default;
MacTable::MacTable(MacTable&&) noexcept = default;
MacTable& MacTable::operator=(MacTable&&) noexcept = default;

std::uint64_t MacTable::lock_acquisitions_this_thread() noexcept { return t_lock_acquisitions; }

void MacTable::check_owner(const MacKey& key, std::size_t worker) const {
  if (audit_ && shard_of(key.datapath_id) != worker) {
    throw WrongShard("worker " + std::to_string(worker) + " touched shard " +
                     std::to_string(shard_of(key.datapath_id)));
  }
}

std::optional<std::uint16_t> MacTable::lookup(const MacKey& key, std::size_t worker) const {
  if (strategy_ == TableStrategy::ShardedPerWorker) {
    check_owner(key, worker);
    return parts_[shard_of(key.datapath_id)].map.find(key);
  }
  const Partition& p = parts_[(hash_key(key) >> 40) % partition_count_];
  std::lock_guard lock(p.mu);
  ++t_lock_acquisitions;
  return p.map.find(key);
}

void MacTable::insert(const MacKey& key, std::uint16_t port, std::size_t worker) {
  if (strategy_ == TableStrategy::ShardedPerWorker) {
    check_owner(key, worker);
    parts_[shard_of(key.datapath_id)].map.upsert(key, port);
    return;
  }
  Partition& p = parts_[(hash_key(key) >> 40) % partition_count_];
  std::lock_guard lock(p.mu);
  ++t_lock_acquisitions;
  p.map.upsert(key, port);
}

Decision MacTable::learn_and_decide(std::uint64_t datapath_id, std::uint16_t in_port,
                                    std::uint64_t src_mac, std::uint64_t dst_mac,
                                    std::size_t worker) {
  const MacKey dst{datapath_id, dst_mac};
  const MacKey src{datapath_id, src_mac};
  std::optional<std::uint16_t> known;
  if (strategy_ == TableStrategy::ShardedPerWorker) {
    check_owner(dst, worker);
    FlatMacMap& map = parts_[shard_of(datapath_id)].map;
    known = map.find(dst);
    map.upsert(src, in_port);
  } else {
    const std::size_t di = (hash_key(dst) >> 40) % partition_count_;
    const std::size_t si = (hash_key(src) >> 40) % partition_count_;
    if (di == si) {
      Partition& p = parts_[di];
      std::lock_guard lock(p.mu);
      ++t_lock_acquisitions;
      known = p.map.find(dst);
      p.map.upsert(src, in_port);
    } else {
      known = lookup(dst, worker);
      insert(src, in_port, worker);
    }
  }
  return known ? Decision::forward(*known) : Decision::flood();
}

std::size_t MacTable::size() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < partition_count_; ++i) n += parts_[i].map.size();
  return n;
}

std::vector<std::pair<MacKey, std::uint16_t>> MacTable::snapshot() const {
  std::vector<std::pair<MacKey, std::uint16_t>> out;
  out.reserve(size());
  for (std::size_t i = 0; i < partition_count_; ++i) {
    parts_[i].map.for_each([&](const MacKey& k, std::uint16_t port) { out.emplace_back(k, port); });
  }
  return out;
}

Decision handle_packet_in(MacTable& table, std::uint64_t datapath_id, std::uint16_t in_port,
                          std::uint64_t src_mac, std::uint64_t dst_mac, std::size_t worker) {
  return table.learn_and_decide(datapath_id, in_port, src_mac, dst_mac, worker);
}

}  // namespace ofb::learn
