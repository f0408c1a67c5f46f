#pragma once

// Learning-switch state: (datapath, MAC) -> port.
//
// Both strategies store entries in open-addressing tables (linear probing,
// 16-byte slots).  SharedLocked stripes one logical table over mutex-guarded
// partitions; ShardedPerWorker gives every worker a private partition and
// routes datapath d to partition d % shard_count.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ofb::learn {

struct MacKey {
  std::uint64_t datapath_id = 0;
  std::uint64_t mac = 0;  // low 48 bits

  friend bool operator==(const MacKey&, const MacKey&) = default;
  friend auto operator<=>(const MacKey&, const MacKey&) = default;
};

struct MacKeyHash {
  std::size_t operator()(const MacKey& k) const noexcept;
};

enum class TableStrategy : std::uint8_t { SharedLocked, ShardedPerWorker };

std::string_view to_string(TableStrategy strategy);
TableStrategy parse_table_strategy(std::string_view text);

struct Decision {
  enum class Kind : std::uint8_t { Forward, Flood };

  Kind kind = Kind::Flood;
  std::uint16_t port = 0;  // meaningful for Forward only

  static Decision forward(std::uint16_t p) noexcept { return {Kind::Forward, p}; }
  static Decision flood() noexcept { return {Kind::Flood, 0}; }

  /// Port placed in the flow-mod output action.
  [[nodiscard]] std::uint16_t out_port() const noexcept;

  friend bool operator==(const Decision&, const Decision&) = default;
};

class WrongShard : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Single-threaded open-addressing map.  Grows at 3/4 load; never shrinks.
class FlatMacMap {
 public:
  FlatMacMap();

  [[nodiscard]] std::optional<std::uint16_t> find(const MacKey& key) const noexcept;
  void upsert(const MacKey& key, std::uint16_t port);
  [[nodiscard]] std::size_t size() const noexcept { return size_ + reserved_.size(); }
  [[nodiscard]] std::size_t slot_count() const noexcept { return slots_.size(); }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& s : slots_) {
      if (s.datapath_id != kEmpty) fn(MacKey{s.datapath_id, s.mac_port >> 16}, static_cast<std::uint16_t>(s.mac_port));
    }
    for (const auto& [mac, port] : reserved_) fn(MacKey{kEmpty, mac}, port);
  }

 private:
  static constexpr std::uint64_t kEmpty = ~std::uint64_t{0};

  struct Slot {
    std::uint64_t datapath_id;
    std::uint64_t mac_port;  // mac << 16 | port
  };

  void grow();

  std::vector<Slot> slots_;
  std::size_t mask_ = 0;
  std::size_t size_ = 0;
  // Keys whose datapath id collides with the empty marker.
  std::unordered_map<std::uint64_t, std::uint16_t> reserved_;
};

class MacTable {
 public:
#ifdef NDEBUG
  static constexpr bool kAuditDefault = false;
#else
  static constexpr bool kAuditDefault = true;
#endif

  /// `partitions` is the stripe count (SharedLocked) or shard count
  /// (ShardedPerWorker).
  MacTable(TableStrategy strategy, std::size_t partitions, bool audit = kAuditDefault);
  ~MacTable();
  MacTable(MacTable&&) noexcept;
  MacTable& operator=(MacTable&&) noexcept;

  [[nodiscard]] TableStrategy strategy() const noexcept { return strategy_; }
  [[nodiscard]] std::size_t partitions() const noexcept { return partition_count_; }
  [[nodiscard]] std::size_t shard_of(std::uint64_t datapath_id) const noexcept {
    return static_cast<std::size_t>(datapath_id % partition_count_);
  }

  /// `worker` identifies the caller; in sharded mode it must own the key's
  /// shard (checked only when auditing).
  [[nodiscard]] std::optional<std::uint16_t> lookup(const MacKey& key, std::size_t worker = 0) const;
  void insert(const MacKey& key, std::uint16_t port, std::size_t worker = 0);

  /// Lookup of dst followed by learning of src, under one stripe lock when
  /// both keys land in the same stripe.
  [[nodiscard]] Decision learn_and_decide(std::uint64_t datapath_id, std::uint16_t in_port,
                                          std::uint64_t src_mac, std::uint64_t dst_mac,
                                          std::size_t worker = 0);

  // Quiescent-only inspection.
  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] std::vector<std::pair<MacKey, std::uint16_t>> snapshot() const;

  /// Mutex acquisitions made by the calling thread on any MacTable.
  [[nodiscard]] static std::uint64_t lock_acquisitions_this_thread() noexcept;

 private:
  struct Partition;

  void check_owner(const MacKey& key, std::size_t worker) const;

  TableStrategy strategy_;
  std::size_t partition_count_;
  bool audit_;
  std::unique_ptr<Partition[]> parts_;
};

/// One packet-in through the learning switch: learns (dpid, src) -> in_port
/// and decides on dst using only what was known before this call.
[[nodiscard]] Decision handle_packet_in(MacTable& table, std::uint64_t datapath_id,
                                        std::uint16_t in_port, std::uint64_t src_mac,
                                        std::uint64_t dst_mac, std::size_t worker = 0);

}  // namespace ofb::learn
