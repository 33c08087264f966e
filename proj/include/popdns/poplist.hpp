#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "popdns/core.hpp"
#include "popdns/wire.hpp"

namespace popdns {

/// Pool-section answer encoding, shared by snapshots and update batches:
/// tag byte, then 4 bytes (A), 16 bytes (AAAA), or count-prefixed labels.
void write_answer(ByteWriter& w, const RecordAnswer& answer);
RecordAnswer read_answer(ByteReader& r);

/// Position of an answer in the append-only pool, assigned by first
/// appearance and never reassigned.
using PoolIndex = uint32_t;

struct ListEntry {
  RecordKey key;
  PoolIndex answer = 0;
  TtlSeconds ttl;
  uint32_t order = 0;  // order of appearance in the list == slot index
  bool is_cname_support = false;

  bool operator==(const ListEntry&) const = default;
};

/// Result of resolving a key against the list. A hit carries the full CNAME
/// chain ending in a non-CNAME answer; every element but the last is a CNAME
/// whose target is the next element's name. Chains never exceed 8 links.
struct LookupResult {
  std::vector<std::pair<RecordKey, RecordAnswer>> chain;
  bool hit() const { return !chain.empty(); }
  const RecordAnswer& terminal() const { return chain.back().second; }
};

/// The Popularity List: an ordered, trie-indexed collection of the most
/// popular records plus intermediate CNAME-chain records, with an append-only
/// pool of every answer any entry has ever held.
///
/// Entries are identified by their order of appearance. Removal tombstones
/// the order slot so references in incremental updates stay valid; orders are
/// renumbered (pre-order trie traversal) only when a fresh snapshot is cut.
///
/// Value semantics: copy freely, mutate under exclusive access.
class PopularityList {
 public:
  PopularityList();

  // -- inspection --
  uint64_t version() const { return version_; }
  size_t order_count() const { return slots_.size(); }      // incl. tombstones
  size_t entry_count() const { return live_count_; }        // live entries
  size_t popular_count() const { return popular_count_; }   // live, non-support
  size_t pool_size() const { return pool_.size(); }
  const RecordAnswer& pool_at(PoolIndex i) const;
  bool live(uint32_t order) const;
  /// Entry data for any slot ever allocated; tombstoned slots keep theirs.
  const ListEntry& entry_data(uint32_t order) const;
  std::optional<uint32_t> find_order(const RecordKey& key) const;

  LookupResult lookup(const RecordKey& key) const;

  // -- mutation --
  void set_version(uint64_t v) { version_ = v; }
  void bump_version() { ++version_; }

  /// Index of `answer` in the pool, appending on first sight.
  PoolIndex pool_intern(const RecordAnswer& answer);
  /// Pool index if already interned; nullopt otherwise.
  std::optional<PoolIndex> pool_find(const RecordAnswer& answer) const;

  /// Append a new entry at order = order_count(). The key must not be live
  /// and the answer must be pool-resident and type-compatible.
  uint32_t add_entry(const RecordKey& key, PoolIndex answer, TtlSeconds ttl,
                     bool is_cname_support);
  /// Tombstone the slot; other orders are unchanged.
  void remove_entry(uint32_t order);
  void set_answer(uint32_t order, PoolIndex answer);
  void set_ttl(uint32_t order, TtlSeconds ttl);

  /// Drop pool answers no slot references (the garbage answer churn leaves
  /// behind) and renumber the survivors by first reference in slot order.
  /// Entries keep their values; previously obtained PoolIndex values are
  /// invalidated. Peers exchanging pool-relative deltas must compact at the
  /// same protocol point or their references diverge.
  void compact_pool();

  /// Canonical form: tombstones dropped, orders renumbered by pre-order trie
  /// traversal, pool rebuilt in first-reference order. This is the state a
  /// fresh snapshot represents; version is preserved.
  PopularityList canonical() const;

  /// Entries, pool and version all equal (orders and pool indices included).
  bool operator==(const PopularityList& o) const;

 private:
  struct Slot {
    ListEntry entry;
    bool live = false;
    bool operator==(const Slot&) const = default;
  };

  struct TrieNode {
    std::map<std::string, uint32_t> children;           // label -> node index
    std::vector<std::pair<QType, uint32_t>> entries;    // sorted by qtype
  };

  uint32_t trie_walk(const DomainName& name) const;  // kNoNode if absent
  uint32_t trie_insert(const DomainName& name);
  void trie_erase(const RecordKey& key);

  static constexpr uint32_t kNoNode = 0xFFFFFFFFu;

  std::vector<Slot> slots_;
  std::vector<TrieNode> nodes_;  // nodes_[0] is the root
  std::vector<uint32_t> free_nodes_;
  std::vector<RecordAnswer> pool_;
  std::unordered_map<RecordAnswer, PoolIndex, AnswerHash> pool_lookup_;
  uint64_t version_ = 0;
  size_t live_count_ = 0;
  size_t popular_count_ = 0;

  friend std::vector<uint8_t> serialize_snapshot(const PopularityList&);
};

struct ResolvedRecord {
  RecordAnswer answer;
  TtlSeconds ttl;
};

/// Oracle answering (name, qtype) -> record, e.g. the upstream resolver.
/// Returning nullopt means the name cannot be resolved.
using CnameResolver =
    std::function<std::optional<ResolvedRecord>(const DomainName&, QType)>;

struct RankedRecord {
  RecordKey key;
  RecordAnswer answer;
  TtlSeconds ttl;
};

struct BuildIssue {
  enum class Reason { ChainTooLong, ChainCycle, Unresolvable };
  Reason reason = Reason::Unresolvable;
  RecordKey head;  // the popular record whose chain hit the issue
  DomainName at;   // the link where the chain was truncated
};

struct BuildResult {
  PopularityList list;
  std::vector<BuildIssue> issues;
};

/// Build a fresh list from records ranked by descending popularity: the first
/// n_popular become entries with order = rank, then every CNAME chain is
/// followed through `resolver` and each intermediate record not already
/// present is appended as a support entry (not counted against n_popular).
/// Chains longer than 8 links or cyclic are truncated and reported.
BuildResult build_list(std::span<const RankedRecord> ranked,
                       const CnameResolver& resolver, size_t n_popular);

/// Snapshot wire format "PLS1": header (magic, version u64le) followed by a
/// DEFLATE-compressed body holding the answer pool and a pre-order encoding
/// of the label trie in which each shared suffix label appears exactly once.
/// The bytes always describe the canonical form of the list.
std::vector<uint8_t> serialize_snapshot(const PopularityList& list);

/// Inverse of serialize_snapshot. parse(serialize(x)) == x.canonical().
PopularityList parse_snapshot(std::span<const uint8_t> data);

/// Order-insensitive content digest used for replica consistency checks:
/// hashes the canonical snapshot bytes.
uint64_t snapshot_digest(const PopularityList& list);

}  // namespace popdns
