#include "popdns/poplist.hpp"

#include <algorithm>

#include "popdns/errors.hpp"
#include "popdns/rng.hpp"

namespace popdns {

namespace {

constexpr size_t kMaxChain = 8;
constexpr uint32_t kNoIndex = 0xFFFFFFFFu;

[[noreturn]] void throw_pool_index(uint64_t index, size_t size) {
  throw DanglingPoolIndex("pool index " + std::to_string(index) +
                          " out of range (pool size " + std::to_string(size) +
                          ")");
}

}  // namespace

PopularityList::PopularityList() { nodes_.resize(1); }

const RecordAnswer& PopularityList::pool_at(PoolIndex i) const {
  if (i >= pool_.size()) throw_pool_index(i, pool_.size());
  return pool_[i];
}

bool PopularityList::live(uint32_t order) const {
  return order < slots_.size() && slots_[order].live;
}

const ListEntry& PopularityList::entry_data(uint32_t order) const {
  if (order >= slots_.size())
    throw DanglingReference("record order " + std::to_string(order) +
                            " was never assigned");
  return slots_[order].entry;
}

uint32_t PopularityList::trie_walk(const DomainName& name) const {
  uint32_t node = 0;
  for (const auto& label : name.labels()) {
    auto it = nodes_[node].children.find(label);
    if (it == nodes_[node].children.end()) return kNoNode;
    node = it->second;
  }
  return node;
}

uint32_t PopularityList::trie_insert(const DomainName& name) {
  uint32_t node = 0;
  for (const auto& label : name.labels()) {
    auto it = nodes_[node].children.find(label);
    if (it != nodes_[node].children.end()) {
      node = it->second;
      continue;
    }
    uint32_t fresh;
    if (!free_nodes_.empty()) {
      fresh = free_nodes_.back();
      free_nodes_.pop_back();
      nodes_[fresh] = TrieNode{};
    } else {
      fresh = static_cast<uint32_t>(nodes_.size());
      nodes_.emplace_back();
    }
    nodes_[node].children.emplace(label, fresh);
    node = fresh;
  }
  return node;
}

void PopularityList::trie_erase(const RecordKey& key) {
  // Walk down remembering the path so empty nodes can be pruned on the way up.
  std::vector<uint32_t> path{0};
  for (const auto& label : key.name.labels()) {
    auto it = nodes_[path.back()].children.find(label);
    if (it == nodes_[path.back()].children.end()) return;
    path.push_back(it->second);
  }
  auto& entries = nodes_[path.back()].entries;
  std::erase_if(entries, [&](const auto& e) { return e.first == key.qtype; });
  for (size_t i = path.size() - 1; i > 0; --i) {
    TrieNode& n = nodes_[path[i]];
    if (!n.entries.empty() || !n.children.empty()) break;
    nodes_[path[i - 1]].children.erase(key.name.labels()[i - 1]);
    free_nodes_.push_back(path[i]);
  }
}

std::optional<uint32_t> PopularityList::find_order(const RecordKey& key) const {
  uint32_t node = trie_walk(key.name);
  if (node == kNoNode) return std::nullopt;
  for (const auto& [qt, order] : nodes_[node].entries)
    if (qt == key.qtype) return order;
  return std::nullopt;
}

LookupResult PopularityList::lookup(const RecordKey& key) const {
  LookupResult result;
  RecordKey cur = key;
  for (size_t step = 0; step < kMaxChain; ++step) {
    auto order = find_order(cur);
    if (!order) return {};
    const ListEntry& entry = slots_[*order].entry;
    const RecordAnswer& answer = pool_[entry.answer];
    // A repeated name means a CNAME cycle; bail out as a miss.
    for (const auto& [k, a] : result.chain)
      if (k.name == cur.name) return {};
    result.chain.emplace_back(cur, answer);
    if (answer.tag() == cur.qtype) return result;
    if (!answer.is_cname()) return {};
    cur = RecordKey{answer.target(), key.qtype};
  }
  return {};
}

PoolIndex PopularityList::pool_intern(const RecordAnswer& answer) {
  auto it = pool_lookup_.find(answer);
  if (it != pool_lookup_.end()) return it->second;
  auto index = static_cast<PoolIndex>(pool_.size());
  pool_.push_back(answer);
  pool_lookup_.emplace(answer, index);
  return index;
}

std::optional<PoolIndex> PopularityList::pool_find(
    const RecordAnswer& answer) const {
  auto it = pool_lookup_.find(answer);
  if (it == pool_lookup_.end()) return std::nullopt;
  return it->second;
}

uint32_t PopularityList::add_entry(const RecordKey& key, PoolIndex answer,
                                   TtlSeconds ttl, bool is_cname_support) {
  if (answer >= pool_.size()) throw_pool_index(answer, pool_.size());
  if (!answer_compatible(key.qtype, pool_[answer]))
    throw Error("answer type incompatible with " +
                std::string(qtype_name(key.qtype)) + " entry " +
                present_domain(key.name));
  if (find_order(key))
    throw Error("duplicate entry " + present_domain(key.name));
  auto order = static_cast<uint32_t>(slots_.size());
  slots_.push_back(
      Slot{ListEntry{key, answer, ttl, order, is_cname_support}, true});
  uint32_t node = trie_insert(key.name);
  auto& entries = nodes_[node].entries;
  auto pos = std::find_if(entries.begin(), entries.end(),
                          [&](const auto& e) { return e.first > key.qtype; });
  entries.emplace(pos, key.qtype, order);
  ++live_count_;
  if (!is_cname_support) ++popular_count_;
  return order;
}

void PopularityList::remove_entry(uint32_t order) {
  if (!live(order))
    throw DanglingReference("record order " + std::to_string(order) +
                            " is not a live entry");
  Slot& slot = slots_[order];
  trie_erase(slot.entry.key);
  slot.live = false;
  --live_count_;
  if (!slot.entry.is_cname_support) --popular_count_;
}

void PopularityList::set_answer(uint32_t order, PoolIndex answer) {
  if (!live(order))
    throw DanglingReference("record order " + std::to_string(order) +
                            " is not a live entry");
  if (answer >= pool_.size()) throw_pool_index(answer, pool_.size());
  ListEntry& entry = slots_[order].entry;
  if (!answer_compatible(entry.key.qtype, pool_[answer]))
    throw Error("answer type incompatible with " +
                std::string(qtype_name(entry.key.qtype)) + " entry " +
                present_domain(entry.key.name));
  entry.answer = answer;
}

void PopularityList::set_ttl(uint32_t order, TtlSeconds ttl) {
  if (!live(order))
    throw DanglingReference("record order " + std::to_string(order) +
                            " is not a live entry");
  slots_[order].entry.ttl = ttl;
}

void PopularityList::compact_pool() {
  std::vector<RecordAnswer> pool;
  std::unordered_map<RecordAnswer, PoolIndex, AnswerHash> lookup;
  lookup.reserve(slots_.size());
  for (Slot& slot : slots_) {
    const RecordAnswer& a = pool_[slot.entry.answer];
    auto [it, fresh] = lookup.try_emplace(a, PoolIndex(pool.size()));
    if (fresh) pool.push_back(a);
    slot.entry.answer = it->second;
  }
  pool_ = std::move(pool);
  pool_lookup_ = std::move(lookup);
}

PopularityList PopularityList::canonical() const {
  PopularityList out;
  out.version_ = version_;
  auto walk = [&](auto&& self, uint32_t node) -> void {
    for (const auto& [qt, order] : nodes_[node].entries) {
      const ListEntry& e = slots_[order].entry;
      out.add_entry(e.key, out.pool_intern(pool_[e.answer]), e.ttl,
                    e.is_cname_support);
    }
    for (const auto& [label, child] : nodes_[node].children) self(self, child);
  };
  walk(walk, 0);
  return out;
}

bool PopularityList::operator==(const PopularityList& o) const {
  return version_ == o.version_ && slots_ == o.slots_ && pool_ == o.pool_;
}

BuildResult build_list(std::span<const RankedRecord> ranked,
                       const CnameResolver& resolver, size_t n_popular) {
  BuildResult result;
  PopularityList& list = result.list;
  size_t take = std::min(n_popular, ranked.size());
  for (size_t i = 0; i < take; ++i) {
    const RankedRecord& r = ranked[i];
    if (list.find_order(r.key))
      throw Error("ranked input repeats key " + present_domain(r.key.name));
    if (!answer_compatible(r.key.qtype, r.answer))
      throw Error("ranked answer incompatible with " +
                  present_domain(r.key.name));
    list.add_entry(r.key, list.pool_intern(r.answer), r.ttl, false);
  }
  // Chains are walked in rank order after all popular entries so that every
  // support entry sorts behind the voted-on records.
  for (size_t i = 0; i < take; ++i) {
    const RankedRecord& r = ranked[i];
    if (!r.answer.is_cname() || r.key.qtype == QType::CNAME) continue;
    std::vector<DomainName> seen{r.key.name};
    DomainName target = r.answer.target();
    size_t links = 1;
    while (true) {
      if (std::find(seen.begin(), seen.end(), target) != seen.end()) {
        result.issues.push_back(
            {BuildIssue::Reason::ChainCycle, r.key, target});
        break;
      }
      if (list.find_order(RecordKey{target, r.key.qtype}))
        break;  // chain continues within the list

      if (links + 1 > kMaxChain) {
        result.issues.push_back(
            {BuildIssue::Reason::ChainTooLong, r.key, target});
        break;
      }
      auto resolved = resolver(target, r.key.qtype);
      if (!resolved || !answer_compatible(r.key.qtype, resolved->answer)) {
        result.issues.push_back(
            {BuildIssue::Reason::Unresolvable, r.key, target});
        break;
      }
      list.add_entry(RecordKey{target, r.key.qtype},
                     list.pool_intern(resolved->answer), resolved->ttl, true);
      ++links;
      seen.push_back(target);
      if (!resolved->answer.is_cname()) break;
      target = resolved->answer.target();
    }
  }
  return result;
}

void write_answer(ByteWriter& w, const RecordAnswer& answer) {
  w.u8(static_cast<uint8_t>(answer.tag()));
  switch (answer.tag()) {
    case QType::A:
      w.raw(std::span<const uint8_t>(answer.ipv4()));
      break;
    case QType::AAAA:
      w.raw(std::span<const uint8_t>(answer.ipv6()));
      break;
    case QType::CNAME: {
      const auto& labels = answer.target().labels();
      w.varint(labels.size());
      for (const auto& label : labels) {
        w.varint(label.size());
        w.raw(std::string_view(label));
      }
      break;
    }
  }
}

RecordAnswer read_answer(ByteReader& r) {
  uint8_t tag = r.u8();
  switch (static_cast<QType>(tag)) {
    case QType::A: {
      auto b = r.raw(4);
      return RecordAnswer::a({b[0], b[1], b[2], b[3]});
    }
    case QType::AAAA: {
      auto b = r.raw(16);
      Ipv6 v6;
      std::copy(b.begin(), b.end(), v6.begin());
      return RecordAnswer::aaaa(v6);
    }
    case QType::CNAME: {
      uint64_t count = r.varint();
      if (count > r.remaining()) throw MalformedSnapshot("label count");
      std::vector<std::string> labels;
      labels.reserve(count);
      for (uint64_t i = 0; i < count; ++i) {
        uint64_t len = r.varint();
        if (len == 0 || len > 63) throw MalformedSnapshot("label length");
        auto b = r.raw(len);
        labels.emplace_back(reinterpret_cast<const char*>(b.data()), b.size());
      }
      try {
        return RecordAnswer::cname(DomainName::from_labels(std::move(labels)));
      } catch (const NameError&) {
        throw MalformedSnapshot("invalid target name");
      }
    }
    default:
      throw MalformedSnapshot("unknown answer tag");
  }
}

std::vector<uint8_t> serialize_snapshot(const PopularityList& list) {
  // First pass: renumber the pool by first reference in pre-order so the
  // bytes are canonical no matter what coordinates the list evolved under.
  std::vector<PoolIndex> remap(list.pool_.size(), kNoIndex);
  std::vector<PoolIndex> emit_order;
  auto collect = [&](auto&& self, uint32_t node) -> void {
    for (const auto& [qt, order] : list.nodes_[node].entries) {
      PoolIndex a = list.slots_[order].entry.answer;
      if (remap[a] == kNoIndex) {
        remap[a] = static_cast<PoolIndex>(emit_order.size());
        emit_order.push_back(a);
      }
    }
    for (const auto& [label, child] : list.nodes_[node].children)
      self(self, child);
  };
  collect(collect, 0);

  ByteWriter body;
  body.varint(emit_order.size());
  for (PoolIndex old : emit_order) write_answer(body, list.pool_[old]);
  auto tree = [&](auto&& self, uint32_t node, std::string_view label) -> void {
    body.varint(label.size());
    body.raw(label);
    const auto& n = list.nodes_[node];
    body.varint(n.entries.size());
    for (const auto& [qt, order] : n.entries) {
      const ListEntry& e = list.slots_[order].entry;
      body.u8(static_cast<uint8_t>(qt));
      body.varint(remap[e.answer]);
      body.varint(e.ttl.value);
      body.u8(e.is_cname_support ? 1 : 0);
    }
    body.varint(n.children.size());
    for (const auto& [child_label, child] : n.children)
      self(self, child, child_label);
  };
  tree(tree, 0, {});

  ByteWriter out;
  out.raw(std::string_view("PLS1"));
  out.u64le(list.version());
  out.raw(std::span<const uint8_t>(deflate_bytes(body.bytes())));
  return out.take();
}

namespace {

// Reads one pre-order node, returning its label so the caller can check
// sibling ordering. Orders are implicit: add_entry numbers sequentially.
std::string parse_node(ByteReader& r, PopularityList& list,
                       std::vector<std::string>& stack, int depth) {
  if (depth > 128) throw MalformedSnapshot("trie too deep");
  uint64_t label_len = r.varint();
  if (depth == 0 ? label_len != 0 : (label_len == 0 || label_len > 63))
    throw MalformedSnapshot("label length");
  auto label_bytes = r.raw(label_len);
  std::string label(reinterpret_cast<const char*>(label_bytes.data()),
                    label_bytes.size());
  if (depth > 0) stack.push_back(label);

  uint64_t entry_count = r.varint();
  if (entry_count > 3) throw MalformedSnapshot("entry count");
  uint8_t last_qtype = 0;
  for (uint64_t i = 0; i < entry_count; ++i) {
    uint8_t qt = r.u8();
    if (qt < 1 || qt > 3 || qt <= last_qtype)
      throw MalformedSnapshot("entry qtype order");
    last_qtype = qt;
    uint64_t pool_index = r.varint();
    if (pool_index >= list.pool_size())
      throw_pool_index(pool_index, list.pool_size());
    uint64_t ttl = r.varint();
    if (ttl == 0 || ttl > 0xFFFFFFFFu) throw MalformedSnapshot("ttl");
    uint8_t flags = r.u8();
    if (flags > 1) throw MalformedSnapshot("flags");
    DomainName name;
    try {
      name = DomainName::from_labels(stack);
    } catch (const NameError&) {
      throw MalformedSnapshot("invalid entry name");
    }
    RecordKey key{std::move(name), static_cast<QType>(qt)};
    if (!answer_compatible(key.qtype,
                           list.pool_at(static_cast<PoolIndex>(pool_index))))
      throw MalformedSnapshot("entry answer type");
    list.add_entry(key, static_cast<PoolIndex>(pool_index),
                   TtlSeconds{static_cast<uint32_t>(ttl)}, flags & 1);
  }

  uint64_t child_count = r.varint();
  if (child_count > r.remaining()) throw MalformedSnapshot("child count");
  std::string prev;
  for (uint64_t i = 0; i < child_count; ++i) {
    std::string child = parse_node(r, list, stack, depth + 1);
    if (i > 0 && child <= prev) throw MalformedSnapshot("sibling order");
    prev = std::move(child);
  }
  if (depth > 0) stack.pop_back();
  return label;
}

}  // namespace

PopularityList parse_snapshot(std::span<const uint8_t> data) {
  ByteReader header(data);
  auto magic = header.raw(4);
  if (!std::equal(magic.begin(), magic.end(),
                  reinterpret_cast<const uint8_t*>("PLS1")))
    throw BadMagic("snapshot");
  uint64_t version = header.u64le();
  auto body_bytes = inflate_bytes(header.raw(header.remaining()));
  ByteReader r(body_bytes);

  PopularityList list;
  list.set_version(version);
  uint64_t pool_count = r.varint();
  if (pool_count > r.remaining()) throw MalformedSnapshot("pool count");
  for (uint64_t i = 0; i < pool_count; ++i) {
    RecordAnswer answer = read_answer(r);
    if (list.pool_find(answer)) throw MalformedSnapshot("duplicate pool entry");
    list.pool_intern(answer);
  }
  std::vector<std::string> stack;
  parse_node(r, list, stack, 0);
  if (!r.done()) throw MalformedSnapshot("trailing bytes");
  return list;
}

uint64_t snapshot_digest(const PopularityList& list) {
  auto bytes = serialize_snapshot(list);
  return hash_str(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                   bytes.size()));
}

}  // namespace popdns
