#include "popdns/delta.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "popdns/errors.hpp"

namespace popdns {

RelRef RelRef::pool_relative(int64_t offset) {
  if (offset == 0)
    throw MalformedDelta("pool-relative offset must be nonzero");
  return RelRef{offset};
}

namespace {

[[noreturn]] void throw_not_live(uint32_t order) {
  throw DanglingReference("record order " + std::to_string(order) +
                          " is not a live entry");
}

std::string key_id(const RecordKey& key) {
  std::string s = present_domain(key.name);
  s.push_back('|');
  s.push_back(char('0' + int(key.qtype)));
  return s;
}

// How the list will look mid-batch, tracked as overlays over the base list so
// encoding a batch never copies the list itself.
struct VirtualList {
  const PopularityList& base;
  size_t pool_size;
  size_t order_count;
  std::vector<RecordAnswer> new_pool;
  std::unordered_map<RecordAnswer, PoolIndex, AnswerHash> new_pool_map;
  std::unordered_map<uint32_t, PoolIndex> changed_answers;
  struct Added {
    QType qtype;
    PoolIndex answer;
    std::string key;
  };
  std::unordered_map<uint32_t, Added> added;
  std::unordered_set<uint32_t> dead;
  std::unordered_map<std::string, bool> key_live;

  explicit VirtualList(const PopularityList& b)
      : base(b), pool_size(b.pool_size()), order_count(b.order_count()) {}

  const RecordAnswer& pool_value(uint64_t index) const {
    if (index < base.pool_size()) return base.pool_at(PoolIndex(index));
    if (index < pool_size) return new_pool[index - base.pool_size()];
    throw MalformedDelta("pool reference " + std::to_string(index) +
                         " out of range");
  }

  std::optional<PoolIndex> find(const RecordAnswer& a) const {
    if (auto i = base.pool_find(a)) return i;
    if (auto it = new_pool_map.find(a); it != new_pool_map.end())
      return it->second;
    return std::nullopt;
  }

  PoolIndex intern(const RecordAnswer& a) {
    if (auto i = find(a)) return *i;
    auto idx = PoolIndex(pool_size++);
    new_pool.push_back(a);
    new_pool_map.emplace(a, idx);
    return idx;
  }

  bool entry_live(uint32_t order) const {
    if (dead.contains(order)) return false;
    return added.contains(order) || base.live(order);
  }

  QType qtype_of(uint32_t order) const {
    if (auto it = added.find(order); it != added.end()) return it->second.qtype;
    return base.entry_data(order).key.qtype;
  }

  PoolIndex answer_of(uint32_t order) const {
    if (auto it = changed_answers.find(order); it != changed_answers.end())
      return it->second;
    if (auto it = added.find(order); it != added.end()) return it->second.answer;
    return base.entry_data(order).answer;
  }

  std::string key_of(uint32_t order) const {
    if (auto it = added.find(order); it != added.end()) return it->second.key;
    return key_id(base.entry_data(order).key);
  }

  bool key_is_live(const RecordKey& k) const {
    if (auto it = key_live.find(key_id(k)); it != key_live.end())
      return it->second;
    return base.find_order(k).has_value();
  }
};

void write_key(ByteWriter& w, const RecordKey& key) {
  const auto& labels = key.name.labels();
  w.varint(labels.size());
  for (const auto& label : labels) {
    w.varint(label.size());
    w.raw(std::string_view(label));
  }
  w.u8(static_cast<uint8_t>(key.qtype));
}

RecordKey read_key(ByteReader& r) {
  uint64_t count = r.varint();
  if (count > r.remaining()) throw MalformedDelta("label count");
  std::vector<std::string> labels;
  labels.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    uint64_t len = r.varint();
    if (len == 0 || len > 63) throw MalformedDelta("label length");
    auto b = r.raw(len);
    labels.emplace_back(reinterpret_cast<const char*>(b.data()), b.size());
  }
  uint8_t qt = r.u8();
  if (qt < 1 || qt > 3) throw MalformedDelta("qtype");
  try {
    return RecordKey{DomainName::from_labels(std::move(labels)), QType(qt)};
  } catch (const NameError& e) {
    throw MalformedDelta(e.what());
  }
}

RecordAnswer read_answer_checked(ByteReader& r) {
  try {
    return read_answer(r);
  } catch (const MalformedSnapshot& e) {
    throw MalformedDelta(e.what());
  }
}

uint32_t read_order(ByteReader& r) {
  uint64_t v = r.varint();
  if (v > 0xFFFFFFFFu) throw MalformedDelta("record order");
  return uint32_t(v);
}

TtlSeconds read_ttl(ByteReader& r) {
  uint64_t v = r.varint();
  if (v == 0 || v > 0xFFFFFFFFu) throw MalformedDelta("ttl");
  return TtlSeconds{uint32_t(v)};
}

}  // namespace

std::vector<uint8_t> encode_batch(const PopularityList& list_before,
                                  const UpdateBatch& batch,
                                  bool force_literal) {
  if (batch.from_version != list_before.version())
    throw VersionGap(batch.from_version, list_before.version());
  if (batch.to_version != batch.from_version + 1)
    throw MalformedDelta("to_version must be from_version + 1");

  VirtualList v(list_before);
  ByteWriter body;
  body.varint(batch.deltas.size());
  for (const Delta& delta : batch.deltas) {
    body.u8(uint8_t(delta.index()));
    switch (delta.index()) {
      case 0: {
        const auto& d = std::get<AnswerChange>(delta);
        if (!v.entry_live(d.record_order)) throw_not_live(d.record_order);
        QType qt = v.qtype_of(d.record_order);
        PoolIndex cur = v.answer_of(d.record_order);
        int64_t offset = 0;
        RecordAnswer value;
        if (d.answer_ref.is_literal()) {
          value = d.answer_ref.answer();
          if (auto idx = v.find(value); idx && !force_literal) {
            if (*idx == cur)
              throw MalformedDelta("answer change to the current answer");
            offset = int64_t(*idx) - int64_t(cur);
          }
        } else {
          offset = d.answer_ref.offset();
          if (offset == 0)
            throw MalformedDelta("pool-relative offset must be nonzero");
          int64_t target = int64_t(cur) + offset;
          if (target < 0 || uint64_t(target) >= v.pool_size)
            throw MalformedDelta("pool reference out of range");
          value = v.pool_value(uint64_t(target));
          if (force_literal) offset = 0;
        }
        if (!answer_compatible(qt, value))
          throw MalformedDelta("answer type incompatible with entry");
        body.varint(d.record_order);
        if (offset == 0) {
          body.varint(0);
          write_answer(body, value);
          v.changed_answers[d.record_order] = v.intern(value);
        } else {
          body.zigzag(offset);
          v.changed_answers[d.record_order] = PoolIndex(int64_t(cur) + offset);
        }
        break;
      }
      case 1: {
        const auto& d = std::get<RecordAdd>(delta);
        if (v.key_is_live(d.key))
          throw MalformedDelta("duplicate add " + present_domain(d.key.name));
        PoolIndex idx = 0;
        bool pooled;
        RecordAnswer value;
        if (d.answer.index() == 0) {
          idx = std::get<PoolIndex>(d.answer);
          if (idx >= v.pool_size)
            throw MalformedDelta("pool reference out of range");
          value = v.pool_value(idx);
          pooled = true;
        } else {
          value = std::get<RecordAnswer>(d.answer);
          if (auto found = v.find(value)) {
            idx = *found;
            pooled = true;
          } else {
            pooled = false;
          }
        }
        if (!answer_compatible(d.key.qtype, value))
          throw MalformedDelta("answer type incompatible with entry");
        if (force_literal) pooled = false;
        write_key(body, d.key);
        if (pooled) {
          body.u8(1);
          body.varint(idx);
        } else {
          body.u8(0);
          write_answer(body, value);
          idx = v.intern(value);
        }
        body.varint(d.ttl.value);
        body.u8(d.is_cname_support ? 1 : 0);
        auto order = uint32_t(v.order_count++);
        std::string id = key_id(d.key);
        v.added.emplace(order, VirtualList::Added{d.key.qtype, idx, id});
        v.key_live[id] = true;
        break;
      }
      case 2: {
        const auto& d = std::get<RecordRemove>(delta);
        if (!v.entry_live(d.record_order)) throw_not_live(d.record_order);
        v.key_live[v.key_of(d.record_order)] = false;
        v.dead.insert(d.record_order);
        body.varint(d.record_order);
        break;
      }
      case 3: {
        const auto& d = std::get<TtlChange>(delta);
        if (!v.entry_live(d.record_order)) throw_not_live(d.record_order);
        body.varint(d.record_order);
        body.varint(d.ttl.value);
        break;
      }
    }
  }

  ByteWriter out;
  out.raw(std::string_view("PLU1"));
  out.u64le(batch.from_version);
  out.u64le(batch.to_version);
  out.raw(std::span<const uint8_t>(deflate_bytes(body.bytes())));
  return out.take();
}

UpdateBatch decode_batch(std::span<const uint8_t> data) {
  ByteReader header(data);
  auto magic = header.raw(4);
  if (!std::equal(magic.begin(), magic.end(),
                  reinterpret_cast<const uint8_t*>("PLU1")))
    throw BadMagic("update batch");
  UpdateBatch batch;
  batch.from_version = header.u64le();
  batch.to_version = header.u64le();
  if (batch.to_version != batch.from_version + 1)
    throw MalformedDelta("to_version must be from_version + 1");
  auto body = inflate_bytes(header.raw(header.remaining()));
  ByteReader r(body);
  uint64_t count = r.varint();
  if (count > body.size()) throw MalformedDelta("delta count");
  batch.deltas.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    uint8_t tag = r.u8();
    switch (tag) {
      case 0: {
        AnswerChange d;
        d.record_order = read_order(r);
        int64_t offset = r.zigzag();
        if (offset == 0)
          d.answer_ref = RelRef::literal(read_answer_checked(r));
        else
          d.answer_ref = RelRef::pool_relative(offset);
        batch.deltas.emplace_back(std::move(d));
        break;
      }
      case 1: {
        RecordAdd d;
        d.key = read_key(r);
        uint8_t flag = r.u8();
        if (flag == 1) {
          uint64_t idx = r.varint();
          if (idx > 0xFFFFFFFFu) throw MalformedDelta("pool index");
          d.answer = PoolIndex(idx);
        } else if (flag == 0) {
          d.answer = read_answer_checked(r);
        } else {
          throw MalformedDelta("answer flag");
        }
        d.ttl = read_ttl(r);
        uint8_t flags = r.u8();
        if (flags > 1) throw MalformedDelta("flags");
        d.is_cname_support = flags & 1;
        batch.deltas.emplace_back(std::move(d));
        break;
      }
      case 2:
        batch.deltas.emplace_back(RecordRemove{read_order(r)});
        break;
      case 3: {
        TtlChange d;
        d.record_order = read_order(r);
        d.ttl = read_ttl(r);
        batch.deltas.emplace_back(d);
        break;
      }
      default:
        throw MalformedDelta("unknown delta tag");
    }
  }
  if (!r.done()) throw MalformedDelta("trailing bytes");
  return batch;
}

void apply_batch_inplace(PopularityList& list, const UpdateBatch& batch) {
  if (batch.from_version != list.version())
    throw VersionGap(batch.from_version, list.version());
  if (batch.to_version != batch.from_version + 1)
    throw MalformedDelta("to_version must be from_version + 1");
  for (const Delta& delta : batch.deltas) {
    switch (delta.index()) {
      case 0: {
        const auto& d = std::get<AnswerChange>(delta);
        if (!list.live(d.record_order)) throw_not_live(d.record_order);
        const ListEntry& e = list.entry_data(d.record_order);
        PoolIndex target;
        if (d.answer_ref.is_literal()) {
          target = list.pool_intern(d.answer_ref.answer());
        } else {
          int64_t t = int64_t(e.answer) + d.answer_ref.offset();
          if (t < 0 || uint64_t(t) >= list.pool_size())
            throw MalformedDelta("pool reference out of range");
          target = PoolIndex(t);
        }
        if (!answer_compatible(e.key.qtype, list.pool_at(target)))
          throw MalformedDelta("answer type incompatible with entry");
        list.set_answer(d.record_order, target);
        break;
      }
      case 1: {
        const auto& d = std::get<RecordAdd>(delta);
        if (list.find_order(d.key))
          throw MalformedDelta("duplicate add " + present_domain(d.key.name));
        PoolIndex idx;
        if (d.answer.index() == 0) {
          idx = std::get<PoolIndex>(d.answer);
          if (idx >= list.pool_size())
            throw MalformedDelta("pool reference out of range");
        } else {
          idx = list.pool_intern(std::get<RecordAnswer>(d.answer));
        }
        if (!answer_compatible(d.key.qtype, list.pool_at(idx)))
          throw MalformedDelta("answer type incompatible with entry");
        list.add_entry(d.key, idx, d.ttl, d.is_cname_support);
        break;
      }
      case 2:
        list.remove_entry(std::get<RecordRemove>(delta).record_order);
        break;
      case 3: {
        const auto& d = std::get<TtlChange>(delta);
        list.set_ttl(d.record_order, d.ttl);
        break;
      }
    }
  }
  list.set_version(batch.to_version);
}

void apply_batch_inplace(PopularityList& list, std::span<const uint8_t> data) {
  apply_batch_inplace(list, decode_batch(data));
}

PopularityList apply_batch(const PopularityList& list,
                           std::span<const uint8_t> data) {
  PopularityList out = list;
  apply_batch_inplace(out, data);
  return out;
}

UpdateBatch diff_states(const PopularityList& before,
                        const PopularityList& after) {
  if (after.order_count() < before.order_count())
    throw Error("diff precondition: order slots disappeared");
  UpdateBatch batch;
  batch.from_version = before.version();
  batch.to_version = before.version() + 1;
  for (uint32_t order = 0; order < before.order_count(); ++order) {
    bool b_live = before.live(order);
    bool a_live = after.live(order);
    if (!b_live && !a_live) continue;
    if (!b_live)
      throw Error("diff precondition: tombstone revived at order " +
                  std::to_string(order));
    if (!a_live) {
      batch.deltas.emplace_back(RecordRemove{order});
      continue;
    }
    const ListEntry& b = before.entry_data(order);
    const ListEntry& a = after.entry_data(order);
    const RecordAnswer& b_answer = before.pool_at(b.answer);
    const RecordAnswer& a_answer = after.pool_at(a.answer);
    if (b_answer != a_answer || b.ttl != a.ttl) {
      if (b.key != a.key || b.is_cname_support != a.is_cname_support)
        throw Error("diff precondition: entry identity changed at order " +
                    std::to_string(order));
      if (b_answer != a_answer)
        batch.deltas.emplace_back(
            AnswerChange{order, RelRef::literal(a_answer)});
      if (b.ttl != a.ttl) batch.deltas.emplace_back(TtlChange{order, a.ttl});
    }
  }
  for (uint32_t order = uint32_t(before.order_count());
       order < after.order_count(); ++order) {
    const ListEntry& a = after.entry_data(order);
    batch.deltas.emplace_back(RecordAdd{
        a.key, after.pool_at(a.answer), a.ttl, a.is_cname_support});
    // a slot created and dropped between the two states still has to burn
    // its order so later references keep lining up
    if (!after.live(order)) batch.deltas.emplace_back(RecordRemove{order});
  }
  return batch;
}

std::optional<UpdateBatch> UpdateScheduler::flush(uint64_t now,
                                                  uint64_t from_version) {
  next_flush_ = now + ttl_min_.value;
  if (pending_.empty()) return std::nullopt;
  UpdateBatch batch{from_version, from_version + 1, std::move(pending_)};
  pending_.clear();
  return batch;
}

uint64_t schedule_requery(const UpdateScheduler& scheduler,
                          const ListEntry& record, uint64_t now) {
  return now + std::max(record.ttl.value, scheduler.ttl_min().value);
}

double measure_bandwidth(std::span<const size_t> batch_sizes,
                         double window_seconds) {
  if (window_seconds <= 0) throw ConfigError("window must be positive");
  size_t total = 0;
  for (size_t s : batch_sizes) total += s;
  return double(total) * 3600.0 / window_seconds;
}

double measure_bandwidth(std::span<const std::vector<uint8_t>> batches,
                         double window_seconds) {
  std::vector<size_t> sizes;
  sizes.reserve(batches.size());
  for (const auto& b : batches) sizes.push_back(b.size());
  return measure_bandwidth(std::span<const size_t>(sizes), window_seconds);
}

}  // namespace popdns
