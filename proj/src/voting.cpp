#include "popdns/voting.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "popdns/errors.hpp"

namespace popdns {

namespace {

constexpr size_t kMaxChain = 8;

std::string key_id(const RecordKey& key) {
  std::string s = present_domain(key.name);
  s.push_back('|');
  s.push_back(char('0' + int(key.qtype)));
  return s;
}

// Pointer-keyed lookup over keys whose owners outlive the refresh; hashing
// the labels in place avoids materializing an id string per probe.
struct KeyPtrHash {
  size_t operator()(const RecordKey* key) const {
    size_t h = 14695981039346656037ull;
    for (const std::string& label : key->name.labels()) {
      for (char c : label) h = (h ^ size_t(uint8_t(c))) * 1099511628211ull;
      h = (h ^ 0xffu) * 1099511628211ull;
    }
    return (h ^ size_t(key->qtype)) * 1099511628211ull;
  }
};
struct KeyPtrEq {
  bool operator()(const RecordKey* a, const RecordKey* b) const {
    return *a == *b;
  }
};

}  // namespace

Ballot generate_ballot(std::span<const RecordKey> history,
                       const RoundConfig& config, Rng& rng) {
  Ballot ballot;
  std::unordered_set<std::string> chosen;
  for (const RecordKey& key : history) {
    // every query gets its own draw so selection frequency is exactly p_vote
    if (!rng.bernoulli(config.p_vote)) continue;
    if (ballot.votes.size() >= config.v_max) continue;
    if (!chosen.insert(key_id(key)).second) continue;
    ballot.votes.push_back(Vote{key});
  }
  return ballot;
}

TallyResult tally(std::span<const Ballot> ballots, const RoundConfig& config) {
  TallyResult result;
  for (const Ballot& ballot : ballots) {
    if (ballot.votes.size() > config.v_max) {
      ++result.rejected_ballots;
      continue;
    }
    std::set<RecordKey> unique;
    for (const Vote& vote : ballot.votes) unique.insert(vote.key);
    if (unique.size() != ballot.votes.size()) {
      ++result.rejected_ballots;  // duplicate keys double-count: reject whole
      continue;
    }
    for (const RecordKey& key : unique) ++result.counts[key];
  }
  return result;
}

WeightTable update_weights(const WeightTable& table,
                           const std::map<RecordKey, uint32_t>& counts,
                           const RoundConfig& config) {
  WeightTable next;
  next.round_index = table.round_index + 1;
  // both maps share the key order, so one merge walk finds every count
  auto cit = counts.begin();
  for (const auto& [key, w_prev] : table.weights) {
    while (cit != counts.end() && cit->first < key) ++cit;
    bool counted = cit != counts.end() && !(key < cit->first);
    double n = counted ? double(cit->second) : 0.0;
    double w = config.alpha * n + (1.0 - config.alpha) * w_prev;
    if (w >= kEpsilonDrop) next.weights.emplace_hint(next.weights.end(), key, w);
  }
  for (const auto& [key, n] : counts) {
    if (table.weights.contains(key)) continue;
    double w = config.alpha * double(n);  // w_{m-1} = 0 bootstrap
    if (w >= kEpsilonDrop) next.weights.emplace(key, w);
  }
  return next;
}

WeightTable update_weights(WeightTable&& table,
                           const std::map<RecordKey, uint32_t>& counts,
                           const RoundConfig& config) {
  WeightTable next = std::move(table);
  ++next.round_index;
  auto cit = counts.begin();
  for (auto it = next.weights.begin(); it != next.weights.end();) {
    while (cit != counts.end() && cit->first < it->first) ++cit;
    bool counted = cit != counts.end() && !(it->first < cit->first);
    double n = counted ? double(cit->second) : 0.0;
    double w = config.alpha * n + (1.0 - config.alpha) * it->second;
    if (w >= kEpsilonDrop) {
      it->second = w;
      ++it;
    } else {
      it = next.weights.erase(it);
    }
  }
  // keys erased above had no count, so try_emplace cannot resurrect them
  for (const auto& [key, n] : counts) {
    double w = config.alpha * double(n);
    if (w >= kEpsilonDrop) next.weights.try_emplace(key, w);
  }
  return next;
}

WeightTable bootstrap_weights(std::span<const RecordKey> day_one,
                              const RoundConfig& config) {
  std::map<RecordKey, uint32_t> counts;
  for (const RecordKey& key : day_one) ++counts[key];
  WeightTable table;
  for (const auto& [key, n] : counts)
    table.weights.emplace(key, config.alpha * double(n));
  return table;
}

UpdateBatch plan_refresh(const WeightTable& table,
                         const PopularityList& current,
                         const CnameResolver& resolver,
                         const RoundConfig& config) {
  // Candidates by descending weight; ties by name then qtype (map order,
  // preserved through the index tiebreak, which also makes the order total:
  // any sorted prefix is the same however the elements reached it).
  std::vector<std::pair<double, uint32_t>> ranked;
  std::vector<const RecordKey*> keys;
  ranked.reserve(table.weights.size());
  keys.reserve(table.weights.size());
  for (const auto& [key, w] : table.weights) {
    ranked.emplace_back(w, uint32_t(keys.size()));
    keys.push_back(&key);
  }
  auto before = [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  // Only the consumed prefix needs sorting: candidates past the filled
  // membership are never read. Sort a generous head and extend on demand.
  size_t sorted = config.n_popular + config.n_popular / 4 + 64;
  if (sorted < ranked.size()) {
    std::nth_element(ranked.begin(), ranked.begin() + ptrdiff_t(sorted),
                     ranked.end(), before);
    std::sort(ranked.begin(), ranked.begin() + ptrdiff_t(sorted), before);
  } else {
    sorted = ranked.size();
    std::sort(ranked.begin(), ranked.end(), before);
  }

  // One pass over the live entries replaces per-candidate trie walks.
  std::unordered_map<const RecordKey*, uint32_t, KeyPtrHash, KeyPtrEq> order_of;
  order_of.reserve(current.order_count());
  for (uint32_t order = 0; order < current.order_count(); ++order)
    if (current.live(order))
      order_of.emplace(&current.entry_data(order).key, order);

  // Picks alias the weight table, the current pool, or the resolved store;
  // all three outlive the planning, so nothing is copied until the batch.
  struct PickedRef {
    const RecordKey* key;
    const RecordAnswer* answer;
    TtlSeconds ttl;
    bool in_place;  // survives at its current order with the same flag
  };
  std::deque<RecordAnswer> resolved;
  std::vector<char> keep(current.order_count(), 0);

  // Answer lookup: surviving entries keep their current answer, new members
  // are resolved upstream; unresolvable candidates give their slot away.
  std::vector<PickedRef> members;
  members.reserve(config.n_popular);
  std::unordered_set<const RecordKey*, KeyPtrHash, KeyPtrEq> member_ids;
  for (size_t i = 0; i < ranked.size(); ++i) {
    if (members.size() >= config.n_popular) break;
    if (i == sorted) {
      std::sort(ranked.begin() + ptrdiff_t(sorted), ranked.end(), before);
      sorted = ranked.size();
    }
    const RecordKey& key = *keys[ranked[i].second];
    if (auto hit = order_of.find(&key); hit != order_of.end()) {
      const ListEntry& e = current.entry_data(hit->second);
      bool in_place = !e.is_cname_support;
      if (in_place) keep[hit->second] = 1;
      members.push_back({&key, &current.pool_at(e.answer), e.ttl, in_place});
    } else if (auto r = resolver(key.name, key.qtype);
               r && answer_compatible(key.qtype, r->answer)) {
      resolved.push_back(std::move(r->answer));
      members.push_back({&key, &resolved.back(), r->ttl, false});
    } else {
      continue;
    }
    member_ids.insert(&key);
  }

  // Recompute the CNAME support set against the next membership.
  // Chain keys are built here, so the deque owns them; its stable addresses
  // let support_ids point at them.
  struct SupportPick {
    RecordKey key;
    const RecordAnswer* answer;
    TtlSeconds ttl;
    bool in_place;
  };
  std::deque<SupportPick> supports;
  std::unordered_set<const RecordKey*, KeyPtrHash, KeyPtrEq> support_ids;
  for (const PickedRef& m : members) {
    if (!m.answer->is_cname() || m.key->qtype == QType::CNAME) continue;
    std::vector<DomainName> seen{m.key->name};
    DomainName target = m.answer->target();
    size_t links = 1;
    while (true) {
      if (std::find(seen.begin(), seen.end(), target) != seen.end()) break;
      RecordKey tkey{target, m.key->qtype};
      if (member_ids.contains(&tkey) || support_ids.contains(&tkey)) break;
      if (links + 1 > kMaxChain) break;
      const RecordAnswer* answer = nullptr;
      TtlSeconds ttl;
      bool in_place = false;
      if (auto hit = order_of.find(&tkey); hit != order_of.end()) {
        const ListEntry& e = current.entry_data(hit->second);
        answer = &current.pool_at(e.answer);
        ttl = e.ttl;
        in_place = e.is_cname_support;
        if (in_place) keep[hit->second] = 1;
      } else if (auto r = resolver(target, m.key->qtype);
                 r && answer_compatible(m.key->qtype, r->answer)) {
        resolved.push_back(std::move(r->answer));
        answer = &resolved.back();
        ttl = r->ttl;
      } else {
        break;
      }
      supports.push_back({std::move(tkey), answer, ttl, in_place});
      support_ids.insert(&supports.back().key);
      ++links;
      seen.push_back(target);
      if (!answer->is_cname()) break;
      target = answer->target();
    }
  }

  // Entries whose key and flag survive keep their aligned orders; the rest
  // tombstone and what is new or flag-flipped appends. Survivors keep answer
  // and ttl untouched, so these removes and adds ARE the whole state diff.
  UpdateBatch batch;
  batch.from_version = current.version();
  batch.to_version = current.version() + 1;
  for (uint32_t order = 0; order < current.order_count(); ++order)
    if (current.live(order) && !keep[order])
      batch.deltas.emplace_back(RecordRemove{order});
  for (const PickedRef& m : members)
    if (!m.in_place)
      batch.deltas.emplace_back(RecordAdd{*m.key, *m.answer, m.ttl, false});
  for (const SupportPick& s : supports)
    if (!s.in_place)
      batch.deltas.emplace_back(RecordAdd{s.key, *s.answer, s.ttl, true});
  return batch;
}

RefreshResult refresh_list(const WeightTable& table,
                           const PopularityList& current,
                           const CnameResolver& resolver,
                           const RoundConfig& config) {
  RefreshResult result;
  result.batch = plan_refresh(table, current, resolver, config);
  result.list = current;
  apply_batch_inplace(result.list, result.batch);
  return result;
}

}  // namespace popdns
