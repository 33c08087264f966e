#pragma once

#include <set>
#include <string>
#include <vector>

#include "popdns/core.hpp"
#include "popdns/poplist.hpp"
#include "popdns/rng.hpp"

namespace popdns::testing {

inline DomainName random_name(Rng& rng, size_t max_labels = 4) {
  size_t count = 1 + rng.uniform(max_labels);
  std::vector<std::string> labels;
  for (size_t i = 0; i < count; ++i) {
    size_t len = 1 + rng.uniform(10);
    std::string label;
    for (size_t j = 0; j < len; ++j)
      label += char('a' + rng.uniform(26));
    labels.push_back(std::move(label));
  }
  return DomainName::from_labels(std::move(labels));
}

inline RecordAnswer random_address(Rng& rng, QType qtype) {
  if (qtype == QType::AAAA) {
    Ipv6 v6;
    rng.fill(v6.data(), v6.size());
    return RecordAnswer::aaaa(v6);
  }
  Ipv4 v4;
  rng.fill(v4.data(), v4.size());
  return RecordAnswer::a(v4);
}

inline TtlSeconds random_ttl(Rng& rng) {
  static const uint32_t choices[] = {30, 60, 300, 3600, 86400};
  return TtlSeconds{choices[rng.uniform(5)]};
}

/// Random list with unique keys, a mix of A/AAAA/CNAME answers and shared
/// label suffixes; support flags sprinkled in. Orders are insertion order.
inline PopularityList random_list(Rng& rng, size_t entries) {
  PopularityList list;
  std::set<std::string> used;
  while (list.entry_count() < entries) {
    DomainName name = random_name(rng);
    QType qtype = rng.bernoulli(0.7) ? QType::A : QType::AAAA;
    RecordKey key{name, qtype};
    std::string id = present_domain(name) + "/" + std::string(qtype_name(qtype));
    if (!used.insert(id).second) continue;
    RecordAnswer answer = rng.bernoulli(0.15)
                              ? RecordAnswer::cname(random_name(rng))
                              : random_address(rng, qtype);
    list.add_entry(key, list.pool_intern(answer), random_ttl(rng),
                   rng.bernoulli(0.2));
  }
  return list;
}

}  // namespace popdns::testing
