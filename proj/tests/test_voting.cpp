#include <doctest.h>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "popdns/delta.hpp"
#include "popdns/voting.hpp"

using namespace popdns;
using namespace popdns::testing;

namespace {

RecordKey akey(const char* name) { return {parse_domain(name), QType::A}; }

Ipv4 ip(uint8_t last) { return Ipv4{10, 0, 0, last}; }

// Resolver over a fixed per-name universe; qtype is checked by the caller.
CnameResolver map_resolver(
    std::map<std::string, std::pair<RecordAnswer, uint32_t>> records) {
  return [records = std::move(records)](
             const DomainName& name,
             QType) -> std::optional<ResolvedRecord> {
    auto it = records.find(present_domain(name));
    if (it == records.end()) return std::nullopt;
    return ResolvedRecord{it->second.first, TtlSeconds{it->second.second}};
  };
}

std::map<RecordKey, uint32_t> counts_of(
    std::initializer_list<std::pair<const char*, uint32_t>> pairs) {
  std::map<RecordKey, uint32_t> counts;
  for (const auto& [name, n] : pairs) counts.emplace(akey(name), n);
  return counts;
}

}  // namespace

TEST_CASE("weight update follows the smoothing recurrence") {
  RoundConfig config;
  WeightTable table;
  table.weights.emplace(akey("a.example"), 5.0);
  table.weights.emplace(akey("b.example"), 1.0);

  WeightTable next = update_weights(table, counts_of({{"a.example", 10},
                                                      {"c.example", 4}}),
                                    config);
  CHECK(next.round_index == 1);
  CHECK(next.weights.at(akey("a.example")) == doctest::Approx(5.5).epsilon(1e-12));
  CHECK(next.weights.at(akey("b.example")) == doctest::Approx(0.9).epsilon(1e-12));
  // unseen key bootstraps from w = 0
  CHECK(next.weights.at(akey("c.example")) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("k zero-vote rounds decay a weight by exactly 0.9^k") {
  RoundConfig config;
  WeightTable table;
  table.weights.emplace(akey("idle.example"), 3.7);

  const std::map<RecordKey, uint32_t> no_votes;
  for (int k : {1, 7, 25, 50}) {
    WeightTable t = table;
    for (int i = 0; i < k; ++i) t = update_weights(t, no_votes, config);
    double expected = 3.7 * std::pow(0.9, k);
    CHECK(std::abs(t.weights.at(akey("idle.example")) - expected) < 1e-9);
    CHECK(t.round_index == uint64_t(k));
  }
}

TEST_CASE("weights decayed below the drop threshold leave the table") {
  // 0.9^132 < 1e-6 <= 0.9^131, so a unit weight survives 131 idle rounds
  RoundConfig config;
  WeightTable table;
  table.weights.emplace(akey("fading.example"), 1.0);

  const std::map<RecordKey, uint32_t> no_votes;
  for (int i = 0; i < 131; ++i) table = update_weights(table, no_votes, config);
  CHECK(table.weights.contains(akey("fading.example")));
  table = update_weights(table, no_votes, config);
  CHECK(table.weights.empty());
}

TEST_CASE("bootstrap weights rank exactly like raw day-one counts") {
  std::vector<RecordKey> day_one;
  auto repeat = [&](const char* name, int times) {
    for (int i = 0; i < times; ++i) day_one.push_back(akey(name));
  };
  repeat("mid.example", 7);
  repeat("rare.example", 3);
  repeat("top.example", 12);

  WeightTable table = bootstrap_weights(day_one, RoundConfig{});
  CHECK(table.round_index == 0);
  CHECK(table.weights.at(akey("top.example")) == doctest::Approx(1.2));
  CHECK(table.weights.at(akey("mid.example")) == doctest::Approx(0.7));
  CHECK(table.weights.at(akey("rare.example")) == doctest::Approx(0.3));
  CHECK(table.weights.at(akey("top.example")) >
        table.weights.at(akey("mid.example")));
  CHECK(table.weights.at(akey("mid.example")) >
        table.weights.at(akey("rare.example")));
}

TEST_CASE("a steadily queried newcomer overtakes an idle incumbent") {
  // challenger w_k = 1 - 0.9^k with one vote per round, incumbent 0.9^k;
  // they cross once 0.9^k < 0.5, i.e. at round seven
  RoundConfig config;
  WeightTable table;
  table.weights.emplace(akey("incumbent.example"), 1.0);

  auto challenger_votes = counts_of({{"challenger.example", 1}});
  for (int k = 1; k <= 7; ++k) {
    table = update_weights(table, challenger_votes, config);
    double challenger = table.weights.at(akey("challenger.example"));
    double incumbent = table.weights.at(akey("incumbent.example"));
    CHECK(std::abs(challenger - (1.0 - std::pow(0.9, k))) < 1e-9);
    CHECK(std::abs(incumbent - std::pow(0.9, k)) < 1e-9);
    if (k < 7) CHECK(challenger < incumbent);
  }
  CHECK(table.weights.at(akey("challenger.example")) >
        table.weights.at(akey("incumbent.example")));
}

TEST_CASE("ballot selection dedupes and caps in history order") {
  RoundConfig config;
  config.p_vote = 1.0;
  config.v_max = 10;
  Rng rng(1);

  CHECK(generate_ballot({}, config, rng).votes.empty());

  std::vector<RecordKey> history{akey("a.example"), akey("b.example"),
                                 akey("a.example"), akey("c.example")};
  Ballot ballot = generate_ballot(history, config, rng);
  REQUIRE(ballot.votes.size() == 3);
  CHECK(ballot.votes[0].key == akey("a.example"));
  CHECK(ballot.votes[1].key == akey("b.example"));
  CHECK(ballot.votes[2].key == akey("c.example"));

  std::vector<RecordKey> many;
  for (int i = 0; i < 20; ++i)
    many.push_back(akey(("d" + std::to_string(i) + ".example").c_str()));
  Ballot capped = generate_ballot(many, config, rng);
  REQUIRE(capped.votes.size() == config.v_max);
  for (size_t i = 0; i < capped.votes.size(); ++i)
    CHECK(capped.votes[i].key == many[i]);

  config.p_vote = 0.0;
  CHECK(generate_ballot(many, config, rng).votes.empty());
}

TEST_CASE("per-query selection frequency matches p_vote") {
  RoundConfig config;
  config.v_max = 50;  // cap out of the way: every draw is visible
  const int kTrials = 10000;

  std::vector<RecordKey> history;
  for (int i = 0; i < 5; ++i)
    history.push_back(akey(("q" + std::to_string(i) + ".example").c_str()));

  Rng master(20260816);
  std::vector<int> selected(history.size(), 0);
  long total_votes = 0;
  for (int trial = 0; trial < kTrials; ++trial) {
    Rng rng = master.derive("ballot-trial", uint64_t(trial));
    Ballot ballot = generate_ballot(history, config, rng);
    total_votes += long(ballot.votes.size());
    for (const Vote& vote : ballot.votes)
      for (size_t i = 0; i < history.size(); ++i)
        if (vote.key == history[i]) ++selected[i];
  }
  for (size_t i = 0; i < history.size(); ++i) {
    double freq = double(selected[i]) / kTrials;
    CHECK(std::abs(freq - config.p_vote) < 0.01);
  }
  double mean_size = double(total_votes) / kTrials;
  CHECK(std::abs(mean_size - 0.3 * double(history.size())) < 0.05);
}

TEST_CASE("tally counts accepted ballots and rejects quota breakers whole") {
  RoundConfig config;
  config.v_max = 2;

  auto ballot = [](std::initializer_list<const char*> names) {
    Ballot b;
    for (const char* name : names) b.votes.push_back(Vote{akey(name)});
    return b;
  };
  std::vector<Ballot> ballots{
      ballot({"a.example"}),
      ballot({"a.example", "b.example"}),
      ballot({"a.example", "b.example", "c.example"}),  // over quota
      ballot({"a.example", "a.example"}),               // duplicate votes
  };

  TallyResult result = tally(ballots, config);
  CHECK(result.rejected_ballots == 2);
  CHECK(result.counts.at(akey("a.example")) == 2);
  CHECK(result.counts.at(akey("b.example")) == 1);
  CHECK(!result.counts.contains(akey("c.example")));
}

TEST_CASE("refresh keeps the top weights and drops the rest") {
  RoundConfig config;
  config.n_popular = 2;
  WeightTable table;
  table.weights.emplace(akey("a.example"), 3.0);
  table.weights.emplace(akey("b.example"), 2.0);
  table.weights.emplace(akey("c.example"), 1.0);

  auto resolver = map_resolver({{"a.example", {RecordAnswer::a(ip(1)), 300}},
                                {"b.example", {RecordAnswer::a(ip(2)), 300}},
                                {"c.example", {RecordAnswer::a(ip(3)), 300}}});
  PopularityList empty;
  RefreshResult r = refresh_list(table, empty, resolver, config);
  CHECK(r.list.version() == 1);
  CHECK(r.list.popular_count() == 2);
  CHECK(r.list.find_order(akey("a.example")).has_value());
  CHECK(r.list.find_order(akey("b.example")).has_value());
  CHECK(!r.list.find_order(akey("c.example")).has_value());
}

TEST_CASE("refresh ties go to the lexicographically smaller key") {
  RoundConfig config;
  config.n_popular = 2;
  WeightTable table;
  table.weights.emplace(akey("bb.example"), 1.0);
  table.weights.emplace(akey("aa.example"), 1.0);
  table.weights.emplace(akey("zz.example"), 2.0);
  table.weights.emplace(RecordKey{parse_domain("aa.example"), QType::AAAA},
                        1.0);

  Ipv6 v6{};
  v6[15] = 1;
  auto resolver = [v6](const DomainName&,
                       QType qtype) -> std::optional<ResolvedRecord> {
    if (qtype == QType::AAAA)
      return ResolvedRecord{RecordAnswer::aaaa(v6), TtlSeconds{300}};
    return ResolvedRecord{RecordAnswer::a(Ipv4{10, 0, 0, 9}), TtlSeconds{300}};
  };
  RefreshResult r = refresh_list(table, PopularityList{}, resolver, config);
  CHECK(r.list.popular_count() == 2);
  CHECK(r.list.find_order(akey("zz.example")).has_value());
  // name sorts before qtype, so aa.example/A beats aa.example/AAAA
  CHECK(r.list.find_order(akey("aa.example")).has_value());
  CHECK(!r.list.find_order(akey("bb.example")).has_value());
}

TEST_CASE("unresolvable candidates pass their slot to the next weight") {
  RoundConfig config;
  config.n_popular = 2;
  WeightTable table;
  table.weights.emplace(akey("gone.example"), 9.0);
  table.weights.emplace(akey("a.example"), 2.0);
  table.weights.emplace(akey("b.example"), 1.0);

  auto resolver = map_resolver({{"a.example", {RecordAnswer::a(ip(1)), 300}},
                                {"b.example", {RecordAnswer::a(ip(2)), 300}}});
  RefreshResult r = refresh_list(table, PopularityList{}, resolver, config);
  CHECK(r.list.popular_count() == 2);
  CHECK(!r.list.find_order(akey("gone.example")).has_value());
  CHECK(r.list.find_order(akey("a.example")).has_value());
  CHECK(r.list.find_order(akey("b.example")).has_value());
}

TEST_CASE("refresh resolves cname chains into support entries") {
  RoundConfig config;
  config.n_popular = 1;
  WeightTable table;
  table.weights.emplace(akey("www.shop.example"), 5.0);

  auto resolver = map_resolver(
      {{"www.shop.example",
        {RecordAnswer::cname(parse_domain("edge.cdn.example")), 60}},
       {"edge.cdn.example", {RecordAnswer::a(ip(7)), 30}}});
  RefreshResult r = refresh_list(table, PopularityList{}, resolver, config);
  CHECK(r.list.popular_count() == 1);
  CHECK(r.list.entry_count() == 2);
  auto support = r.list.find_order(akey("edge.cdn.example"));
  REQUIRE(support.has_value());
  CHECK(r.list.entry_data(*support).is_cname_support);

  LookupResult hit = r.list.lookup(akey("www.shop.example"));
  REQUIRE(hit.hit());
  CHECK(hit.terminal() == RecordAnswer::a(ip(7)));
}

TEST_CASE("steady membership keeps orders and yields an empty batch") {
  RoundConfig config;
  config.n_popular = 3;
  WeightTable table;
  table.weights.emplace(akey("a.example"), 3.0);
  table.weights.emplace(akey("b.example"), 2.0);

  auto resolver = map_resolver({{"a.example", {RecordAnswer::a(ip(1)), 300}},
                                {"b.example", {RecordAnswer::a(ip(2)), 300}}});
  RefreshResult first = refresh_list(table, PopularityList{}, resolver, config);
  auto order_a = first.list.find_order(akey("a.example"));
  auto order_b = first.list.find_order(akey("b.example"));
  REQUIRE(order_a.has_value());
  REQUIRE(order_b.has_value());

  RefreshResult second = refresh_list(table, first.list, resolver, config);
  CHECK(second.batch.from_version == first.list.version());
  CHECK(second.batch.to_version == first.list.version() + 1);
  CHECK(second.batch.deltas.empty());
  CHECK(second.list.find_order(akey("a.example")) == order_a);
  CHECK(second.list.find_order(akey("b.example")) == order_b);
}

TEST_CASE("a support entry promoted to popular is reissued, not mutated") {
  RoundConfig config;
  config.n_popular = 1;
  auto resolver = map_resolver(
      {{"www.shop.example",
        {RecordAnswer::cname(parse_domain("edge.cdn.example")), 60}},
       {"edge.cdn.example", {RecordAnswer::a(ip(7)), 30}}});

  WeightTable table;
  table.weights.emplace(akey("www.shop.example"), 5.0);
  RefreshResult first = refresh_list(table, PopularityList{}, resolver, config);
  auto old_order = first.list.find_order(akey("edge.cdn.example"));
  REQUIRE(old_order.has_value());
  REQUIRE(first.list.entry_data(*old_order).is_cname_support);

  // next round the cdn host outvotes the storefront
  config.n_popular = 2;
  table.weights.emplace(akey("edge.cdn.example"), 9.0);
  RefreshResult second = refresh_list(table, first.list, resolver, config);
  auto new_order = second.list.find_order(akey("edge.cdn.example"));
  REQUIRE(new_order.has_value());
  CHECK(*new_order != *old_order);
  CHECK(!second.list.live(*old_order));
  CHECK(!second.list.entry_data(*new_order).is_cname_support);
  CHECK(second.list.pool_at(second.list.entry_data(*new_order).answer) ==
        RecordAnswer::a(ip(7)));
}

TEST_CASE("refresh batches replay byte-exactly onto replicas") {
  RoundConfig config;
  config.n_popular = 4;
  std::map<std::string, std::pair<RecordAnswer, uint32_t>> upstream;
  for (int i = 0; i < 8; ++i)
    upstream.emplace("host" + std::to_string(i) + ".example",
                     std::make_pair(RecordAnswer::a(ip(uint8_t(i))), 300u));
  auto resolver = map_resolver(upstream);

  // weights drift across rounds so membership churns
  PopularityList server;
  PopularityList replica;
  for (int round = 0; round < 4; ++round) {
    WeightTable table;
    for (int i = 0; i < 8; ++i) {
      double w = (i + round) % 8 + 1.0;
      table.weights.emplace(akey(("host" + std::to_string(i) + ".example").c_str()),
                            w);
    }
    RefreshResult r = refresh_list(table, server, resolver, config);
    auto wire = encode_batch(server, r.batch);
    replica = apply_batch(replica, wire);
    server = r.list;
    CHECK(snapshot_digest(replica) == snapshot_digest(server));
    CHECK(replica.version() == server.version());
  }
}

TEST_CASE("refresh is deterministic") {
  RoundConfig config;
  config.n_popular = 3;
  WeightTable table;
  for (int i = 0; i < 6; ++i)
    table.weights.emplace(akey(("d" + std::to_string(i) + ".example").c_str()),
                          double(i % 3) + 0.5);
  std::map<std::string, std::pair<RecordAnswer, uint32_t>> upstream;
  for (int i = 0; i < 6; ++i)
    upstream.emplace("d" + std::to_string(i) + ".example",
                     std::make_pair(RecordAnswer::a(ip(uint8_t(i))), 120u));
  auto resolver = map_resolver(upstream);

  RefreshResult r1 = refresh_list(table, PopularityList{}, resolver, config);
  RefreshResult r2 = refresh_list(table, PopularityList{}, resolver, config);
  CHECK(serialize_snapshot(r1.list) == serialize_snapshot(r2.list));
  CHECK(encode_batch(PopularityList{}, r1.batch) ==
        encode_batch(PopularityList{}, r2.batch));
}
