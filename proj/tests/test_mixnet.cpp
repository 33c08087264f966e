#include <doctest.h>

#include <sodium.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "popdns/errors.hpp"
#include "popdns/mixnet.hpp"

using namespace popdns;
using namespace popdns::testing;

namespace {

Vote vote_for(const std::string& name, QType qtype = QType::A) {
  return Vote{RecordKey{parse_domain(name), qtype}};
}

std::vector<std::string> vote_names(std::span<const Vote> votes) {
  std::vector<std::string> names;
  for (const Vote& v : votes)
    names.push_back(present_domain(v.key.name) + "/" +
                    std::to_string(int(v.key.qtype)));
  std::sort(names.begin(), names.end());
  return names;
}

// registry plus aligned keypairs for n clients
struct Cohort {
  Registry registry;
  std::vector<MixKeyPair> secrets;

  Cohort(size_t n, const Sealer& sealer, uint64_t seed) : registry(seed) {
    Rng rng(seed);
    for (size_t i = 0; i < n; ++i) {
      MixKeyPair keys = sealer.keypair(rng);
      Certificate cert = registry.certify(keys.pub);
      registry.register_client("credential-" + std::to_string(i), cert);
      secrets.push_back(std::move(keys));
    }
  }
};

std::vector<std::span<const uint8_t>> key_spans(const Registry& registry,
                                                const MixPath& path) {
  std::vector<std::span<const uint8_t>> keys;
  for (ClientId hop : path.hops) keys.push_back(registry.pubkey(hop));
  return keys;
}

}  // namespace

TEST_CASE("sealers round-trip and authenticate") {
  BoxSealer box;
  FastSealer fast;
  NullSealer null;
  Rng rng(11);
  std::vector<uint8_t> plain{1, 2, 3, 200, 0, 7};

  for (const Sealer* sealer : std::initializer_list<const Sealer*>{
           &box, &fast, &null}) {
    MixKeyPair keys = sealer->keypair(rng);
    auto sealed = sealer->seal(plain, keys.pub, rng);
    CHECK(sealed.size() == plain.size() + sealer->overhead());
    auto opened = sealer->open(sealed, keys);
    REQUIRE(opened.has_value());
    CHECK(*opened == plain);

    MixKeyPair other = sealer->keypair(rng);
    CHECK(!sealer->open(sealed, other).has_value());
  }
}

TEST_CASE("real sealers are randomized and tamper-evident") {
  BoxSealer box;
  FastSealer fast;
  Rng rng(12);
  std::vector<uint8_t> plain(32, 0xAB);

  for (const Sealer* sealer :
       std::initializer_list<const Sealer*>{&box, &fast}) {
    MixKeyPair keys = sealer->keypair(rng);
    auto first = sealer->seal(plain, keys.pub, rng);
    auto second = sealer->seal(plain, keys.pub, rng);
    CHECK(first != second);

    auto tampered = first;
    tampered[tampered.size() / 2] ^= 0x01;
    CHECK(!sealer->open(tampered, keys).has_value());
    CHECK(sealer->open(first, keys).has_value());
  }
}

TEST_CASE("sealing is reproducible from the rng seed") {
  BoxSealer box;
  std::vector<uint8_t> plain(16, 0x5C);
  Rng k1(77), k2(77);
  MixKeyPair a = box.keypair(k1);
  MixKeyPair b = box.keypair(k2);
  CHECK(a.pub == b.pub);
  CHECK(a.sec == b.sec);
  Rng s1(78), s2(78);
  CHECK(box.seal(plain, a.pub, s1) == box.seal(plain, b.pub, s2));
}

TEST_CASE("box sealer speaks the libsodium sealed-box format") {
  REQUIRE(sodium_init() >= 0);
  BoxSealer box;
  Rng rng(13);
  MixKeyPair keys = box.keypair(rng);
  std::vector<uint8_t> plain{9, 8, 7, 6, 5};

  auto ours = box.seal(plain, keys.pub, rng);
  std::vector<uint8_t> opened(plain.size());
  REQUIRE(crypto_box_seal_open(opened.data(), ours.data(), ours.size(),
                               keys.pub.data(), keys.sec.data()) == 0);
  CHECK(opened == plain);

  std::vector<uint8_t> theirs(plain.size() + crypto_box_SEALBYTES);
  REQUIRE(crypto_box_seal(theirs.data(), plain.data(), plain.size(),
                          keys.pub.data()) == 0);
  auto back = box.open(theirs, keys);
  REQUIRE(back.has_value());
  CHECK(*back == plain);
}

TEST_CASE("registry enforces one credential per client and valid tags") {
  BoxSealer box;
  Rng rng(21);
  Registry registry(99);

  MixKeyPair k1 = box.keypair(rng);
  Certificate c1 = registry.certify(k1.pub);
  ClientId id1 = registry.register_client("alice", c1);
  CHECK(id1 == 0);
  CHECK(registry.size() == 1);
  CHECK(std::equal(registry.pubkey(0).begin(), registry.pubkey(0).end(),
                   k1.pub.begin()));

  MixKeyPair k2 = box.keypair(rng);
  Certificate c2 = registry.certify(k2.pub);
  CHECK_THROWS_AS(registry.register_client("alice", c2), DuplicateCredential);
  CHECK(registry.register_client("bob", c2) == 1);

  MixKeyPair k3 = box.keypair(rng);
  Certificate forged = registry.certify(k3.pub);
  forged.tag[5] ^= 0x40;
  CHECK_THROWS_AS(registry.register_client("carol", forged),
                  InvalidCertificate);
  Certificate swapped = registry.certify(k3.pub);
  swapped.pubkey = k1.pub;  // tag no longer matches the key
  CHECK_THROWS_AS(registry.register_client("carol", swapped),
                  InvalidCertificate);
  CHECK(registry.size() == 2);

  CHECK_THROWS_AS(registry.pubkey(7), PathError);
}

TEST_CASE("path sampling draws distinct hops and spares the sender") {
  NullSealer sealer;
  Cohort cohort(8, sealer, 31);
  Rng rng(32);

  for (int trial = 0; trial < 500; ++trial) {
    MixPath path = sample_path(cohort.registry, 3, 5, rng);
    REQUIRE(path.hops.size() == 5);
    std::set<ClientId> seen(path.hops.begin(), path.hops.end());
    CHECK(seen.size() == 5);
    CHECK(!seen.contains(3));
    for (ClientId hop : path.hops) CHECK(cohort.registry.registered(hop));
  }

  // every non-sender appears in the first slot at roughly uniform rate
  std::map<ClientId, int> first;
  const int kTrials = 7000;
  for (int trial = 0; trial < kTrials; ++trial)
    ++first[sample_path(cohort.registry, 3, 5, rng).hops[0]];
  CHECK(first.size() == 7);
  for (const auto& [hop, count] : first) {
    double freq = double(count) / kTrials;
    CHECK(std::abs(freq - 1.0 / 7) < 0.02);
  }

  CHECK_THROWS_AS(sample_path(cohort.registry, 3, 8, rng), PathError);
  CHECK_THROWS_AS(sample_path(cohort.registry, 99, 2, rng), PathError);
  CHECK_THROWS_AS(sample_path(cohort.registry, 3, 0, rng), ConfigError);
}

TEST_CASE("vote cores round-trip up to the longest legal name") {
  Vote simple = vote_for("www.example.com", QType::AAAA);
  auto core = encode_vote(simple);
  CHECK(core.size() == kVoteCore);
  Vote back = decode_vote(core);
  CHECK(back == simple);

  // 127 single-character labels: 253 presentation bytes, a full core
  std::string longest = "a";
  for (int i = 1; i < 127; ++i) longest += ".a";
  Vote max = vote_for(longest);
  Vote max_back = decode_vote(encode_vote(max));
  CHECK(max_back == max);
}

TEST_CASE("malformed vote cores are rejected") {
  auto core = encode_vote(vote_for("site.example"));

  auto bad_qtype = core;
  bad_qtype[0] = 9;
  CHECK_THROWS_AS(decode_vote(bad_qtype), SealError);

  auto dirty_padding = core;
  dirty_padding[kVoteCore - 1] = 1;
  CHECK_THROWS_AS(decode_vote(dirty_padding), SealError);

  std::vector<uint8_t> empty_name(kVoteCore, 0);
  empty_name[0] = 1;
  CHECK_THROWS_AS(decode_vote(empty_name), SealError);

  std::vector<uint8_t> nul_label(kVoteCore, 0);
  nul_label[0] = 1;
  nul_label[1] = 4;  // four NUL bytes pose as a label
  CHECK_THROWS_AS(decode_vote(nul_label), SealError);

  std::vector<uint8_t> overrun(kVoteCore, 0xFF);
  overrun[0] = 1;  // first length byte claims 255, labels cap at 63
  CHECK_THROWS_AS(decode_vote(overrun), SealError);

  CHECK_THROWS_AS(decode_vote(std::vector<uint8_t>(12, 0)), SealError);
}

TEST_CASE("wrap and peel walk the path layer by layer") {
  BoxSealer sealer;
  Cohort cohort(6, sealer, 41);
  Rng rng(42);
  Vote vote = vote_for("chain.example");

  for (uint32_t rounds : {1u, 3u, 5u}) {
    MixPath path = sample_path(cohort.registry, 0, rounds, rng);
    Onion onion =
        wrap_vote(vote, path, key_spans(cohort.registry, path), sealer, rng);
    CHECK(onion.next_hop == path.hops[0]);

    for (uint32_t i = 0; i < rounds; ++i) {
      CHECK(onion.block.size() == kPadSize);
      auto inner = peel(onion, cohort.secrets[path.hops[i]], sealer);
      REQUIRE(inner.has_value());
      onion = std::move(*inner);
      if (i + 1 < rounds)
        CHECK(onion.next_hop == path.hops[i + 1]);
    }
    CHECK(onion.next_hop == kServer);
    CHECK(onion.block.size() == kPadSize);
    size_t len = size_t(onion.block[0]) | size_t(onion.block[1]) << 8;
    REQUIRE(len == kVoteCore);
    Vote terminal =
        decode_vote(std::span<const uint8_t>(onion.block.data() + 2, len));
    CHECK(terminal == vote);
  }
}

TEST_CASE("onion size is independent of remaining layers") {
  FastSealer sealer;
  Cohort cohort(12, sealer, 51);
  Rng rng(52);
  Vote vote = vote_for("size.example");

  MixPath one = sample_path(cohort.registry, 0, 1, rng);
  MixPath ten = sample_path(cohort.registry, 0, 10, rng);
  Onion o1 = wrap_vote(vote, one, key_spans(cohort.registry, one), sealer, rng);
  Onion o10 = wrap_vote(vote, ten, key_spans(cohort.registry, ten), sealer, rng);
  CHECK(o1.block.size() == o10.block.size());
  CHECK(o1.block.size() == kPadSize);
}

TEST_CASE("peel rejects wrong keys and corrupted blocks") {
  BoxSealer sealer;
  Cohort cohort(4, sealer, 61);
  Rng rng(62);
  MixPath path = sample_path(cohort.registry, 0, 2, rng);
  Onion onion = wrap_vote(vote_for("target.example"), path,
                          key_spans(cohort.registry, path), sealer, rng);

  ClientId right = path.hops[0];
  ClientId wrong = path.hops[1];
  CHECK(!peel(onion, cohort.secrets[wrong], sealer).has_value());

  Onion corrupted = onion;
  corrupted.block[200] ^= 0x10;
  CHECK(!peel(corrupted, cohort.secrets[right], sealer).has_value());

  Onion bad_length = onion;
  bad_length.block[0] = 0xFF;
  bad_length.block[1] = 0x07;  // claims 2047 payload bytes in a 1024 block
  CHECK(!peel(bad_length, cohort.secrets[right], sealer).has_value());

  Onion truncated = onion;
  truncated.block.resize(100);
  CHECK(!peel(truncated, cohort.secrets[right], sealer).has_value());

  CHECK(peel(onion, cohort.secrets[right], sealer).has_value());
}

TEST_CASE("layer capacity matches each sealer's overhead") {
  CHECK(max_rounds(BoxSealer{}) == 14);
  CHECK(max_rounds(FastSealer{}) == 17);
  CHECK(max_rounds(NullSealer{}) == 63);

  NullSealer sealer;
  Rng rng(71);
  std::vector<MixKeyPair> keys;
  MixPath path;
  std::vector<std::span<const uint8_t>> spans;
  for (ClientId id = 0; id < 64; ++id) {
    keys.push_back(sealer.keypair(rng));
    path.hops.push_back(id);
  }
  for (const MixKeyPair& k : keys) spans.push_back(k.pub);

  MixPath full = path;
  full.hops.resize(63);
  Onion onion = wrap_vote(vote_for("deep.example"), full,
                          std::span(spans).subspan(0, 63), sealer, rng);
  CHECK(onion.block.size() == kPadSize);
  CHECK_THROWS_AS(wrap_vote(vote_for("deep.example"), path, spans, sealer, rng),
                  ConfigError);
}

TEST_CASE("node shuffle peels everything it can and flags the rest") {
  FastSealer sealer;
  Cohort cohort(5, sealer, 81);
  Rng rng(82);

  CHECK(node_shuffle({}, cohort.secrets[0], sealer, rng).onions.empty());

  MixPath path{{ClientId(2)}};
  auto keys = key_spans(cohort.registry, path);
  std::vector<Onion> batch;
  for (int i = 0; i < 6; ++i)
    batch.push_back(wrap_vote(vote_for("n" + std::to_string(i) + ".example"),
                              path, keys, sealer, rng));
  batch[4].block[300] ^= 0x01;

  ShuffleResult result = node_shuffle(batch, cohort.secrets[2], sealer, rng);
  CHECK(result.onions.size() == 5);
  CHECK(result.dropped == 1);
  CHECK(result.source.size() == 5);
  for (size_t src : result.source) CHECK(src != 4);
  for (const Onion& onion : result.onions) {
    CHECK(onion.next_hop == kServer);
    CHECK(onion.block.size() == kPadSize);
  }

  ShuffleResult single = node_shuffle(std::span(batch).subspan(0, 1),
                                      cohort.secrets[2], sealer, rng);
  CHECK(single.onions.size() == 1);
  CHECK(single.source == std::vector<size_t>{0});
}

TEST_CASE("shuffle permutations are uniform over a 4-onion batch") {
  NullSealer sealer;
  Cohort cohort(3, sealer, 91);
  Rng rng(92);
  MixPath path{{ClientId(1)}};
  auto keys = key_spans(cohort.registry, path);
  std::vector<Onion> batch;
  for (int i = 0; i < 4; ++i)
    batch.push_back(wrap_vote(vote_for("p" + std::to_string(i) + ".example"),
                              path, keys, sealer, rng));

  const int kTrials = 10000;
  std::map<std::array<size_t, 4>, int> observed;
  Rng master(93);
  for (int trial = 0; trial < kTrials; ++trial) {
    Rng shuffle_rng = master.derive("shuffle", uint64_t(trial));
    ShuffleResult result =
        node_shuffle(batch, cohort.secrets[1], sealer, shuffle_rng);
    REQUIRE(result.source.size() == 4);
    std::array<size_t, 4> perm{result.source[0], result.source[1],
                               result.source[2], result.source[3]};
    ++observed[perm];
  }

  CHECK(observed.size() == 24);
  double expected = double(kTrials) / 24.0;
  double chi2 = 0;
  for (const auto& [perm, count] : observed)
    chi2 += (count - expected) * (count - expected) / expected;
  // 0.999 quantile of chi-square with 23 degrees of freedom
  CHECK(chi2 < 49.728);
}

TEST_CASE("server routing batches by next hop in ciphertext order") {
  NullSealer sealer;
  Cohort cohort(4, sealer, 101);
  Rng rng(102);

  std::vector<Onion> onions;
  for (int i = 0; i < 6; ++i) {
    MixPath path{{ClientId(i % 3)}};
    onions.push_back(wrap_vote(vote_for("r" + std::to_string(i) + ".example"),
                               path, key_spans(cohort.registry, path), sealer,
                               rng));
  }
  Onion stray;
  stray.next_hop = 77;  // never registered
  stray.block = onions[0].block;
  onions.push_back(stray);

  RouteResult result = server_route(onions, cohort.registry);
  CHECK(result.dropped == 1);
  CHECK(result.terminal.empty());
  REQUIRE(result.batches.size() == 3);
  for (const auto& [hop, batch] : result.batches) {
    CHECK(batch.size() == 2);
    CHECK(batch[0].block <= batch[1].block);
    for (const Onion& onion : batch) CHECK(onion.next_hop == hop);
  }
}

namespace {

std::vector<Ballot> one_vote_each(size_t n, const char* stem) {
  std::vector<Ballot> ballots(n);
  for (size_t c = 0; c < n; ++c)
    ballots[c].votes.push_back(
        vote_for(stem + std::to_string(c) + ".example"));
  return ballots;
}

}  // namespace

TEST_CASE("voting rounds deliver the exact submitted multiset") {
  FastSealer fast;
  NullSealer null;
  for (const Sealer* sealer :
       std::initializer_list<const Sealer*>{&fast, &null}) {
    for (size_t n : {3u, 5u, 8u}) {
      Cohort cohort(n, *sealer, 111 + n);
      for (uint32_t rounds : {1u, 2u, uint32_t(n - 1)}) {
        Rng rng(7000 + n * 10 + rounds);
        Rng ballot_rng = rng.derive("ballots");
        std::vector<Ballot> ballots(n);
        std::vector<std::string> submitted;
        for (size_t c = 0; c < n; ++c) {
          size_t count = ballot_rng.uniform(4);  // 0..3 votes
          for (size_t v = 0; v < count; ++v) {
            std::string name = "m" + std::to_string(c) + "-" +
                               std::to_string(v) + ".example";
            ballots[c].votes.push_back(vote_for(name));
            submitted.push_back(name + "/1");
          }
        }
        RoundOutcome outcome =
            run_voting_round(ballots, cohort.registry, cohort.secrets, rounds,
                             10, *sealer, rng);
        std::sort(submitted.begin(), submitted.end());
        CHECK(vote_names(outcome.votes) == submitted);
        CHECK(outcome.dropped == 0);
        CHECK(outcome.ledger.violations().empty());
      }
    }
  }
}

TEST_CASE("every ledger row conserves onions in an honest round") {
  FastSealer sealer;
  Cohort cohort(6, sealer, 121);
  Rng rng(122);
  auto ballots = one_vote_each(6, "c");
  RoundOutcome outcome = run_voting_round(ballots, cohort.registry,
                                          cohort.secrets, 3, 10, sealer, rng);
  CHECK(outcome.votes.size() == 6);

  uint64_t per_round[3] = {0, 0, 0};
  for (const auto& [key, row] : outcome.ledger.rows()) {
    CHECK(row.in_count == row.out_count + row.flagged);
    CHECK(row.flagged == 0);
    per_round[row.round] += row.in_count;
  }
  for (uint64_t total : per_round) CHECK(total == 6);
}

TEST_CASE("over-quota submissions are rejected before the round starts") {
  FastSealer sealer;
  Cohort cohort(4, sealer, 131);
  Rng rng(132);
  std::vector<Ballot> ballots(4);
  for (int i = 0; i < 11; ++i)
    ballots[2].votes.push_back(
        vote_for("q" + std::to_string(i) + ".example"));

  try {
    run_voting_round(ballots, cohort.registry, cohort.secrets, 2, 10, sealer,
                     rng);
    FAIL("quota breach not detected");
  } catch (const QuotaViolation& e) {
    CHECK(e.client == 2);
  }
}

TEST_CASE("an injected onion trips the ledger at the guilty node and round") {
  FastSealer sealer;
  Cohort cohort(5, sealer, 141);
  auto ballots = one_vote_each(5, "i");

  TamperHook inject = [](ClientId node, uint32_t round,
                         std::vector<Onion>& out) {
    if (node == 3 && round == 1 && !out.empty()) out.push_back(out.front());
  };

  Rng rng1(142);
  try {
    run_voting_round(ballots, cohort.registry, cohort.secrets, 3, 10, sealer,
                     rng1, true, inject);
    FAIL("injection not detected");
  } catch (const LedgerMismatch& e) {
    CHECK(e.node == 3);
    CHECK(e.round == 1);
  }

  Rng rng2(142);
  RoundOutcome outcome =
      run_voting_round(ballots, cohort.registry, cohort.secrets, 3, 10, sealer,
                       rng2, false, inject);
  REQUIRE(outcome.violations.size() == 1);
  CHECK(outcome.violations[0].node == 3);
  CHECK(outcome.violations[0].round == 1);
  CHECK(outcome.violations[0].out_count ==
        outcome.violations[0].in_count + 1);
}

TEST_CASE("a dropped onion trips the ledger at the guilty node and round") {
  FastSealer sealer;
  Cohort cohort(5, sealer, 151);
  auto ballots = one_vote_each(5, "d");

  TamperHook drop = [](ClientId node, uint32_t round,
                       std::vector<Onion>& out) {
    if (node == 1 && round == 0 && !out.empty()) out.pop_back();
  };

  Rng rng(152);
  RoundOutcome outcome = run_voting_round(
      ballots, cohort.registry, cohort.secrets, 2, 10, sealer, rng, false,
      drop);
  REQUIRE(outcome.violations.size() == 1);
  CHECK(outcome.violations[0].node == 1);
  CHECK(outcome.violations[0].round == 0);
  CHECK(outcome.votes.size() == 4);
}

TEST_CASE("a corrupted onion is flagged downstream without a violation") {
  FastSealer sealer;
  Cohort cohort(5, sealer, 161);
  auto ballots = one_vote_each(5, "x");

  bool corrupted = false;
  TamperHook corrupt = [&corrupted](ClientId, uint32_t round,
                                    std::vector<Onion>& out) {
    // flip a byte inside the sealed payload, not the unauthenticated padding
    if (round == 0 && !corrupted && !out.empty()) {
      out.front().block[10] ^= 1;
      corrupted = true;
    }
  };

  Rng rng(162);
  RoundOutcome outcome = run_voting_round(
      ballots, cohort.registry, cohort.secrets, 3, 10, sealer, rng, false,
      corrupt);
  CHECK(outcome.violations.empty());
  CHECK(outcome.votes.size() == 4);
  uint64_t flagged = 0;
  for (const auto& [key, row] : outcome.ledger.rows()) flagged += row.flagged;
  CHECK(flagged == 1);
}

TEST_CASE("round outcomes are deterministic and sealer-independent") {
  auto ballots = one_vote_each(5, "s");
  std::vector<std::vector<std::string>> votes_by_sealer;

  BoxSealer box;
  FastSealer fast;
  NullSealer null;
  for (const Sealer* sealer : std::initializer_list<const Sealer*>{
           &box, &fast, &null}) {
    Cohort cohort(5, *sealer, 171);
    Rng rng_a(172), rng_b(172);
    RoundOutcome a = run_voting_round(ballots, cohort.registry, cohort.secrets,
                                      3, 10, *sealer, rng_a);
    RoundOutcome b = run_voting_round(ballots, cohort.registry, cohort.secrets,
                                      3, 10, *sealer, rng_b);
    CHECK(a.votes == b.votes);
    votes_by_sealer.push_back(vote_names(a.votes));
  }
  CHECK(votes_by_sealer[0] == votes_by_sealer[1]);
  CHECK(votes_by_sealer[1] == votes_by_sealer[2]);
}

namespace {

// reconstructs what a coalition of colluding nodes plus the relay server
// can deduce: exact forwarding at colluding nodes, batch-level mixing at
// honest ones. candidates(uid) is the set of possible original senders.
struct TracebackAdversary {
  const Transcript& transcript;
  std::set<ClientId> colluding;
  std::map<uint64_t, std::pair<size_t, size_t>> produced_by;
  std::map<uint64_t, std::set<ClientId>> memo;

  TracebackAdversary(const Transcript& t, std::set<ClientId> coalition)
      : transcript(t), colluding(std::move(coalition)) {
    for (size_t i = 0; i < t.node_rounds.size(); ++i)
      for (size_t k = 0; k < t.node_rounds[i].out_uids.size(); ++k)
        produced_by.emplace(t.node_rounds[i].out_uids[k],
                            std::make_pair(i, k));
  }

  const std::set<ClientId>& candidates(uint64_t uid) {
    auto hit = memo.find(uid);
    if (hit != memo.end()) return hit->second;
    std::set<ClientId> result;
    auto maker = produced_by.find(uid);
    if (maker == produced_by.end()) {
      result.insert(transcript.submitter[uid]);
    } else {
      const auto& nr = transcript.node_rounds[maker->second.first];
      if (colluding.contains(nr.node)) {
        size_t src = nr.source_of[maker->second.second];
        result = candidates(nr.in_uids[src]);
      } else {
        for (uint64_t in : nr.in_uids) {
          const auto& inner = candidates(in);
          result.insert(inner.begin(), inner.end());
        }
      }
    }
    return memo.emplace(uid, std::move(result)).first->second;
  }

  // ground truth, for conditioning and scoring only
  ClientId true_sender(uint64_t uid) const {
    while (true) {
      auto maker = produced_by.find(uid);
      if (maker == produced_by.end()) return transcript.submitter[uid];
      const auto& nr = transcript.node_rounds[maker->second.first];
      uid = nr.in_uids[nr.source_of[maker->second.second]];
    }
  }

  bool path_has_honest_hop(uint64_t uid) const {
    while (true) {
      auto maker = produced_by.find(uid);
      if (maker == produced_by.end()) return false;
      const auto& nr = transcript.node_rounds[maker->second.first];
      if (!colluding.contains(nr.node)) return true;
      uid = nr.in_uids[nr.source_of[maker->second.second]];
    }
  }
};

struct GuessStats {
  long guesses = 0;
  long correct = 0;
  double inv_candidates = 0;
  double sum_candidates = 0;

  double accuracy() const { return double(correct) / double(guesses); }
  double uniform_rate() const { return inv_candidates / double(guesses); }
  double mean_candidates() const { return sum_candidates / double(guesses); }
  double bound() const {
    double p = uniform_rate();
    return p + 3 * std::sqrt(p * (1 - p) / double(guesses));
  }
};

GuessStats unlinkability_trial_sweep(size_t clients, uint32_t rounds,
                                     const std::set<ClientId>& coalition,
                                     int trials, uint64_t seed) {
  FastSealer sealer;
  Cohort cohort(clients, sealer, seed);
  auto ballots = one_vote_each(clients, "u");
  GuessStats stats;
  Rng master(seed + 1);
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = master.derive("round", uint64_t(trial));
    Transcript transcript;
    RoundOutcome outcome =
        run_voting_round(ballots, cohort.registry, cohort.secrets, rounds, 10,
                         sealer, rng, true, {}, &transcript);
    TracebackAdversary adversary(transcript, coalition);
    Rng guess_rng = master.derive("guess", uint64_t(trial));
    for (uint64_t uid : transcript.terminal_uids) {
      if (!adversary.path_has_honest_hop(uid)) continue;
      const auto& cand = adversary.candidates(uid);
      REQUIRE(!cand.empty());
      std::vector<ClientId> pool(cand.begin(), cand.end());
      ClientId guess = pool[guess_rng.uniform(pool.size())];
      ++stats.guesses;
      if (guess == adversary.true_sender(uid)) ++stats.correct;
      stats.inv_candidates += 1.0 / double(pool.size());
      stats.sum_candidates += double(pool.size());
    }
  }
  return stats;
}

}  // namespace

TEST_CASE("terminal votes are unlinkable beyond the anonymity set") {
  // all nodes honest: guessing cannot beat uniform over the candidate set,
  // and the sets are substantial (a singleton batch at an honest node is
  // possible, so only the mean is pinned)
  GuessStats honest = unlinkability_trial_sweep(6, 3, {}, 1500, 210);
  CHECK(honest.guesses == 1500 * 6);
  CHECK(honest.mean_candidates() > 3.0);
  CHECK(honest.accuracy() <= honest.bound());

  // half the nodes collude; votes with one honest hop still mix
  GuessStats half =
      unlinkability_trial_sweep(6, 3, {ClientId(0), ClientId(1), ClientId(2)},
                                1500, 220);
  CHECK(half.guesses > 0);
  CHECK(half.mean_candidates() > 1.5);
  CHECK(half.accuracy() <= half.bound());
  CHECK(half.uniform_rate() < 0.65);
}
