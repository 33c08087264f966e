#include "popdns/mixnet.hpp"

#include <sodium.h>

#include <algorithm>

#include "popdns/errors.hpp"
#include "popdns/wire.hpp"

namespace popdns {

namespace {

std::vector<uint8_t> make_block(std::span<const uint8_t> payload) {
  if (payload.size() > kPadSize - 2)
    throw SealError("payload exceeds the onion block");
  std::vector<uint8_t> block(kPadSize, 0);
  block[0] = uint8_t(payload.size() & 0xFF);
  block[1] = uint8_t(payload.size() >> 8);
  std::copy(payload.begin(), payload.end(), block.begin() + 2);
  return block;
}

std::optional<std::span<const uint8_t>> block_payload(
    std::span<const uint8_t> block) {
  if (block.size() != kPadSize) return std::nullopt;
  size_t len = size_t(block[0]) | size_t(block[1]) << 8;
  if (len > kPadSize - 2) return std::nullopt;
  return block.subspan(2, len);
}

std::array<uint8_t, 32> cert_tag(std::span<const uint8_t> pubkey,
                                 const std::array<uint8_t, 32>& ca_key) {
  std::array<uint8_t, 32> tag;
  crypto_generichash(tag.data(), tag.size(), pubkey.data(), pubkey.size(),
                     ca_key.data(), ca_key.size());
  return tag;
}

}  // namespace

Registry::Registry(uint64_t ca_seed) {
  if (sodium_init() < 0) throw SealError("libsodium failed to initialize");
  Rng rng(ca_seed);
  rng.fill(ca_key_.data(), ca_key_.size());
}

Certificate Registry::certify(std::span<const uint8_t> pubkey) const {
  if (pubkey.empty()) throw InvalidCertificate("empty public key");
  Certificate cert;
  cert.pubkey.assign(pubkey.begin(), pubkey.end());
  cert.tag = cert_tag(pubkey, ca_key_);
  return cert;
}

ClientId Registry::register_client(std::string_view credential,
                                   const Certificate& cert) {
  if (cert.pubkey.empty() || cert.tag != cert_tag(cert.pubkey, ca_key_))
    throw InvalidCertificate("certificate tag does not verify");
  if (!credentials_.emplace(credential).second)
    throw DuplicateCredential("credential already registered: " +
                              std::string(credential));
  keys_.push_back(cert.pubkey);
  return ClientId(keys_.size() - 1);
}

std::span<const uint8_t> Registry::pubkey(ClientId id) const {
  if (!registered(id))
    throw PathError("client " + std::to_string(id) + " is not registered");
  return keys_[id];
}

MixPath sample_path(const Registry& registry, ClientId sender,
                    uint32_t rounds, Rng& rng) {
  if (rounds < 1) throw ConfigError("a mix path needs at least one hop");
  if (!registry.registered(sender))
    throw PathError("sender " + std::to_string(sender) +
                    " is not registered");
  size_t n = registry.size();
  if (n < size_t(rounds) + 1)
    throw PathError("registry of " + std::to_string(n) +
                    " cannot supply " + std::to_string(rounds) +
                    " distinct hops excluding the sender");
  std::vector<ClientId> cand;
  cand.reserve(n - 1);
  for (ClientId id = 0; id < ClientId(n); ++id)
    if (id != sender) cand.push_back(id);
  MixPath path;
  path.hops.reserve(rounds);
  for (uint32_t i = 0; i < rounds; ++i) {
    size_t j = i + rng.uniform(cand.size() - i);
    std::swap(cand[i], cand[j]);
    path.hops.push_back(cand[i]);
  }
  return path;
}

size_t max_rounds(const Sealer& sealer) {
  return (kPadSize - 2 - kVoteCore) / (sealer.overhead() + 4);
}

std::vector<uint8_t> encode_vote(const Vote& vote) {
  std::vector<uint8_t> core;
  core.reserve(kVoteCore);
  core.push_back(uint8_t(vote.key.qtype));
  const auto& labels = vote.key.name.labels();  // stored root-first
  for (auto it = labels.rbegin(); it != labels.rend(); ++it) {
    core.push_back(uint8_t(it->size()));
    core.insert(core.end(), it->begin(), it->end());
  }
  core.push_back(0);
  if (core.size() > kVoteCore)
    throw SealError("vote name does not fit the core");
  core.resize(kVoteCore, 0);
  return core;
}

Vote decode_vote(std::span<const uint8_t> core) {
  if (core.size() != kVoteCore)
    throw SealError("vote core is " + std::to_string(core.size()) +
                    " bytes, want " + std::to_string(kVoteCore));
  size_t pos = 0;
  uint8_t qt = core[pos++];
  if (qt < 1 || qt > 3) throw SealError("vote qtype out of range");
  std::vector<std::string> leaf_first;
  while (true) {
    if (pos >= core.size()) throw SealError("unterminated vote name");
    uint8_t len = core[pos++];
    if (len == 0) break;
    if (len > 63 || pos + len > core.size())
      throw SealError("vote label overruns the core");
    leaf_first.emplace_back(reinterpret_cast<const char*>(core.data() + pos),
                            len);
    pos += len;
  }
  if (leaf_first.empty()) throw SealError("empty vote name");
  for (size_t i = pos; i < core.size(); ++i)
    if (core[i] != 0) throw SealError("vote padding is not zero");
  Vote vote;
  std::vector<std::string> root_first(leaf_first.rbegin(), leaf_first.rend());
  try {
    vote.key.name = DomainName::from_labels(std::move(root_first));
  } catch (const NameError& e) {
    throw SealError(std::string("malformed vote name: ") + e.what());
  }
  vote.key.qtype = QType(qt);
  return vote;
}

Onion wrap_vote(const Vote& vote, const MixPath& path,
                std::span<const std::span<const uint8_t>> keys,
                const Sealer& sealer, Rng& rng) {
  size_t r = path.hops.size();
  if (r == 0) throw PathError("empty mix path");
  if (keys.size() != r)
    throw PathError("key count does not match path length");
  if (r > max_rounds(sealer))
    throw ConfigError(std::to_string(r) +
                      " layers cannot fit the onion block");
  for (ClientId hop : path.hops)
    if (hop == kServer) throw PathError("the server cannot be a mix hop");

  std::vector<uint8_t> payload = encode_vote(vote);
  ClientId addressee = kServer;
  for (size_t i = r; i-- > 0;) {
    ByteWriter w;
    w.u32le(addressee);
    w.raw(std::span<const uint8_t>(payload));
    payload = sealer.seal(w.bytes(), keys[i], rng);
    addressee = path.hops[i];
  }
  Onion onion;
  onion.next_hop = path.hops[0];
  onion.block = make_block(payload);
  return onion;
}

std::optional<Onion> peel(const Onion& onion, const MixKeyPair& keys,
                          const Sealer& sealer) {
  auto payload = block_payload(onion.block);
  if (!payload) return std::nullopt;
  auto plain = sealer.open(*payload, keys);
  if (!plain || plain->size() < 4) return std::nullopt;
  size_t rest = plain->size() - 4;
  if (rest > kPadSize - 2) return std::nullopt;
  ByteReader r(*plain);
  Onion out;
  out.next_hop = r.u32le();
  out.block = make_block(std::span<const uint8_t>(plain->data() + 4, rest));
  return out;
}

ShuffleResult node_shuffle(std::span<const Onion> batch,
                           const MixKeyPair& keys, const Sealer& sealer,
                           Rng& rng) {
  ShuffleResult result;
  for (size_t i = 0; i < batch.size(); ++i) {
    if (auto inner = peel(batch[i], keys, sealer)) {
      result.onions.push_back(std::move(*inner));
      result.source.push_back(i);
    } else {
      ++result.dropped;
    }
  }
  for (size_t i = result.onions.size(); i > 1; --i) {
    size_t j = rng.uniform(i);
    std::swap(result.onions[i - 1], result.onions[j]);
    std::swap(result.source[i - 1], result.source[j]);
  }
  return result;
}

namespace {

// server_route with the partition expressed as input indices, so the round
// driver can carry onion identities alongside
struct RoutePlan {
  std::map<ClientId, std::vector<size_t>> batches;
  std::vector<size_t> terminal;
  size_t dropped = 0;
};

RoutePlan plan_route(std::span<const Onion> onions, const Registry& registry) {
  RoutePlan plan;
  for (size_t i = 0; i < onions.size(); ++i) {
    ClientId hop = onions[i].next_hop;
    if (hop == kServer)
      plan.terminal.push_back(i);
    else if (registry.registered(hop))
      plan.batches[hop].push_back(i);
    else
      ++plan.dropped;
  }
  auto by_block = [onions](size_t a, size_t b) {
    return onions[a].block < onions[b].block;
  };
  for (auto& [hop, batch] : plan.batches)
    std::sort(batch.begin(), batch.end(), by_block);
  std::sort(plan.terminal.begin(), plan.terminal.end(), by_block);
  return plan;
}

}  // namespace

RouteResult server_route(std::span<const Onion> onions,
                         const Registry& registry) {
  RoutePlan plan = plan_route(onions, registry);
  RouteResult result;
  result.dropped = plan.dropped;
  for (auto& [hop, batch] : plan.batches) {
    auto& out = result.batches[hop];
    out.reserve(batch.size());
    for (size_t idx : batch) out.push_back(onions[idx]);
  }
  result.terminal.reserve(plan.terminal.size());
  for (size_t idx : plan.terminal) result.terminal.push_back(onions[idx]);
  return result;
}

LedgerRow& RoundLedger::row(ClientId node, uint32_t round) {
  auto [it, inserted] = rows_.try_emplace({round, node});
  if (inserted) {
    it->second.node = node;
    it->second.round = round;
  }
  return it->second;
}

std::vector<LedgerRow> RoundLedger::violations() const {
  std::vector<LedgerRow> bad;
  for (const auto& [key, row] : rows_)
    if (row.in_count != row.out_count + row.flagged) bad.push_back(row);
  return bad;
}

void RoundLedger::verify() const {
  for (const auto& [key, row] : rows_) {
    if (row.in_count == row.out_count + row.flagged) continue;
    throw LedgerMismatch(
        row.node, row.round,
        "node " + std::to_string(row.node) + " round " +
            std::to_string(row.round) + ": " + std::to_string(row.in_count) +
            " in, " + std::to_string(row.out_count) + " out, " +
            std::to_string(row.flagged) + " flagged");
  }
}

RoundOutcome run_voting_round(std::span<const Ballot> ballots,
                              const Registry& registry,
                              std::span<const MixKeyPair> secrets,
                              uint32_t rounds, uint32_t v_max,
                              const Sealer& sealer, Rng& rng,
                              bool strict_ledger, const TamperHook& tamper,
                              Transcript* transcript) {
  size_t n = registry.size();
  if (ballots.size() != n || secrets.size() != n)
    throw ConfigError("ballots and secrets must cover every registered client");
  if (rounds < 1) throw ConfigError("at least one shuffle round is required");
  if (rounds > max_rounds(sealer))
    throw ConfigError("path length " + std::to_string(rounds) +
                      " cannot fit the onion block");

  for (size_t c = 0; c < n; ++c)
    if (ballots[c].votes.size() > v_max)
      throw QuotaViolation(ClientId(c), ballots[c].votes.size(), v_max);

  // dedicated substreams: the terminal multiset must not depend on how the
  // sealer consumes randomness
  Rng path_rng = rng.derive("mix-path");
  Rng wrap_rng = rng.derive("mix-wrap");
  Rng shuffle_rng = rng.derive("mix-shuffle");

  RoundOutcome outcome;
  std::vector<Onion> pool;
  std::vector<uint64_t> uids;
  uint64_t next_uid = 0;

  for (ClientId c = 0; c < ClientId(n); ++c) {
    for (const Vote& vote : ballots[c].votes) {
      MixPath path = sample_path(registry, c, rounds, path_rng);
      std::vector<std::span<const uint8_t>> keys;
      keys.reserve(path.hops.size());
      for (ClientId hop : path.hops) keys.push_back(registry.pubkey(hop));
      pool.push_back(wrap_vote(vote, path, keys, sealer, wrap_rng));
      uids.push_back(next_uid++);
      if (transcript) transcript->submitter.push_back(c);
    }
  }

  std::vector<std::pair<Onion, uint64_t>> collected;  // addressed to server
  for (uint32_t r = 0; r < rounds; ++r) {
    RoutePlan plan = plan_route(pool, registry);
    outcome.dropped += plan.dropped;
    for (size_t idx : plan.terminal)
      collected.emplace_back(std::move(pool[idx]), uids[idx]);

    std::vector<Onion> next_pool;
    std::vector<uint64_t> next_uids;
    for (auto& [node, batch_idx] : plan.batches) {
      std::vector<Onion> batch;
      std::vector<uint64_t> batch_uids;
      batch.reserve(batch_idx.size());
      for (size_t idx : batch_idx) {
        batch.push_back(std::move(pool[idx]));
        batch_uids.push_back(uids[idx]);
      }
      LedgerRow& row = outcome.ledger.row(node, r);
      row.in_count += batch.size();

      ShuffleResult shuffled =
          node_shuffle(batch, secrets[node], sealer, shuffle_rng);
      row.flagged += shuffled.dropped;

      std::vector<uint64_t> out_uids;
      std::vector<size_t> out_source = shuffled.source;
      out_uids.reserve(shuffled.onions.size());
      for (size_t k = 0; k < shuffled.onions.size(); ++k)
        out_uids.push_back(next_uid++);

      if (tamper) {
        // re-identify post-tamper onions by bytes; anything new is alien
        std::map<std::pair<ClientId, std::vector<uint8_t>>,
                 std::vector<std::pair<uint64_t, size_t>>>
            pre;
        for (size_t k = 0; k < shuffled.onions.size(); ++k)
          pre[{shuffled.onions[k].next_hop, shuffled.onions[k].block}]
              .emplace_back(out_uids[k], out_source[k]);
        tamper(node, r, shuffled.onions);
        out_uids.clear();
        out_source.clear();
        for (const Onion& onion : shuffled.onions) {
          auto it = pre.find({onion.next_hop, onion.block});
          if (it != pre.end() && !it->second.empty()) {
            out_uids.push_back(it->second.back().first);
            out_source.push_back(it->second.back().second);
            it->second.pop_back();
          } else {
            out_uids.push_back(next_uid++);
            out_source.push_back(Transcript::kNoSource);
          }
        }
      }
      row.out_count += shuffled.onions.size();

      if (transcript) {
        Transcript::NodeRound nr;
        nr.node = node;
        nr.round = r;
        nr.in_uids = std::move(batch_uids);
        nr.out_uids = out_uids;
        nr.source_of = std::move(out_source);
        transcript->node_rounds.push_back(std::move(nr));
      }
      for (size_t k = 0; k < shuffled.onions.size(); ++k) {
        next_pool.push_back(std::move(shuffled.onions[k]));
        next_uids.push_back(out_uids[k]);
      }
    }
    pool = std::move(next_pool);
    uids = std::move(next_uids);
  }

  RoutePlan last = plan_route(pool, registry);
  outcome.dropped += last.dropped;
  for (size_t idx : last.terminal)
    collected.emplace_back(std::move(pool[idx]), uids[idx]);
  // anything still addressed to a client after R rounds is broken
  for (const auto& [node, batch] : last.batches)
    outcome.dropped += batch.size();

  for (const auto& [onion, uid] : collected) {
    auto payload = block_payload(onion.block);
    if (!payload || payload->size() != kVoteCore) {
      ++outcome.dropped;
      continue;
    }
    try {
      outcome.votes.push_back(decode_vote(*payload));
      if (transcript) transcript->terminal_uids.push_back(uid);
    } catch (const SealError&) {
      ++outcome.dropped;
    }
  }

  if (strict_ledger)
    outcome.ledger.verify();
  else
    outcome.violations = outcome.ledger.violations();
  return outcome;
}

}  // namespace popdns
