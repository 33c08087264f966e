#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "popdns/core.hpp"
#include "popdns/rng.hpp"
#include "popdns/sealer.hpp"
#include "popdns/voting.hpp"

namespace popdns {

/// next_hop sentinel: the onion (or terminal vote) is for the server.
inline constexpr ClientId kServer = 0xFFFFFFFFu;

/// Every onion block is exactly this long at every shuffle round, so length
/// reveals nothing about remaining layers.
inline constexpr size_t kPadSize = 1024;

/// Padded terminal vote plaintext: qtype u8, leaf-first length-prefixed
/// labels, zero terminator, zero fill. 256 fits the longest legal name.
inline constexpr size_t kVoteCore = 256;

/// Fixed-size relay unit. block = u16le payload length, payload, zero fill;
/// the payload is sealed for the next hop, or a bare vote core once
/// next_hop is the server.
struct Onion {
  ClientId next_hop = kServer;
  std::vector<uint8_t> block;
  bool operator==(const Onion&) const = default;
};

/// The mix nodes a vote will traverse, one per shuffle round: distinct,
/// sender excluded.
struct MixPath {
  std::vector<ClientId> hops;
};

/// Key endorsement by the registration authority: keyed-hash tag over the
/// public key. Stands in for a real certificate chain.
struct Certificate {
  std::vector<uint8_t> pubkey;
  std::array<uint8_t, 32> tag;
};

/// One registration per credential (Sybil defense); ids are dense and
/// assigned in registration order.
class Registry {
 public:
  explicit Registry(uint64_t ca_seed);

  Certificate certify(std::span<const uint8_t> pubkey) const;

  /// Validates the certificate tag and burns the credential.
  ClientId register_client(std::string_view credential,
                           const Certificate& cert);

  size_t size() const { return keys_.size(); }
  bool registered(ClientId id) const { return id < keys_.size(); }
  std::span<const uint8_t> pubkey(ClientId id) const;

 private:
  std::array<uint8_t, 32> ca_key_;
  std::vector<std::vector<uint8_t>> keys_;
  std::set<std::string, std::less<>> credentials_;
};

/// Uniform draw of `rounds` distinct hops from the registry, never the
/// sender. Needs rounds + 1 registered clients.
MixPath sample_path(const Registry& registry, ClientId sender,
                    uint32_t rounds, Rng& rng);

/// Largest path length whose outermost payload still fits the block.
size_t max_rounds(const Sealer& sealer);

/// Vote core codec. decode rejects anything but a well-formed, zero-padded
/// core (SealError).
std::vector<uint8_t> encode_vote(const Vote& vote);
Vote decode_vote(std::span<const uint8_t> core);

/// Seal the padded vote innermost-to-outermost with the keys of hops
/// R-1 ... 0; each layer's plaintext carries the following hop id. keys
/// align with path.hops.
Onion wrap_vote(const Vote& vote, const MixPath& path,
                std::span<const std::span<const uint8_t>> keys,
                const Sealer& sealer, Rng& rng);

/// Remove one layer and re-pad. nullopt when the block is malformed or
/// sealed for someone else; the caller flags the drop.
std::optional<Onion> peel(const Onion& onion, const MixKeyPair& keys,
                          const Sealer& sealer);

/// One node round: peel everything addressed to this node, emit survivors
/// in a uniformly random order. source[i] is the batch index output i came
/// from; it exists for audit instrumentation, a real node publishes
/// nothing of the sort.
struct ShuffleResult {
  std::vector<Onion> onions;
  std::vector<size_t> source;
  size_t dropped = 0;
};
ShuffleResult node_shuffle(std::span<const Onion> batch,
                           const MixKeyPair& keys, const Sealer& sealer,
                           Rng& rng);

/// Server relay step: partition by next hop, each batch in ciphertext byte
/// order so relay order carries no signal. Unregistered destinations are
/// dropped and counted.
struct RouteResult {
  std::map<ClientId, std::vector<Onion>> batches;
  std::vector<Onion> terminal;
  size_t dropped = 0;
};
RouteResult server_route(std::span<const Onion> onions,
                         const Registry& registry);

/// Per node and shuffle round: onions handed over by the server, onions
/// returned, and the node's self-reported malformed drops. An honest row
/// satisfies in == out + flagged.
struct LedgerRow {
  ClientId node = 0;
  uint32_t round = 0;
  uint64_t in_count = 0;
  uint64_t out_count = 0;
  uint64_t flagged = 0;
};

class RoundLedger {
 public:
  LedgerRow& row(ClientId node, uint32_t round);
  const std::map<std::pair<uint32_t, ClientId>, LedgerRow>& rows() const {
    return rows_;
  }
  std::vector<LedgerRow> violations() const;
  /// Throws LedgerMismatch for the earliest (round, node) violation.
  void verify() const;

 private:
  std::map<std::pair<uint32_t, ClientId>, LedgerRow> rows_;
};

/// Ground-truth forwarding record for anonymity experiments. Every onion
/// instance gets a uid; each node round maps outputs back to inputs.
struct Transcript {
  struct NodeRound {
    ClientId node = 0;
    uint32_t round = 0;
    std::vector<uint64_t> in_uids;
    std::vector<uint64_t> out_uids;
    std::vector<size_t> source_of;  // index into in_uids, kNoSource if alien
  };
  static constexpr size_t kNoSource = size_t(-1);

  std::vector<ClientId> submitter;  // uid -> submitting client, round zero
  std::vector<NodeRound> node_rounds;
  std::vector<uint64_t> terminal_uids;  // aligned with RoundOutcome::votes
};

/// May rewrite a node's outgoing batch before the server counts it.
using TamperHook =
    std::function<void(ClientId node, uint32_t round, std::vector<Onion>&)>;

struct RoundOutcome {
  std::vector<Vote> votes;
  RoundLedger ledger;
  std::vector<LedgerRow> violations;  // only populated when not strict
  size_t dropped = 0;                 // malformed or unroutable onions
};

/// The full protocol round: quota check, wrap, R relay-peel-shuffle rounds
/// through every addressed node, terminal collection, conservation audit.
/// ballots and secrets are indexed by ClientId and must cover the registry.
/// Path, seal, and shuffle randomness come from derived substreams, so the
/// terminal vote multiset does not depend on the sealer choice.
/// strict_ledger throws LedgerMismatch on the first violation; otherwise
/// violations are reported in the outcome.
RoundOutcome run_voting_round(std::span<const Ballot> ballots,
                              const Registry& registry,
                              std::span<const MixKeyPair> secrets,
                              uint32_t rounds, uint32_t v_max,
                              const Sealer& sealer, Rng& rng,
                              bool strict_ledger = true,
                              const TamperHook& tamper = {},
                              Transcript* transcript = nullptr);

}  // namespace popdns
