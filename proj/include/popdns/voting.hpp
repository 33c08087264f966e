#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "popdns/core.hpp"
#include "popdns/delta.hpp"
#include "popdns/poplist.hpp"
#include "popdns/rng.hpp"

namespace popdns {

struct Vote {
  RecordKey key;
  bool operator==(const Vote&) const = default;
};

/// One client's votes for a round: unique keys, at most v_max of them.
struct Ballot {
  std::vector<Vote> votes;
  bool operator==(const Ballot&) const = default;
};

struct RoundConfig {
  uint32_t t_refresh = 3600;  // seconds between voting rounds
  uint32_t v_max = 10;        // votes per ballot
  double p_vote = 0.3;        // per-query vote probability
  double alpha = 0.1;         // popularity smoothing weight
  size_t n_popular = 25000;
};

/// Exponentially weighted per-record popularity:
/// w_m = alpha * n_m + (1 - alpha) * w_{m-1}, with w_{-1} = 0.
struct WeightTable {
  std::map<RecordKey, double> weights;
  uint64_t round_index = 0;
};

/// Number of zero-vote rounds after which a weight is dropped outright
/// rather than decayed forever (0.9^k falls below this near k = 140).
inline constexpr double kEpsilonDrop = 1e-6;

/// Scan the client's last-round query history in time order, select each
/// query independently with probability p_vote, dedupe by first selection,
/// keep the first v_max unique keys.
Ballot generate_ballot(std::span<const RecordKey> history,
                       const RoundConfig& config, Rng& rng);

struct TallyResult {
  std::map<RecordKey, uint32_t> counts;  // n_m
  size_t rejected_ballots = 0;           // over-quota or duplicate votes
};

/// n_m(key) = number of accepted ballots containing key. A ballot breaking
/// the v_max quota or containing duplicate keys is rejected whole.
TallyResult tally(std::span<const Ballot> ballots, const RoundConfig& config);

/// One round of Eq. 1 over the union of table keys and counted keys;
/// weights decayed below kEpsilonDrop fall out of the table.
WeightTable update_weights(const WeightTable& table,
                           const std::map<RecordKey, uint32_t>& counts,
                           const RoundConfig& config);
/// Move form: same result, updates the table in place. The simulator runs
/// hundreds of rounds over six-figure tables; copying them every round is
/// the dominant cost.
WeightTable update_weights(WeightTable&& table,
                           const std::map<RecordKey, uint32_t>& counts,
                           const RoundConfig& config);

/// Day-one counts folded in as round 0: w_0 = alpha * count.
WeightTable bootstrap_weights(std::span<const RecordKey> day_one,
                              const RoundConfig& config);

/// New membership = the top n_popular keys by weight (ties: lexicographic
/// name, then qtype) that resolve, plus the recomputed CNAME support set.
/// Entries keeping membership keep their orders and current answers; a
/// support entry promoted to popular (or the reverse) is reissued under a
/// fresh order since a slot's support flag never mutates in place.
/// The batch equals diff_states(current, refreshed): it applies to replicas
/// at current.version and advances them to current.version + 1. Applying it
/// to the served list itself avoids copying the list every round.
UpdateBatch plan_refresh(const WeightTable& table,
                         const PopularityList& current,
                         const CnameResolver& resolver,
                         const RoundConfig& config);

/// plan_refresh with the refreshed list materialized alongside the batch.
struct RefreshResult {
  PopularityList list;
  UpdateBatch batch;
};
RefreshResult refresh_list(const WeightTable& table,
                           const PopularityList& current,
                           const CnameResolver& resolver,
                           const RoundConfig& config);

}  // namespace popdns
