#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "popdns/core.hpp"
#include "popdns/poplist.hpp"
#include "popdns/sealer.hpp"
#include "popdns/trace.hpp"

namespace popdns {

/// How upstream answers drift. Every record draws a fixed TTL from
/// ttl_weights and owns a k-member answer universe; on each TTL expiry the
/// answer moves to a uniformly chosen *different* member with probability
/// p_change. Flips are a pure function of (seed, name, expiry index), so the
/// same churn sequence replays identically whatever the observation schedule.
/// The default p_change is calibrated so a 10k-record list under the default
/// TTL mix produces roughly 14k answer changes per hour, the churn volume a
/// large public resolver sees for its popular tail.
struct ChurnModel {
  uint32_t k = 8;
  double p_change = 0.05;
  std::vector<std::pair<uint32_t, double>> ttl_weights = {
      {30, 0.20}, {60, 0.20}, {300, 0.25}, {3600, 0.25}, {86400, 0.10}};
  uint64_t seed = 0;
};

/// The upstream DNS as the server sees it: every name resolves, answers
/// follow ChurnModel, and names inside a DomainUniverse keep its alias
/// structure (CNAME heads point at their targets; targets churn, the alias
/// mapping itself is stable). Walk state advances lazily per record, so
/// queries must come in non-decreasing time order per record.
class UpstreamOracle {
 public:
  explicit UpstreamOracle(ChurnModel model,
                          const DomainUniverse* universe = nullptr);
  ~UpstreamOracle();
  UpstreamOracle(UpstreamOracle&&) noexcept;
  UpstreamOracle& operator=(UpstreamOracle&&) noexcept;

  struct Rec;
  /// Find-or-create the churn state behind a key. Pointers stay valid for
  /// the oracle's lifetime, so hot paths can skip the name lookup.
  Rec* touch(const RecordKey& key);
  /// Advance to `now` and materialize the current answer.
  ResolvedRecord read(Rec* rec, uint64_t now_s);
  /// Advance to `now` without materializing; the walk's flip count so far.
  /// An unchanged count between observations means the answer is unchanged.
  uint64_t advance(Rec* rec, uint64_t now_s);

  std::optional<ResolvedRecord> resolve(const RecordKey& key, uint64_t now_s);
  /// Resolver view with the clock bound, for build_list / refresh_list.
  CnameResolver resolver_at(uint64_t now_s);

  uint32_t ttl_of(const DomainName& name) const;
  const ChurnModel& model() const { return model_; }

  /// How many flips the record has absorbed up to now (test oracle).
  uint64_t flips_until(const RecordKey& key, uint64_t now_s);

 private:
  ChurnModel model_;
  const DomainUniverse* universe_;
  std::vector<double> ttl_cumulative_;
  std::unordered_map<std::string, std::unique_ptr<Rec>> states_;
};

/// Advance one record's churn walk to `now`; the new answer when the walk
/// moved since the last call for this record, nullopt otherwise.
std::optional<RecordAnswer> churn_step(UpstreamOracle& oracle,
                                       const RecordKey& key, uint64_t now_s);

struct SimConfig {
  size_t n_popular = 25000;
  uint32_t t_refresh = 3600;  // seconds between voting rounds
  uint32_t ttl_min = 60;      // update flush cadence and re-query clamp
  uint32_t mix_rounds = 10;   // onion path length R
  uint32_t v_max = 10;
  double p_vote = 0.3;
  double alpha = 0.1;
  uint64_t seed = 0;
  enum class Fallback { tor3, direct } fallback = Fallback::tor3;
  uint64_t duration_s = 0;     // 0: run to the end of the trace
  uint64_t bootstrap_s = 86400;  // day one: count queries, then build the list
  enum class SealerKind { box, fast, null } sealer = SealerKind::fast;
  ChurnModel churn;
};

struct SimReport {
  // one entry per full hour after the bootstrap window
  std::vector<double> hourly_hit_ratio;
  double mean_hit_ratio = 0.0;

  uint64_t total_queries = 0;  // post-bootstrap
  uint64_t hits = 0;
  uint64_t fallback_queries = 0;  // misses, served by the fallback transport

  uint64_t snapshot_bytes = 0;       // initial full snapshot per client
  uint64_t update_bytes_total = 0;   // broadcast batches per client
  double update_bytes_per_hour = 0.0;

  std::vector<uint32_t> votes_per_round;
  std::vector<uint32_t> voters_per_round;
  uint64_t ledger_violations = 0;
  uint64_t mixnet_dropped = 0;

  // replica-vs-server digest comparisons after each flushed round
  uint64_t digest_checks = 0;
  uint64_t digest_mismatches = 0;

  // measured inputs for the exposure model
  double exposure_h = 0.0;   // mean hit ratio
  double exposure_qv = 0.0;  // P(hit query is represented in a vote)
  uint32_t exposure_V = 0;   // mean voters per round
  uint32_t exposure_U = 0;   // client population

  uint32_t clients = 0;
  uint64_t duration_s = 0;
  ChurnModel churn;  // the parameters the run used
};

/// Trace-driven protocol simulation. Day one only counts queries; at
/// bootstrap_s the server builds the initial list from the count ranking and
/// broadcasts a snapshot. From then on clients resolve against their replica,
/// misses are charged to the fallback, the server re-queries every list
/// record on its clamped TTL and broadcasts delta batches every ttl_min, and
/// every t_refresh all clients push ballots through a full mix-network round
/// followed by a list refresh. Deterministic given (config, trace).
SimReport run_sim(const SimConfig& config, EventSource& events,
                  const DomainUniverse* universe = nullptr);
SimReport run_sim(const SimConfig& config, std::span<const TraceEvent> events,
                  const DomainUniverse* universe = nullptr);
/// Generate the trace and run against its universe in one go.
SimReport run_sim(const SimConfig& config, const TraceSpec& trace);

/// Update-bandwidth measurement without clients or voting: a fixed list of
/// the universe's first n_popular names under pure churn. Batches flushed
/// during the warmup hours populate the answer pool and are discarded; the
/// measured window encodes every batch both ways.
struct BandwidthReport {
  uint32_t ttl_min = 0;
  size_t n_popular = 0;
  double bytes_per_hour = 0.0;          // pool encoding (the real wire)
  double literal_bytes_per_hour = 0.0;  // same batches, forced literal
  uint64_t batches = 0;
  uint64_t answer_changes = 0;
};
BandwidthReport measure_update_bandwidth(const ChurnModel& churn,
                                         size_t n_popular, uint32_t ttl_min,
                                         uint32_t warmup_hours,
                                         uint32_t measure_hours,
                                         uint32_t domains, uint64_t seed,
                                         double aaaa_fraction = 0.2);

}  // namespace popdns
