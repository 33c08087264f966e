#include "popdns/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <utility>

#include "popdns/delta.hpp"
#include "popdns/mixnet.hpp"
#include "popdns/rng.hpp"
#include "popdns/voting.hpp"

namespace popdns {

namespace {

const uint64_t kTtlTag = hash_str("churn-ttl");
const uint64_t kFlipTag = hash_str("churn-flip");
const uint64_t kStepTag = hash_str("churn-step");
const uint64_t kMemberTag = hash_str("churn-member");
const uint64_t kAddrTag = hash_str("churn-addr");

double unit_draw(uint64_t h) { return double(h >> 11) * 0x1.0p-53; }

void validate_churn(const ChurnModel& m) {
  if (m.k < 1) throw ConfigError("churn universe size k must be >= 1");
  if (m.p_change < 0.0 || m.p_change > 1.0)
    throw ConfigError("p_change must be in [0, 1]");
  if (m.ttl_weights.empty()) throw ConfigError("churn needs TTL weights");
  for (const auto& [ttl, w] : m.ttl_weights) {
    if (ttl == 0) throw ConfigError("churn TTLs must be >= 1 second");
    if (w <= 0.0) throw ConfigError("churn TTL weights must be positive");
  }
}

}  // namespace

/// Per-record walk state. epoch counts whole TTL periods since time zero;
/// flips happen at epoch boundaries. name_hash folds in the query type, so
/// the A and AAAA records of one name drift independently.
struct UpstreamOracle::Rec {
  uint32_t ttl = 1;
  bool alias = false;
  QType qtype = QType::A;
  DomainName target;  // alias only
  uint64_t name_hash = 0;
  uint64_t epoch = 0;
  uint32_t member = 0;
  uint64_t flips = 0;
};

namespace {

void advance_walk(const ChurnModel& m, UpstreamOracle::Rec& rec,
                  uint64_t now_s) {
  uint64_t e = now_s / rec.ttl;
  if (e <= rec.epoch) return;
  if (rec.alias || m.k < 2 || m.p_change <= 0.0) {
    rec.epoch = e;
    return;
  }
  while (rec.epoch < e) {
    ++rec.epoch;
    if (unit_draw(hash_mix(rec.name_hash, kFlipTag, rec.epoch)) < m.p_change) {
      rec.member = (rec.member + 1 +
                    uint32_t(hash_mix(rec.name_hash, kStepTag, rec.epoch) %
                             uint64_t(m.k - 1))) %
                   m.k;
      ++rec.flips;
    }
  }
}

}  // namespace

UpstreamOracle::UpstreamOracle(ChurnModel model, const DomainUniverse* universe)
    : model_(std::move(model)), universe_(universe) {
  validate_churn(model_);
  double total = 0.0;
  for (const auto& [ttl, w] : model_.ttl_weights)
    ttl_cumulative_.push_back(total += w);
}

UpstreamOracle::~UpstreamOracle() = default;
UpstreamOracle::UpstreamOracle(UpstreamOracle&&) noexcept = default;
UpstreamOracle& UpstreamOracle::operator=(UpstreamOracle&&) noexcept = default;

uint32_t UpstreamOracle::ttl_of(const DomainName& name) const {
  uint64_t h = hash_mix(hash_str(name.to_string(), model_.seed), kTtlTag);
  double u = unit_draw(h) * ttl_cumulative_.back();
  auto it =
      std::upper_bound(ttl_cumulative_.begin(), ttl_cumulative_.end(), u);
  if (it == ttl_cumulative_.end()) --it;
  return model_.ttl_weights[size_t(it - ttl_cumulative_.begin())].first;
}

UpstreamOracle::Rec* UpstreamOracle::touch(const RecordKey& key) {
  std::string id = key.name.to_string();
  id.push_back('/');
  id.append(qtype_name(key.qtype));
  auto it = states_.find(id);
  if (it != states_.end()) return it->second.get();

  auto rec = std::make_unique<Rec>();
  rec->ttl = ttl_of(key.name);
  rec->qtype = key.qtype;
  rec->name_hash = hash_mix(hash_str(key.name.to_string(), model_.seed),
                            uint64_t(key.qtype));
  rec->member = uint32_t(hash_mix(rec->name_hash, kMemberTag) % model_.k);
  if (universe_ && key.qtype != QType::CNAME) {
    if (auto idx = universe_->index_of(key.name);
        idx && universe_->is_alias(*idx)) {
      rec->alias = true;
      rec->target = universe_->name_of(universe_->alias_target(*idx));
    }
  }
  Rec* raw = rec.get();
  states_.emplace(std::move(id), std::move(rec));
  return raw;
}

uint64_t UpstreamOracle::advance(Rec* rec, uint64_t now_s) {
  advance_walk(model_, *rec, now_s);
  return rec->flips;
}

ResolvedRecord UpstreamOracle::read(Rec* rec, uint64_t now_s) {
  advance_walk(model_, *rec, now_s);
  TtlSeconds ttl(rec->ttl);
  if (rec->alias) return {RecordAnswer::cname(rec->target), ttl};
  if (rec->qtype == QType::CNAME)
    throw ConfigError("upstream oracle serves only A and AAAA queries");
  if (rec->qtype == QType::AAAA) {
    uint64_t h1 = hash_mix(rec->name_hash, kAddrTag, rec->member, 1);
    uint64_t h2 = hash_mix(rec->name_hash, kAddrTag, rec->member, 2);
    Ipv6 v;
    for (int i = 0; i < 8; ++i) v[size_t(i)] = uint8_t(h1 >> (8 * i));
    for (int i = 0; i < 8; ++i) v[size_t(8 + i)] = uint8_t(h2 >> (8 * i));
    return {RecordAnswer::aaaa(v), ttl};
  }
  uint64_t h = hash_mix(rec->name_hash, kAddrTag, rec->member, 0);
  return {RecordAnswer::a(Ipv4{uint8_t(h), uint8_t(h >> 8), uint8_t(h >> 16),
                               uint8_t(h >> 24)}),
          ttl};
}

std::optional<ResolvedRecord> UpstreamOracle::resolve(const RecordKey& key,
                                                      uint64_t now_s) {
  return read(touch(key), now_s);
}

CnameResolver UpstreamOracle::resolver_at(uint64_t now_s) {
  return [this, now_s](const DomainName& name,
                       QType qtype) -> std::optional<ResolvedRecord> {
    return resolve(RecordKey{name, qtype}, now_s);
  };
}

uint64_t UpstreamOracle::flips_until(const RecordKey& key, uint64_t now_s) {
  Rec* rec = touch(key);
  advance_walk(model_, *rec, now_s);
  return rec->flips;
}

std::optional<RecordAnswer> churn_step(UpstreamOracle& oracle,
                                       const RecordKey& key, uint64_t now_s) {
  UpstreamOracle::Rec* rec = oracle.touch(key);
  uint64_t before = rec->flips;
  ResolvedRecord r = oracle.read(rec, now_s);
  if (rec->flips == before) return std::nullopt;
  return r.answer;
}

namespace {

/// Periodic per-second buckets: an order inserted at time t with period P
/// fires at t + P, t + 2P, ... Entries whose slot died are dropped lazily
/// the next time their cell comes around.
struct RequeryWheel {
  struct Ring {
    uint32_t period = 0;
    std::vector<std::vector<uint32_t>> cells;
  };
  std::vector<Ring> rings;
  std::vector<uint32_t> fired;

  void insert(uint32_t order, uint32_t period, uint64_t now_s) {
    Ring* ring = nullptr;
    for (auto& r : rings)
      if (r.period == period) ring = &r;
    if (!ring) {
      rings.push_back(Ring{period, {}});
      ring = &rings.back();
      ring->cells.resize(period);
    }
    ring->cells[now_s % period].push_back(order);
  }

  template <typename Live>
  const std::vector<uint32_t>& tick(uint64_t t, Live&& live) {
    fired.clear();
    for (auto& ring : rings) {
      auto& cell = ring.cells[t % ring.period];
      if (cell.empty()) continue;
      size_t w = 0;
      for (uint32_t order : cell)
        if (live(order)) cell[w++] = order;
      cell.resize(w);
      fired.insert(fired.end(), cell.begin(), cell.end());
    }
    // ascending order keeps consecutive deltas close together, which the
    // batch compression rewards
    std::sort(fired.begin(), fired.end());
    return fired;
  }
};

std::unique_ptr<Sealer> make_sealer(SimConfig::SealerKind kind) {
  switch (kind) {
    case SimConfig::SealerKind::box:
      return std::make_unique<BoxSealer>();
    case SimConfig::SealerKind::fast:
      return std::make_unique<FastSealer>();
    case SimConfig::SealerKind::null:
      return std::make_unique<NullSealer>();
  }
  throw ConfigError("unknown sealer kind");
}

void validate_config(const SimConfig& c) {
  if (c.n_popular == 0) throw ConfigError("n_popular must be >= 1");
  if (c.t_refresh == 0) throw ConfigError("t_refresh must be >= 1 second");
  if (c.ttl_min == 0) throw ConfigError("ttl_min must be >= 1 second");
  if (c.mix_rounds == 0) throw ConfigError("mix path needs >= 1 round");
  if (c.v_max == 0) throw ConfigError("v_max must be >= 1");
  if (c.p_vote < 0.0 || c.p_vote > 1.0)
    throw ConfigError("p_vote must be in [0, 1]");
  if (c.alpha <= 0.0 || c.alpha > 1.0)
    throw ConfigError("alpha must be in (0, 1]");
  if (c.bootstrap_s == 0) throw ConfigError("bootstrap window must be >= 1");
  if (c.duration_s != 0 && c.duration_s <= c.bootstrap_s)
    throw ConfigError("duration must exceed the bootstrap window");
  validate_churn(c.churn);
}

struct SimRunner {
  const SimConfig& config;
  UpstreamOracle oracle;
  Rng master;
  RoundConfig round_config;
  std::unique_ptr<Sealer> sealer;

  // server + replica state, live from bootstrap_s on
  bool built = false;
  PopularityList current;  // live server view
  PopularityList base;     // broadcast state, advanced batch by batch
  PopularityList replica;  // client copy, fed only with encoded bytes
  UpdateScheduler scheduler;
  RequeryWheel wheel;
  std::vector<UpstreamOracle::Rec*> rec_of;  // by order
  std::vector<uint64_t> flips_seen;          // by order, as of registration

  std::map<RecordKey, uint32_t> day_one_counts;
  WeightTable weights;

  std::optional<Registry> registry;
  std::vector<MixKeyPair> secrets;
  std::vector<std::vector<std::pair<RecordKey, bool>>> histories;
  ClientId population = 0;
  uint64_t round_index = 0;

  SimReport report;
  uint64_t cursor = 0;
  uint64_t hour_queries = 0;
  uint64_t hour_hits = 0;
  uint64_t qv_hits = 0;
  uint64_t qv_represented = 0;

  SimRunner(const SimConfig& cfg, const DomainUniverse* universe)
      : config(cfg),
        oracle(cfg.churn, universe),
        master(cfg.seed),
        round_config{cfg.t_refresh, cfg.v_max, cfg.p_vote, cfg.alpha,
                     cfg.n_popular},
        sealer(make_sealer(cfg.sealer)) {}

  SimReport run(EventSource& events) {
    validate_config(config);
    uint64_t end = config.duration_s;
    uint64_t last_event_s = 0;
    for (std::optional<TraceEvent> ev = events.next(); ev;
         ev = events.next()) {
      uint64_t es = ev->t_ms / 1000;
      if (end != 0 && es >= end) continue;  // trace outlives the run
      advance_to(es);
      last_event_s = es;
      handle_event(es, *ev);
    }
    uint64_t final_end = end != 0 ? end : last_event_s + 1;
    advance_to(final_end);
    if (built) {
      flush(final_end);
      check_digest();
    }
    finish(final_end);
    return std::move(report);
  }

  void advance_to(uint64_t s) {
    while (cursor < s) {
      ++cursor;
      tick(cursor);
    }
  }

  double t_wheel = 0, t_requery = 0, t_flush = 0, t_round = 0, t_event = 0;
  static double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }

  void tick(uint64_t t) {
    if (t == config.bootstrap_s) {
      build_initial(t);
      return;
    }
    if (!built) return;
    {
      double a = now_ms();
      for (uint32_t order :
           wheel.tick(t, [&](uint32_t o) { return current.live(o); }))
        requery(order, t);
      t_wheel += now_ms() - a;
    }
    if (scheduler.due(t)) flush(t);
    uint64_t since = t - config.bootstrap_s;
    if (since > 0 && since % 86400 == 0) daily_maintenance();
    if (since > 0 && since % 3600 == 0) push_hour();
    if (since > 0 && since % config.t_refresh == 0) voting_round(t);
  }

  void handle_event(uint64_t es, const TraceEvent& e) {
    struct Scope {
      double& acc, start;
      Scope(double& a) : acc(a), start(now_ms()) {}
      ~Scope() { acc += now_ms() - start; }
    } scope(t_event);
    if (e.client >= population) population = e.client + 1;
    if (es < config.bootstrap_s) {
      ++day_one_counts[e.key];
      return;
    }
    if (!built) return;
    ++report.total_queries;
    ++hour_queries;
    bool hit = replica.lookup(e.key).hit();
    if (hit) {
      ++report.hits;
      ++hour_hits;
    } else {
      ++report.fallback_queries;
    }
    if (histories.size() < population) histories.resize(population);
    histories[e.client].emplace_back(e.key, hit);
  }

  void build_initial(uint64_t t) {
    std::vector<std::pair<RecordKey, uint32_t>> by_count(
        day_one_counts.begin(), day_one_counts.end());
    // map order is ascending key, so equal counts tie-break lexicographically
    std::stable_sort(by_count.begin(), by_count.end(),
                     [](const auto& a, const auto& b) {
                       return a.second > b.second;
                     });
    std::vector<RankedRecord> ranked;
    ranked.reserve(std::min(by_count.size(), config.n_popular));
    for (const auto& [key, n] : by_count) {
      if (ranked.size() == config.n_popular) break;
      ResolvedRecord r = *oracle.resolve(key, t);
      ranked.push_back(RankedRecord{key, r.answer, r.ttl});
    }
    BuildResult result =
        build_list(ranked, oracle.resolver_at(t), config.n_popular);

    std::vector<uint8_t> snapshot = serialize_snapshot(result.list);
    report.snapshot_bytes = snapshot.size();
    base = parse_snapshot(snapshot);
    replica = parse_snapshot(snapshot);
    current = base;

    weights.round_index = 0;
    for (const auto& [key, n] : day_one_counts)
      weights.weights.emplace(key, config.alpha * double(n));
    day_one_counts.clear();

    scheduler = UpdateScheduler(TtlSeconds(config.ttl_min), t);
    rec_of.assign(current.order_count(), nullptr);
    flips_seen.assign(current.order_count(), 0);
    for (uint32_t order = 0; order < current.order_count(); ++order)
      if (current.live(order)) register_requery(order, t);
    built = true;
  }

  void register_requery(uint32_t order, uint64_t t) {
    const ListEntry& entry = current.entry_data(order);
    rec_of[order] = oracle.touch(entry.key);
    flips_seen[order] = rec_of[order]->flips;
    wheel.insert(order, std::max(entry.ttl.value, config.ttl_min), t);
  }

  void requery(uint32_t order, uint64_t t) {
    UpstreamOracle::Rec* rec = rec_of[order];
    if (rec->alias) return;  // alias mappings never drift
    if (oracle.advance(rec, t) == flips_seen[order]) return;
    flips_seen[order] = rec->flips;
    ResolvedRecord r = oracle.read(rec, t);
    const ListEntry& entry = current.entry_data(order);
    if (r.answer == current.pool_at(entry.answer)) return;
    current.set_answer(order, current.pool_intern(r.answer));
    scheduler.add(AnswerChange{order, RelRef::literal(r.answer)});
  }

  void flush(uint64_t t) {
    double a = now_ms();
    auto batch = scheduler.flush(t, base.version());
    if (!batch) return;
    std::vector<uint8_t> bytes = encode_batch(base, *batch);
    report.update_bytes_total += bytes.size();
    UpdateBatch decoded = decode_batch(bytes);
    apply_batch_inplace(base, decoded);
    apply_batch_inplace(replica, decoded);
    current.set_version(base.version());
    t_flush += now_ms() - a;
  }

  void push_hour() {
    report.hourly_hit_ratio.push_back(
        hour_queries ? double(hour_hits) / double(hour_queries) : 0.0);
    hour_queries = hour_hits = 0;
  }

  void check_digest() {
    if (scheduler.pending_count() != 0) return;  // replica legitimately lags
    ++report.digest_checks;
    if (snapshot_digest(current) != snapshot_digest(replica))
      ++report.digest_mismatches;
  }

  void ensure_registry() {
    if (!registry) registry.emplace(hash_mix(config.seed, hash_str("mix-ca")));
    while (registry->size() < population) {
      ClientId next = ClientId(registry->size());
      Rng key_rng = master.derive("client-key", next);
      MixKeyPair kp = sealer->keypair(key_rng);
      Certificate cert = registry->certify(kp.pub);
      registry->register_client("sim-client-" + std::to_string(next), cert);
      secrets.push_back(std::move(kp));
    }
    if (registry->size() < config.mix_rounds + 1)
      throw ConfigError("mix path of " + std::to_string(config.mix_rounds) +
                        " rounds needs more clients than " +
                        std::to_string(registry->size()));
  }

  /// Once a simulated day: verify the replica against the served list and
  /// drop the answer-pool garbage churn has accumulated on every copy.
  /// Base and replica compact together so their pool coordinates stay shared.
  void daily_maintenance() {
    double m0 = now_ms();
    check_digest();
    base.compact_pool();
    replica.compact_pool();
    current.compact_pool();
    t_digest += now_ms() - m0;
  }

  double t_digest = 0, t_ballot = 0, t_mix = 0, t_weights = 0, t_refresh = 0,
         t_swap = 0;
  uint64_t n_refresh_deltas = 0;
  void voting_round(uint64_t t) {
    struct Scope {
      double& acc, start;
      Scope(double& a) : acc(a), start(now_ms()) {}
      ~Scope() { acc += now_ms() - start; }
    } scope(t_round);
    ensure_registry();
    if (histories.size() < population) histories.resize(population);
    double m1 = now_ms();

    std::vector<Ballot> ballots(population);
    Rng round_rng = master.derive("ballot-round", round_index);
    uint32_t voters = 0;
    std::vector<RecordKey> window;
    for (ClientId c = 0; c < population; ++c) {
      auto& hist = histories[c];
      window.clear();
      window.reserve(hist.size());
      for (const auto& [key, hit] : hist) window.push_back(key);
      Rng client_rng = round_rng.derive("client", c);
      ballots[c] = generate_ballot(window, round_config, client_rng);
      if (!ballots[c].votes.empty()) ++voters;
      for (const auto& [key, hit] : hist) {
        if (!hit) continue;
        ++qv_hits;
        for (const auto& v : ballots[c].votes)
          if (v.key == key) {
            ++qv_represented;
            break;
          }
      }
      hist.clear();
    }

    double m2 = now_ms();
    t_ballot += m2 - m1;
    Rng mix_rng = master.derive("mix-round", round_index);
    RoundOutcome outcome =
        run_voting_round(ballots, *registry, secrets, config.mix_rounds,
                         config.v_max, *sealer, mix_rng, /*strict=*/false);
    report.votes_per_round.push_back(uint32_t(outcome.votes.size()));
    report.voters_per_round.push_back(voters);
    report.ledger_violations += outcome.violations.size();
    report.mixnet_dropped += outcome.dropped;
    double m3 = now_ms();
    t_mix += m3 - m2;

    std::map<RecordKey, uint32_t> counts;
    for (const Vote& v : outcome.votes) ++counts[v.key];
    weights = update_weights(std::move(weights), counts, round_config);
    double m4 = now_ms();
    t_weights += m4 - m3;

    UpdateBatch refresh =
        plan_refresh(weights, current, oracle.resolver_at(t), round_config);
    double m5 = now_ms();
    t_refresh += m5 - m4;
    n_refresh_deltas += refresh.deltas.size();
    size_t old_orders = current.order_count();
    apply_batch_inplace(current, refresh);
    current.set_version(base.version());
    for (Delta& d : refresh.deltas) scheduler.add(std::move(d));
    rec_of.resize(current.order_count(), nullptr);
    flips_seen.resize(current.order_count(), 0);
    for (uint32_t order = uint32_t(old_orders);
         order < current.order_count(); ++order)
      if (current.live(order)) register_requery(order, t);
    t_swap += now_ms() - m5;
    ++round_index;
  }

  void finish(uint64_t final_end) {
    if (std::getenv("SIM_PROFILE"))
      std::fprintf(stderr,
                   "profile: wheel=%.0fms requery=%.0fms flush=%.0fms "
                   "rounds=%.0fms events=%.0fms | digest=%.0f ballot=%.0f "
                   "mix=%.0f weights=%.0f refresh=%.0f swap=%.0f | "
                   "rdeltas=%llu orders=%zu wkeys=%zu pool=%zu\n",
                   t_wheel, t_requery, t_flush, t_round, t_event, t_digest,
                   t_ballot, t_mix, t_weights, t_refresh, t_swap,
                   (unsigned long long)n_refresh_deltas, current.order_count(),
                   weights.weights.size(), base.pool_size());
    report.mean_hit_ratio =
        report.total_queries
            ? double(report.hits) / double(report.total_queries)
            : 0.0;
    if (final_end > config.bootstrap_s && report.update_bytes_total)
      report.update_bytes_per_hour = double(report.update_bytes_total) *
                                     3600.0 /
                                     double(final_end - config.bootstrap_s);
    report.exposure_h = report.mean_hit_ratio;
    report.exposure_qv =
        qv_hits ? double(qv_represented) / double(qv_hits) : 0.0;
    if (!report.voters_per_round.empty()) {
      double sum = 0.0;
      for (uint32_t v : report.voters_per_round) sum += v;
      report.exposure_V = uint32_t(
          std::llround(sum / double(report.voters_per_round.size())));
    }
    report.exposure_U = population;
    report.clients = population;
    report.duration_s = final_end;
    report.churn = config.churn;
  }
};

}  // namespace

SimReport run_sim(const SimConfig& config, EventSource& events,
                  const DomainUniverse* universe) {
  SimRunner runner(config, universe);
  return runner.run(events);
}

SimReport run_sim(const SimConfig& config, std::span<const TraceEvent> events,
                  const DomainUniverse* universe) {
  VectorSource source(events);
  return run_sim(config, source, universe);
}

SimReport run_sim(const SimConfig& config, const TraceSpec& trace) {
  TraceGenerator gen(trace);
  return run_sim(config, gen, &gen.universe());
}

BandwidthReport measure_update_bandwidth(const ChurnModel& churn,
                                         size_t n_popular, uint32_t ttl_min,
                                         uint32_t warmup_hours,
                                         uint32_t measure_hours,
                                         uint32_t domains, uint64_t seed,
                                         double aaaa_fraction) {
  if (n_popular == 0) throw ConfigError("n_popular must be >= 1");
  if (ttl_min == 0) throw ConfigError("ttl_min must be >= 1 second");
  if (measure_hours == 0) throw ConfigError("measurement window is empty");
  if (uint64_t(n_popular) > domains)
    throw ConfigError("universe smaller than the list");

  // churn only, no aliases: every entry is an address record
  DomainUniverse universe(domains, 0.0, aaaa_fraction, seed);
  UpstreamOracle oracle(churn, &universe);

  std::vector<RankedRecord> ranked;
  ranked.reserve(n_popular);
  for (uint32_t i = 0; i < n_popular; ++i) {
    RecordKey key = universe.key_of(i);
    ResolvedRecord r = *oracle.resolve(key, 0);
    ranked.push_back(RankedRecord{key, r.answer, r.ttl});
  }
  BuildResult result = build_list(ranked, oracle.resolver_at(0), n_popular);
  PopularityList base = parse_snapshot(serialize_snapshot(result.list));
  PopularityList current = base;

  UpdateScheduler scheduler{TtlSeconds(ttl_min), 0};
  RequeryWheel wheel;
  std::vector<UpstreamOracle::Rec*> rec_of(current.order_count(), nullptr);
  std::vector<uint64_t> flips_seen(current.order_count(), 0);
  for (uint32_t order = 0; order < current.order_count(); ++order) {
    const ListEntry& entry = current.entry_data(order);
    rec_of[order] = oracle.touch(entry.key);
    flips_seen[order] = rec_of[order]->flips;
    wheel.insert(order, std::max(entry.ttl.value, ttl_min), 0);
  }

  BandwidthReport report;
  report.ttl_min = ttl_min;
  report.n_popular = n_popular;
  uint64_t warmup_end = uint64_t(warmup_hours) * 3600;
  uint64_t end = warmup_end + uint64_t(measure_hours) * 3600;
  uint64_t pooled_bytes = 0;
  uint64_t literal_bytes = 0;

  for (uint64_t t = 1; t <= end; ++t) {
    for (uint32_t order : wheel.tick(t, [](uint32_t) { return true; })) {
      UpstreamOracle::Rec* rec = rec_of[order];
      if (oracle.advance(rec, t) == flips_seen[order]) continue;
      flips_seen[order] = rec->flips;
      ResolvedRecord r = oracle.read(rec, t);
      const ListEntry& entry = current.entry_data(order);
      if (r.answer == current.pool_at(entry.answer)) continue;
      current.set_answer(order, current.pool_intern(r.answer));
      scheduler.add(AnswerChange{order, RelRef::literal(r.answer)});
    }
    if (!scheduler.due(t)) continue;
    auto batch = scheduler.flush(t, base.version());
    if (!batch) continue;
    std::vector<uint8_t> bytes = encode_batch(base, *batch);
    if (t > warmup_end) {
      pooled_bytes += bytes.size();
      literal_bytes += encode_batch(base, *batch, /*force_literal=*/true).size();
      ++report.batches;
      report.answer_changes += batch->deltas.size();
    }
    apply_batch_inplace(base, bytes);
    current.set_version(base.version());
  }

  report.bytes_per_hour = double(pooled_bytes) / double(measure_hours);
  report.literal_bytes_per_hour =
      double(literal_bytes) / double(measure_hours);
  return report;
}

}  // namespace popdns
