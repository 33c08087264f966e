#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "popdns/delta.hpp"
#include "popdns/exposure.hpp"
#include "popdns/mixnet.hpp"
#include "popdns/poplist.hpp"
#include "popdns/sim.hpp"
#include "popdns/trace.hpp"

namespace {

using namespace popdns;

// exit codes: 0 ok, 1 usage, 2 bad input, 3 internal invariant violation
constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kBadInput = 2;
constexpr int kInternal = 3;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

uint64_t parse_u64(const std::string& s, const std::string& key) {
  size_t pos = 0;
  uint64_t v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad value for " + key + ": " + s);
  }
  if (pos != s.size()) throw ConfigError("bad value for " + key + ": " + s);
  return v;
}

double parse_f64(const std::string& s, const std::string& key) {
  size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad value for " + key + ": " + s);
  }
  if (pos != s.size()) throw ConfigError("bad value for " + key + ": " + s);
  return v;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

SimConfig::SealerKind sealer_from_name(const std::string& v) {
  if (v == "box") return SimConfig::SealerKind::box;
  if (v == "fast") return SimConfig::SealerKind::fast;
  if (v == "null") return SimConfig::SealerKind::null;
  throw ConfigError("unknown sealer " + v);
}

/// Flat key=value file mirroring the SimConfig field names; '#' comments.
void load_sim_config(const std::string& path, SimConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    size_t eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected key=value");
    std::string key = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    if (key == "n_popular") config.n_popular = parse_u64(value, key);
    else if (key == "t_refresh") config.t_refresh = uint32_t(parse_u64(value, key));
    else if (key == "ttl_min") config.ttl_min = uint32_t(parse_u64(value, key));
    else if (key == "mix_rounds") config.mix_rounds = uint32_t(parse_u64(value, key));
    else if (key == "v_max") config.v_max = uint32_t(parse_u64(value, key));
    else if (key == "p_vote") config.p_vote = parse_f64(value, key);
    else if (key == "alpha") config.alpha = parse_f64(value, key);
    else if (key == "seed") config.seed = parse_u64(value, key);
    else if (key == "duration_s") config.duration_s = parse_u64(value, key);
    else if (key == "bootstrap_s") config.bootstrap_s = parse_u64(value, key);
    else if (key == "sealer") config.sealer = sealer_from_name(value);
    else if (key == "churn_k") config.churn.k = uint32_t(parse_u64(value, key));
    else if (key == "churn_p_change") config.churn.p_change = parse_f64(value, key);
    else if (key == "churn_seed") config.churn.seed = parse_u64(value, key);
    else if (key == "fallback") {
      if (value == "tor3") config.fallback = SimConfig::Fallback::tor3;
      else if (value == "direct") config.fallback = SimConfig::Fallback::direct;
      else throw ConfigError("unknown fallback " + value);
    } else {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": unknown config key " + key);
    }
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

void write_sim_report(const SimReport& report, const SimConfig& config,
                      const std::string& dir) {
  std::filesystem::create_directories(dir);

  auto hit = open_out(dir + "/hit_ratio.csv");
  hit << "hour,ratio\n";
  for (size_t i = 0; i < report.hourly_hit_ratio.size(); ++i)
    hit << (i + 1) << ',' << fmt(report.hourly_hit_ratio[i]) << '\n';

  auto bw = open_out(dir + "/bandwidth.csv");
  bw << "ttl_min,n_popular,bytes_per_hour\n";
  bw << config.ttl_min << ',' << config.n_popular << ','
     << fmt(report.update_bytes_per_hour) << '\n';

  auto votes = open_out(dir + "/votes.csv");
  votes << "round,votes,voters\n";
  for (size_t i = 0; i < report.votes_per_round.size(); ++i)
    votes << (i + 1) << ',' << report.votes_per_round[i] << ','
          << report.voters_per_round[i] << '\n';

  auto rep = open_out(dir + "/report.csv");
  rep << "key,value\n";
  rep << "mean_hit_ratio," << fmt(report.mean_hit_ratio) << '\n';
  rep << "total_queries," << report.total_queries << '\n';
  rep << "hits," << report.hits << '\n';
  rep << "fallback_queries," << report.fallback_queries << '\n';
  rep << "snapshot_bytes," << report.snapshot_bytes << '\n';
  rep << "update_bytes_total," << report.update_bytes_total << '\n';
  rep << "update_bytes_per_hour," << fmt(report.update_bytes_per_hour) << '\n';
  rep << "ledger_violations," << report.ledger_violations << '\n';
  rep << "mixnet_dropped," << report.mixnet_dropped << '\n';
  rep << "digest_checks," << report.digest_checks << '\n';
  rep << "digest_mismatches," << report.digest_mismatches << '\n';
  rep << "exposure_h," << fmt(report.exposure_h) << '\n';
  rep << "exposure_qv," << fmt(report.exposure_qv) << '\n';
  rep << "exposure_V," << report.exposure_V << '\n';
  rep << "exposure_U," << report.exposure_U << '\n';
  rep << "clients," << report.clients << '\n';
  rep << "duration_s," << report.duration_s << '\n';
  rep << "churn_k," << report.churn.k << '\n';
  rep << "churn_p_change," << fmt(report.churn.p_change) << '\n';
  rep << "churn_seed," << report.churn.seed << '\n';
}

int classify(const Error& e) {
  if (dynamic_cast<const TraceError*>(&e) ||
      dynamic_cast<const ConfigError*>(&e) ||
      dynamic_cast<const NameError*>(&e) ||
      dynamic_cast<const BadMagic*>(&e) ||
      dynamic_cast<const UnsupportedFormat*>(&e) ||
      dynamic_cast<const TruncatedInput*>(&e) ||
      dynamic_cast<const DecompressError*>(&e) ||
      dynamic_cast<const MalformedSnapshot*>(&e) ||
      dynamic_cast<const MalformedDelta*>(&e) ||
      dynamic_cast<const VersionGap*>(&e))
    return kBadInput;
  return kInternal;
}

struct GenTraceArgs {
  TraceSpec spec;
  double hours = 48.0;
  std::string out;
};

int run_gen_trace(const GenTraceArgs& args) {
  TraceSpec spec = args.spec;
  spec.duration_s = uint64_t(args.hours * 3600.0);
  TraceGenerator gen(spec);
  uint64_t n = write_trace(args.out, gen);
  std::cout << "events," << n << "\n";
  return kOk;
}

struct RunSimArgs {
  std::string config_path;
  std::string trace_path;
  std::string out_dir;
  // CLI overrides, applied over the config file
  std::optional<uint64_t> n_popular, seed, duration_s, bootstrap_s;
  std::optional<uint32_t> t_refresh, ttl_min, mix_rounds, v_max;
  std::optional<double> p_vote, alpha;
  std::optional<std::string> sealer;
  // synthetic trace parameters
  std::optional<uint32_t> clients, domains;
  std::optional<double> rate, zipf, cname_frac, aaaa_frac, hours;
  std::optional<uint64_t> trace_seed;
};

int run_run_sim(const RunSimArgs& args) {
  SimConfig config;
  if (!args.config_path.empty()) load_sim_config(args.config_path, config);
  if (args.n_popular) config.n_popular = *args.n_popular;
  if (args.t_refresh) config.t_refresh = *args.t_refresh;
  if (args.ttl_min) config.ttl_min = *args.ttl_min;
  if (args.mix_rounds) config.mix_rounds = *args.mix_rounds;
  if (args.v_max) config.v_max = *args.v_max;
  if (args.p_vote) config.p_vote = *args.p_vote;
  if (args.alpha) config.alpha = *args.alpha;
  if (args.seed) config.seed = *args.seed;
  if (args.hours) config.duration_s = uint64_t(*args.hours * 3600.0);
  if (args.duration_s) config.duration_s = *args.duration_s;
  if (args.bootstrap_s) config.bootstrap_s = *args.bootstrap_s;
  if (args.sealer) config.sealer = sealer_from_name(*args.sealer);

  SimReport report;
  if (!args.trace_path.empty()) {
    TraceFileReader reader(args.trace_path);
    report = run_sim(config, reader);
  } else {
    TraceSpec spec;
    spec.clients = args.clients.value_or(2000);
    spec.rate_per_hour = args.rate.value_or(15.0);
    spec.zipf_s = args.zipf.value_or(1.0);
    spec.domains = args.domains.value_or(1000000);
    spec.cname_fraction = args.cname_frac.value_or(0.15);
    spec.aaaa_fraction = args.aaaa_frac.value_or(0.2);
    spec.seed = args.trace_seed.value_or(config.seed);
    if (config.duration_s == 0)
      throw ConfigError("synthetic traces need --hours or duration_s");
    spec.duration_s = config.duration_s;
    TraceGenerator gen(spec);
    report = run_sim(config, gen, &gen.universe());
  }
  write_sim_report(report, config, args.out_dir);
  std::cout << "mean_hit_ratio," << fmt(report.mean_hit_ratio) << "\n";
  std::cout << "update_bytes_per_hour," << fmt(report.update_bytes_per_hour)
            << "\n";
  return kOk;
}

struct MixRoundArgs {
  uint32_t clients = 5;
  uint32_t votes = 2;
  uint32_t rounds = 3;
  uint64_t seed = 0;
  std::string sealer = "box";
};

int run_mix_round(const MixRoundArgs& args) {
  auto sealer = [&]() -> std::unique_ptr<Sealer> {
    switch (sealer_from_name(args.sealer)) {
      case SimConfig::SealerKind::box: return std::make_unique<BoxSealer>();
      case SimConfig::SealerKind::fast: return std::make_unique<FastSealer>();
      default: return std::make_unique<NullSealer>();
    }
  }();
  Rng master(args.seed);
  Registry registry(hash_mix(args.seed, hash_str("mix-ca")));
  std::vector<MixKeyPair> secrets;
  std::vector<Ballot> ballots(args.clients);
  for (uint32_t c = 0; c < args.clients; ++c) {
    Rng key_rng = master.derive("client-key", c);
    MixKeyPair kp = sealer->keypair(key_rng);
    registry.register_client("client-" + std::to_string(c),
                             registry.certify(kp.pub));
    secrets.push_back(std::move(kp));
    for (uint32_t v = 0; v < args.votes; ++v)
      ballots[c].votes.push_back(Vote{RecordKey{
          parse_domain("q" + std::to_string(v) + ".client" +
                       std::to_string(c) + ".example"),
          QType::A}});
  }
  Rng round_rng = master.derive("mix-round");
  RoundOutcome outcome =
      run_voting_round(ballots, registry, secrets, args.rounds, 10, *sealer,
                       round_rng, /*strict_ledger=*/true);
  std::cout << "metric,value\n";
  std::cout << "clients," << args.clients << "\n";
  std::cout << "relay_rounds," << args.rounds << "\n";
  std::cout << "votes_submitted," << uint64_t(args.clients) * args.votes << "\n";
  std::cout << "votes_delivered," << outcome.votes.size() << "\n";
  std::cout << "dropped," << outcome.dropped << "\n";
  std::cout << "ledger_rows," << outcome.ledger.rows().size() << "\n";
  std::cout << "ledger_ok," << (outcome.violations.empty() ? 1 : 0) << "\n";
  std::cout << "vote,qtype\n";
  for (const Vote& v : outcome.votes)
    std::cout << present_domain(v.key.name) << ','
              << qtype_name(v.key.qtype) << "\n";
  return kOk;
}

struct ExposureArgs {
  std::string scheme = "popdns";
  std::vector<double> c;
  uint64_t users = 10000;
  std::optional<uint64_t> voters;
  double hit_ratio = 0.944;
  uint32_t rounds = 10;
  double qv = 0.3;
  uint64_t monte_carlo = 0;  // 0: closed form
  uint64_t seed = 0;
  std::string out;  // empty: stdout
};

int run_exposure(const ExposureArgs& args) {
  ExposureParams params;
  params.scheme = scheme_from_name(args.scheme);
  params.U = args.users;
  params.V = args.voters.value_or(args.users);
  params.h = args.hit_ratio;
  params.R = args.rounds;
  params.q_v = args.qv;

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!args.out.empty()) {
    file = open_out(args.out);
    out = &file;
  }
  // exposure = P(a single query is attributed to its sender), averaged
  // per query; stderr is 0 for the closed form
  *out << "scheme,c,exposure,stderr\n";
  std::vector<double> cs = args.c.empty() ? std::vector<double>{0.0} : args.c;
  for (double c : cs) {
    params.c = c;
    double exposure, err;
    if (args.monte_carlo > 0) {
      ExposureEstimate est =
          exposure_monte_carlo(params, args.monte_carlo, args.seed);
      exposure = est.exposure;
      err = est.stderr_;
    } else {
      exposure = exposure_closed_form(params);
      err = 0.0;
    }
    *out << args.scheme << ',' << fmt(c) << ',' << fmt(exposure) << ','
         << fmt(err) << "\n";
  }
  return kOk;
}

struct BandwidthArgs {
  uint64_t n_popular = 10000;
  std::vector<uint32_t> ttl_min;
  uint32_t warmup = 4;
  uint32_t hours = 20;
  uint32_t domains = 200000;
  uint64_t seed = 0;
  uint32_t churn_k = 8;
  double churn_p = 0.5;
  std::string out;  // empty: stdout
};

int run_bandwidth(const BandwidthArgs& args) {
  ChurnModel churn;
  churn.k = args.churn_k;
  churn.p_change = args.churn_p;
  churn.seed = args.seed;

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!args.out.empty()) {
    file = open_out(args.out);
    out = &file;
  }
  *out << "ttl_min,n_popular,bytes_per_hour\n";
  std::vector<uint32_t> ttls =
      args.ttl_min.empty() ? std::vector<uint32_t>{60} : args.ttl_min;
  for (uint32_t ttl : ttls) {
    BandwidthReport report =
        measure_update_bandwidth(churn, args.n_popular, ttl, args.warmup,
                                 args.hours, args.domains, args.seed);
    *out << ttl << ',' << args.n_popular << ',' << fmt(report.bytes_per_hour)
         << "\n";
  }
  return kOk;
}

struct SnapshotArgs {
  std::string in;
  std::string make_demo;
  uint32_t domains = 1000;
  uint64_t n_popular = 100;
  uint64_t seed = 0;
  bool dump = false;
};

int run_snapshot(const SnapshotArgs& args) {
  if (!args.make_demo.empty()) {
    DomainUniverse universe(args.domains, 0.15, 0.2, args.seed);
    ChurnModel churn;
    churn.seed = args.seed;
    UpstreamOracle oracle(churn, &universe);
    std::vector<RankedRecord> ranked;
    for (uint32_t i = 0; i < args.n_popular && i < universe.size(); ++i) {
      RecordKey key = universe.key_of(i);
      ResolvedRecord r = *oracle.resolve(key, 0);
      ranked.push_back(RankedRecord{key, r.answer, r.ttl});
    }
    BuildResult result =
        build_list(ranked, oracle.resolver_at(0), args.n_popular);
    std::vector<uint8_t> bytes = serialize_snapshot(result.list);
    auto out = open_out(args.make_demo);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              std::streamsize(bytes.size()));
    std::cout << "bytes," << bytes.size() << "\n";
    return kOk;
  }

  std::ifstream in(args.in, std::ios::binary);
  if (!in) throw ConfigError("cannot open snapshot " + args.in);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  PopularityList list = parse_snapshot(bytes);
  std::cout << "key,value\n";
  std::cout << "bytes," << bytes.size() << "\n";
  std::cout << "version," << list.version() << "\n";
  std::cout << "entries," << list.entry_count() << "\n";
  std::cout << "popular," << list.popular_count() << "\n";
  std::cout << "support," << (list.entry_count() - list.popular_count())
            << "\n";
  std::cout << "pool," << list.pool_size() << "\n";
  std::cout << "digest," << snapshot_digest(list) << "\n";
  if (args.dump) {
    std::cout << "order,name,qtype,ttl,support,answer\n";
    for (uint32_t order = 0; order < list.order_count(); ++order) {
      if (!list.live(order)) continue;
      const ListEntry& e = list.entry_data(order);
      std::cout << order << ',' << present_domain(e.key.name) << ','
                << qtype_name(e.key.qtype) << ',' << e.ttl.value << ','
                << (e.is_cname_support ? 1 : 0) << ','
                << list.pool_at(e.answer).to_string() << "\n";
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"popularity-list DNS privacy toolkit"};
  app.require_subcommand(1);

  GenTraceArgs gen_args;
  auto* gen = app.add_subcommand("gen-trace", "generate a synthetic query trace");
  gen->add_option("--clients", gen_args.spec.clients, "number of clients");
  gen->add_option("--hours", gen_args.hours, "trace length in hours");
  gen->add_option("--rate", gen_args.spec.rate_per_hour, "queries per client per hour");
  gen->add_option("--zipf", gen_args.spec.zipf_s, "zipf exponent");
  gen->add_option("--domains", gen_args.spec.domains, "domain universe size");
  gen->add_option("--cname-frac", gen_args.spec.cname_fraction, "alias fraction");
  gen->add_option("--aaaa-frac", gen_args.spec.aaaa_fraction, "AAAA fraction");
  gen->add_option("--seed", gen_args.spec.seed, "random seed");
  gen->add_option("--out", gen_args.out, "output CSV path")->required();

  RunSimArgs sim_args;
  auto* sim = app.add_subcommand("run-sim", "run the trace-driven simulation");
  sim->add_option("--config", sim_args.config_path, "key=value config file");
  sim->add_option("--trace", sim_args.trace_path, "trace CSV (default: synthetic)");
  sim->add_option("--out-dir", sim_args.out_dir, "report directory")->required();
  sim->add_option("--n-popular", sim_args.n_popular, "list size");
  sim->add_option("--t-refresh", sim_args.t_refresh, "voting period, seconds");
  sim->add_option("--ttl-min", sim_args.ttl_min, "update flush cadence, seconds");
  sim->add_option("--mix-rounds", sim_args.mix_rounds, "onion path length");
  sim->add_option("--v-max", sim_args.v_max, "votes per ballot");
  sim->add_option("--p-vote", sim_args.p_vote, "per-query vote probability");
  sim->add_option("--alpha", sim_args.alpha, "popularity smoothing weight");
  sim->add_option("--seed", sim_args.seed, "random seed");
  sim->add_option("--hours", sim_args.hours, "simulated hours");
  sim->add_option("--duration", sim_args.duration_s, "simulated seconds");
  sim->add_option("--bootstrap", sim_args.bootstrap_s, "bootstrap seconds");
  sim->add_option("--sealer", sim_args.sealer, "box|fast|null");
  sim->add_option("--clients", sim_args.clients, "synthetic: client count");
  sim->add_option("--rate", sim_args.rate, "synthetic: queries per client per hour");
  sim->add_option("--zipf", sim_args.zipf, "synthetic: zipf exponent");
  sim->add_option("--domains", sim_args.domains, "synthetic: universe size");
  sim->add_option("--cname-frac", sim_args.cname_frac, "synthetic: alias fraction");
  sim->add_option("--aaaa-frac", sim_args.aaaa_frac, "synthetic: AAAA fraction");
  sim->add_option("--trace-seed", sim_args.trace_seed, "synthetic: trace seed");

  MixRoundArgs mix_args;
  auto* mix = app.add_subcommand("mix-round", "run one anonymized voting round");
  mix->add_option("--clients", mix_args.clients, "number of clients");
  mix->add_option("--votes-per-client", mix_args.votes, "votes per ballot");
  mix->add_option("--rounds", mix_args.rounds, "relay rounds");
  mix->add_option("--seed", mix_args.seed, "random seed");
  mix->add_option("--sealer", mix_args.sealer, "box|fast|null");

  ExposureArgs exp_args;
  auto* exp = app.add_subcommand("exposure", "evaluate the exposure model");
  exp->add_option("--scheme", exp_args.scheme, "direct|single_relay|tor3|popdns");
  exp->add_option("--c", exp_args.c, "collusion rate (repeatable)");
  exp->add_option("--users", exp_args.users, "user population U");
  exp->add_option("--voters", exp_args.voters, "voters per round V (default U)");
  exp->add_option("--hit-ratio", exp_args.hit_ratio, "hit ratio h");
  exp->add_option("--rounds", exp_args.rounds, "mix path length R");
  exp->add_option("--qv", exp_args.qv, "vote representation q_v");
  exp->add_option("--monte-carlo", exp_args.monte_carlo, "trials (0: closed form)");
  exp->add_option("--seed", exp_args.seed, "random seed");
  exp->add_option("--out", exp_args.out, "output CSV (default stdout)");

  BandwidthArgs bw_args;
  auto* bw = app.add_subcommand("bandwidth", "measure update bandwidth under churn");
  bw->add_option("--n-popular", bw_args.n_popular, "list size");
  bw->add_option("--ttl-min", bw_args.ttl_min, "flush cadence, seconds (repeatable)");
  bw->add_option("--warmup", bw_args.warmup, "warmup hours");
  bw->add_option("--hours", bw_args.hours, "measured hours");
  bw->add_option("--domains", bw_args.domains, "universe size");
  bw->add_option("--seed", bw_args.seed, "churn seed");
  bw->add_option("--churn-k", bw_args.churn_k, "answers per record");
  bw->add_option("--churn-p", bw_args.churn_p, "flip probability per expiry");
  bw->add_option("--out", bw_args.out, "output CSV (default stdout)");

  SnapshotArgs snap_args;
  auto* snap = app.add_subcommand("snapshot", "inspect or build snapshot files");
  snap->add_option("--in", snap_args.in, "snapshot file to inspect");
  snap->add_option("--make-demo", snap_args.make_demo, "write a demo snapshot here");
  snap->add_option("--domains", snap_args.domains, "demo universe size");
  snap->add_option("--n-popular", snap_args.n_popular, "demo list size");
  snap->add_option("--seed", snap_args.seed, "demo seed");
  snap->add_flag("--dump", snap_args.dump, "dump entries");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) return run_gen_trace(gen_args);
    if (sim->parsed()) return run_run_sim(sim_args);
    if (mix->parsed()) return run_mix_round(mix_args);
    if (exp->parsed()) return run_exposure(exp_args);
    if (bw->parsed()) return run_bandwidth(bw_args);
    if (snap->parsed()) {
      if (snap_args.in.empty() && snap_args.make_demo.empty())
        throw ConfigError("snapshot needs --in or --make-demo");
      return run_snapshot(snap_args);
    }
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return classify(e);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}
