#include "popdns/trace.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <string>

#include "popdns/errors.hpp"

namespace popdns {

namespace {

// attribute tags for counter-based universe draws
const uint64_t kAliasTag = hash_str("universe-alias");
const uint64_t kTargetTag = hash_str("universe-target");
const uint64_t kQtypeTag = hash_str("universe-qtype");

double unit_draw(uint64_t h) { return double(h >> 11) * 0x1.0p-53; }

constexpr uint32_t kZoneMod = 997;

}  // namespace

DomainUniverse::DomainUniverse(uint32_t domains, double cname_fraction,
                               double aaaa_fraction, uint64_t seed)
    : domains_(domains),
      cname_fraction_(cname_fraction),
      aaaa_fraction_(aaaa_fraction),
      seed_(seed) {
  if (domains == 0) throw ConfigError("domain universe must not be empty");
  if (cname_fraction < 0.0 || cname_fraction > 0.9)
    throw ConfigError("cname fraction must be in [0, 0.9]");
  if (aaaa_fraction < 0.0 || aaaa_fraction > 1.0)
    throw ConfigError("aaaa fraction must be in [0, 1]");
  if (cname_fraction > 0.0 && domains < 2)
    throw ConfigError("aliases need at least two domains");
}

DomainName DomainUniverse::name_of(uint32_t index) const {
  if (index >= domains_) throw ConfigError("domain index out of range");
  return DomainName::from_labels({"example", "z" + std::to_string(index % kZoneMod),
                                  "h" + std::to_string(index)});
}

std::optional<uint32_t> DomainUniverse::index_of(const DomainName& name) const {
  const auto& labels = name.labels();
  if (labels.size() != 3 || labels[0] != "example") return std::nullopt;
  if (labels[1].size() < 2 || labels[1][0] != 'z') return std::nullopt;
  if (labels[2].size() < 2 || labels[2][0] != 'h') return std::nullopt;
  uint64_t index = 0;
  for (size_t i = 1; i < labels[2].size(); ++i) {
    char c = labels[2][i];
    if (c < '0' || c > '9') return std::nullopt;
    index = index * 10 + uint64_t(c - '0');
    if (index >= domains_) return std::nullopt;
  }
  if (name_of(uint32_t(index)) != name) return std::nullopt;
  return uint32_t(index);
}

bool DomainUniverse::is_alias(uint32_t index) const {
  // index 0 is pinned non-alias so alias_target always has somewhere to land
  if (index == 0) return false;
  return unit_draw(hash_mix(seed_, kAliasTag, index)) < cname_fraction_;
}

uint32_t DomainUniverse::alias_target(uint32_t index) const {
  uint32_t t = uint32_t(hash_mix(seed_, kTargetTag, index) % domains_);
  while (t == index || is_alias(t)) t = (t + 1) % domains_;
  return t;
}

QType DomainUniverse::qtype_of(uint32_t index) const {
  return unit_draw(hash_mix(seed_, kQtypeTag, index)) < aaaa_fraction_
             ? QType::AAAA
             : QType::A;
}

RecordKey DomainUniverse::key_of(uint32_t index) const {
  return RecordKey{name_of(index), qtype_of(index)};
}

ZipfSampler::ZipfSampler(uint32_t n, double s) {
  if (n == 0) throw ConfigError("zipf universe must not be empty");
  if (s < 0.0) throw ConfigError("zipf exponent must be >= 0");
  cumulative_.resize(n);
  double total = 0.0;
  for (uint32_t i = 0; i < n; ++i) {
    total += s == 1.0 ? 1.0 / double(i + 1) : std::pow(double(i + 1), -s);
    cumulative_[i] = total;
  }
}

uint32_t ZipfSampler::sample(Rng& rng) const {
  double u = rng.uniform01() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return uint32_t(it - cumulative_.begin());
}

double ZipfSampler::top_mass(uint32_t k) const {
  if (k == 0) return 0.0;
  k = std::min(k, uint32_t(cumulative_.size()));
  return cumulative_[k - 1] / cumulative_.back();
}

TraceGenerator::TraceGenerator(const TraceSpec& spec)
    : spec_(spec),
      universe_(spec.domains, spec.cname_fraction, spec.aaaa_fraction,
                spec.seed),
      zipf_(spec.domains, spec.zipf_s) {
  if (spec.rate_per_hour < 0.0) throw ConfigError("rate must be >= 0");
  Rng master(spec.seed);
  client_rng_.reserve(spec.clients);
  for (uint32_t c = 0; c < spec.clients; ++c)
    client_rng_.push_back(master.derive("trace-client", c));
  if (spec.rate_per_hour > 0.0)
    for (uint32_t c = 0; c < spec.clients; ++c) schedule(c, 0);
}

void TraceGenerator::schedule(ClientId client, uint64_t from_ms) {
  double gap_ms = client_rng_[client].exponential(3600.0 / spec_.rate_per_hour) * 1000.0;
  if (gap_ms >= 0x1p62) return;
  uint64_t t = from_ms + uint64_t(std::llround(gap_ms));
  if (t < spec_.duration_s * 1000) heap_.emplace(t, client);
}

std::optional<TraceEvent> TraceGenerator::next() {
  if (heap_.empty()) return std::nullopt;
  auto [t, client] = heap_.top();
  heap_.pop();
  uint32_t domain = zipf_.sample(client_rng_[client]);
  schedule(client, t);
  return TraceEvent{t, client, universe_.key_of(domain)};
}

std::vector<TraceEvent> gen_trace(const TraceSpec& spec) {
  TraceGenerator gen(spec);
  std::vector<TraceEvent> events;
  events.reserve(size_t(double(spec.clients) * spec.rate_per_hour *
                        double(spec.duration_s) / 3600.0 * 1.1) +
                 16);
  while (auto e = gen.next()) events.push_back(std::move(*e));
  return events;
}

namespace {

constexpr const char* kTraceHeader = "t_ms,client_id,qname,qtype";

uint64_t parse_u64_field(const std::string& field, size_t line_no,
                         const char* what) {
  if (field.empty() || field.size() > 20)
    throw TraceError(line_no, std::string("malformed ") + what);
  for (char c : field)
    if (c < '0' || c > '9')
      throw TraceError(line_no, std::string("malformed ") + what);
  errno = 0;
  uint64_t v = std::strtoull(field.c_str(), nullptr, 10);
  if (errno == ERANGE)
    throw TraceError(line_no, std::string(what) + " out of range");
  return v;
}

TraceEvent parse_trace_line(const std::string& line, size_t line_no) {
  std::string fields[4];
  size_t field = 0;
  for (char c : line) {
    if (c == ',') {
      if (++field >= 4) throw TraceError(line_no, "too many fields");
    } else {
      fields[field].push_back(c);
    }
  }
  if (field != 3) throw TraceError(line_no, "expected 4 comma-separated fields");

  TraceEvent event;
  event.t_ms = parse_u64_field(fields[0], line_no, "timestamp");
  uint64_t client = parse_u64_field(fields[1], line_no, "client id");
  if (client > 0xFFFFFFFFull)
    throw TraceError(line_no, "client id out of range");
  event.client = ClientId(client);
  try {
    event.key.name = parse_domain(fields[2]);
  } catch (const NameError& e) {
    throw TraceError(line_no, std::string("bad qname: ") + e.what());
  }
  if (fields[3] == "A")
    event.key.qtype = QType::A;
  else if (fields[3] == "AAAA")
    event.key.qtype = QType::AAAA;
  else
    throw TraceError(line_no, "unsupported qtype " + fields[3]);
  return event;
}

}  // namespace

struct TraceFileReader::Impl {
  std::ifstream in;
  size_t line_no = 0;
  uint64_t prev_t = 0;
  std::string line;
};

TraceFileReader::TraceFileReader(const std::string& path)
    : impl_(new Impl) {
  impl_->in.open(path, std::ios::binary);
  if (!impl_->in) {
    delete impl_;
    throw TraceError(0, "cannot open trace file " + path);
  }
  impl_->line_no = 1;
  if (!std::getline(impl_->in, impl_->line) || impl_->line != kTraceHeader) {
    delete impl_;
    throw TraceError(1, std::string("expected header ") + kTraceHeader);
  }
}

TraceFileReader::~TraceFileReader() { delete impl_; }

std::optional<TraceEvent> TraceFileReader::next() {
  if (!std::getline(impl_->in, impl_->line)) return std::nullopt;
  ++impl_->line_no;
  TraceEvent event = parse_trace_line(impl_->line, impl_->line_no);
  if (event.t_ms < impl_->prev_t)
    throw TraceError(impl_->line_no, "timestamps not sorted");
  impl_->prev_t = event.t_ms;
  return event;
}

std::vector<TraceEvent> load_trace(const std::string& path) {
  TraceFileReader reader(path);
  std::vector<TraceEvent> events;
  while (auto e = reader.next()) events.push_back(std::move(*e));
  return events;
}

namespace {

void write_event(std::ofstream& out, const TraceEvent& e) {
  out << e.t_ms << ',' << e.client << ',' << present_domain(e.key.name) << ','
      << qtype_name(e.key.qtype) << '\n';
}

}  // namespace

void save_trace(const std::string& path, std::span<const TraceEvent> events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TraceError(0, "cannot write trace file " + path);
  out << kTraceHeader << '\n';
  for (const auto& e : events) write_event(out, e);
  if (!out) throw TraceError(0, "write failed for " + path);
}

uint64_t write_trace(const std::string& path, EventSource& source) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TraceError(0, "cannot write trace file " + path);
  out << kTraceHeader << '\n';
  uint64_t count = 0;
  while (auto e = source.next()) {
    write_event(out, *e);
    ++count;
  }
  if (!out) throw TraceError(0, "write failed for " + path);
  return count;
}

}  // namespace popdns
