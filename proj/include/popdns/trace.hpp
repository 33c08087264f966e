#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "popdns/core.hpp"
#include "popdns/rng.hpp"

namespace popdns {

/// One client query. Timestamps are milliseconds from trace start.
struct TraceEvent {
  uint64_t t_ms = 0;
  ClientId client = 0;
  RecordKey key;

  bool operator==(const TraceEvent&) const = default;
};

/// Time-ordered query stream. Implementations either generate events on the
/// fly or read them from a file, so day-scale traces never have to be
/// materialized in memory.
class EventSource {
 public:
  virtual ~EventSource() = default;
  virtual std::optional<TraceEvent> next() = 0;
};

/// The synthetic name space: `domains` names "h<i>.z<i mod 997>.example",
/// i in [0, domains). A fixed per-name fraction are aliases whose CNAME
/// target is another, non-alias member of the same space, and each name has
/// one fixed query type. All attributes are pure functions of (seed, index),
/// so a generator and a simulator built from the same parameters agree on
/// the shape of the world without sharing state.
class DomainUniverse {
 public:
  DomainUniverse(uint32_t domains, double cname_fraction, double aaaa_fraction,
                 uint64_t seed);

  uint32_t size() const { return domains_; }
  DomainName name_of(uint32_t index) const;
  /// Parse a name produced by name_of back to its index.
  std::optional<uint32_t> index_of(const DomainName& name) const;

  bool is_alias(uint32_t index) const;
  /// Non-alias member the alias at `index` points to. Never `index` itself.
  uint32_t alias_target(uint32_t index) const;
  /// A or AAAA. Alias heads keep their query type; the CNAME answer is
  /// compatible with both.
  QType qtype_of(uint32_t index) const;

  /// The key clients query for this domain: name_of + qtype_of.
  RecordKey key_of(uint32_t index) const;

  uint64_t seed() const { return seed_; }

 private:
  uint32_t domains_;
  double cname_fraction_;
  double aaaa_fraction_;
  uint64_t seed_;
};

/// Zipf(s) over ranks 1..n via the cumulative weight table; sample() is a
/// binary search, so draws cost O(log n).
class ZipfSampler {
 public:
  ZipfSampler(uint32_t n, double s);

  /// 0-based index; index i is drawn with probability (i+1)^-s / H.
  uint32_t sample(Rng& rng) const;
  /// Probability mass of the first k indices.
  double top_mass(uint32_t k) const;
  uint32_t size() const { return uint32_t(cumulative_.size()); }

 private:
  std::vector<double> cumulative_;
};

struct TraceSpec {
  uint32_t clients = 100;
  uint64_t duration_s = 3600;
  double rate_per_hour = 15.0;  // mean queries per client per hour
  double zipf_s = 1.0;
  uint32_t domains = 100000;
  double cname_fraction = 0.15;
  double aaaa_fraction = 0.2;
  uint64_t seed = 0;
};

/// Streaming generator: per-client homogeneous Poisson arrivals with
/// Zipf-distributed domain choice, merged into one time-sorted stream.
/// Each client draws from its own derived substream, so the stream is a
/// pure function of the spec.
class TraceGenerator : public EventSource {
 public:
  explicit TraceGenerator(const TraceSpec& spec);

  std::optional<TraceEvent> next() override;

  const TraceSpec& spec() const { return spec_; }
  const DomainUniverse& universe() const { return universe_; }

 private:
  void schedule(ClientId client, uint64_t from_ms);

  TraceSpec spec_;
  DomainUniverse universe_;
  ZipfSampler zipf_;
  std::vector<Rng> client_rng_;
  using Arrival = std::pair<uint64_t, ClientId>;
  std::priority_queue<Arrival, std::vector<Arrival>, std::greater<>> heap_;
};

/// Replays a pre-built event list. Used by tests and by run_sim overloads
/// taking in-memory traces.
class VectorSource : public EventSource {
 public:
  explicit VectorSource(std::span<const TraceEvent> events)
      : events_(events) {}
  std::optional<TraceEvent> next() override {
    if (pos_ >= events_.size()) return std::nullopt;
    return events_[pos_++];
  }

 private:
  std::span<const TraceEvent> events_;
  size_t pos_ = 0;
};

/// Streaming CSV reader with the same validation as load_trace.
class TraceFileReader : public EventSource {
 public:
  explicit TraceFileReader(const std::string& path);
  ~TraceFileReader();
  TraceFileReader(const TraceFileReader&) = delete;
  TraceFileReader& operator=(const TraceFileReader&) = delete;

  std::optional<TraceEvent> next() override;

 private:
  struct Impl;
  Impl* impl_;
};

/// Materialize a full synthetic trace. Prefer TraceGenerator for day-scale
/// runs; this is for tests and short traces.
std::vector<TraceEvent> gen_trace(const TraceSpec& spec);

/// Parse a trace CSV ("t_ms,client_id,qname,qtype" header, one event per
/// line, qtype A or AAAA, timestamps non-decreasing). Throws TraceError with
/// the offending 1-based line number on any malformed or out-of-order line.
std::vector<TraceEvent> load_trace(const std::string& path);

/// Write events as trace CSV. save_trace takes a materialized list;
/// write_trace drains a source and returns the number of events written.
void save_trace(const std::string& path, std::span<const TraceEvent> events);
uint64_t write_trace(const std::string& path, EventSource& source);

}  // namespace popdns
