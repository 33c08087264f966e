#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "popdns/core.hpp"
#include "popdns/poplist.hpp"

namespace popdns {

/// Reference to an entry's next answer: either a signed offset from the
/// entry's current pool index (never 0; 0 is the wire escape for Literal) or
/// the answer value itself for answers not yet pooled.
struct RelRef {
  std::variant<int64_t, RecordAnswer> ref;

  static RelRef pool_relative(int64_t offset);
  static RelRef literal(RecordAnswer answer) {
    return RelRef{std::move(answer)};
  }
  bool is_literal() const { return ref.index() == 1; }
  int64_t offset() const { return std::get<int64_t>(ref); }
  const RecordAnswer& answer() const { return std::get<RecordAnswer>(ref); }

  bool operator==(const RelRef&) const = default;
};

struct AnswerChange {
  uint32_t record_order = 0;
  RelRef answer_ref;
  bool operator==(const AnswerChange&) const = default;
};

struct RecordAdd {
  RecordKey key;
  std::variant<PoolIndex, RecordAnswer> answer;
  TtlSeconds ttl;
  bool is_cname_support = false;
  bool operator==(const RecordAdd&) const = default;
};

struct RecordRemove {
  uint32_t record_order = 0;
  bool operator==(const RecordRemove&) const = default;
};

struct TtlChange {
  uint32_t record_order = 0;
  TtlSeconds ttl;
  bool operator==(const TtlChange&) const = default;
};

/// Variant index doubles as the wire tag.
using Delta = std::variant<AnswerChange, RecordAdd, RecordRemove, TtlChange>;

struct UpdateBatch {
  uint64_t from_version = 0;
  uint64_t to_version = 1;  // always from_version + 1
  std::vector<Delta> deltas;
  bool operator==(const UpdateBatch&) const = default;
};

/// Encode a batch against the list state it applies to ("PLU1" wire format,
/// DEFLATE body). Answer references are normalized: any answer already in
/// the pool (including answers appended earlier in this same batch) becomes a
/// pool reference, so literals appear only for first sightings.
/// Throws VersionGap when batch.from_version != list_before.version,
/// MalformedDelta / DanglingReference when a delta cannot apply in sequence.
/// force_literal disables the normalization and writes every answer as a
/// literal; the decoded batch applies identically. Used to measure what the
/// pool encoding saves.
std::vector<uint8_t> encode_batch(const PopularityList& list_before,
                                  const UpdateBatch& batch,
                                  bool force_literal = false);

/// Parse batch bytes without a list; pool-relative references stay symbolic.
UpdateBatch decode_batch(std::span<const uint8_t> data);

/// Apply decoded deltas in order; bumps version to to_version.
void apply_batch_inplace(PopularityList& list, const UpdateBatch& batch);
void apply_batch_inplace(PopularityList& list, std::span<const uint8_t> data);

/// Pure form of apply_batch_inplace.
PopularityList apply_batch(const PopularityList& list,
                           std::span<const uint8_t> data);

/// Minimal delta sequence turning `before` into `after`, assuming `after`
/// evolved from `before` by entry-level changes (shared order coordinates).
/// AnswerChange/TtlChange are preferred over Remove+Add for a surviving key;
/// a slot both added and removed between the states is replayed as Add then
/// Remove so order coordinates keep matching.
UpdateBatch diff_states(const PopularityList& before,
                        const PopularityList& after);

/// Accumulates deltas between flushes; at most one batch per ttl_min window.
class UpdateScheduler {
 public:
  explicit UpdateScheduler(TtlSeconds ttl_min = TtlSeconds{60},
                           uint64_t start_time = 0)
      : ttl_min_(ttl_min), next_flush_(start_time + ttl_min.value) {}

  TtlSeconds ttl_min() const { return ttl_min_; }
  uint64_t next_flush() const { return next_flush_; }
  size_t pending_count() const { return pending_.size(); }

  void add(Delta delta) { pending_.push_back(std::move(delta)); }

  bool due(uint64_t now) const { return now >= next_flush_; }

  /// Drain pending deltas into a batch from `from_version` and open the next
  /// accumulation window. Returns nullopt (still advancing the window) when
  /// nothing is pending.
  std::optional<UpdateBatch> flush(uint64_t now, uint64_t from_version);

 private:
  TtlSeconds ttl_min_;
  uint64_t next_flush_;
  std::vector<Delta> pending_;
};

/// Next time the server re-queries upstream for `record`: TTLs below the
/// scheduler's minimum are clamped up to it.
uint64_t schedule_requery(const UpdateScheduler& scheduler,
                          const ListEntry& record, uint64_t now);

/// Mean broadcast bytes per client per hour over the window (seconds).
double measure_bandwidth(std::span<const std::vector<uint8_t>> batches,
                         double window_seconds);
double measure_bandwidth(std::span<const size_t> batch_sizes,
                         double window_seconds);

}  // namespace popdns
