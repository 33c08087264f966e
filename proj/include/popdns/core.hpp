#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "popdns/errors.hpp"

namespace popdns {

/// Supported record types. Values double as the wire tags for answers.
enum class QType : uint8_t { A = 1, AAAA = 2, CNAME = 3 };

std::string_view qtype_name(QType t);
QType qtype_from_name(std::string_view s);  // throws Error on unknown type

/// A domain name stored as lowercase ASCII labels in root-first order:
/// "www.example.com" is held as [com, example, www]. Root-first storage makes
/// the popularity-list trie a plain prefix tree over labels.
///
/// Immutable after construction; cheap to copy, safe to share across threads.
class DomainName {
 public:
  DomainName() = default;

  /// Parse presentation form ("www.Example.COM." -> [com, example, www]).
  /// Case is folded to lowercase, one trailing dot is stripped.
  static DomainName parse(std::string_view text);

  /// Build from root-first labels; validates the same limits as parse().
  static DomainName from_labels(std::vector<std::string> labels);

  /// Presentation form, no trailing dot. parse(to_string()) round-trips.
  std::string to_string() const;

  const std::vector<std::string>& labels() const { return labels_; }
  size_t label_count() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  bool operator==(const DomainName&) const = default;
  // lexicographic over root-first labels; gives the total order used for
  // deterministic tie-breaking downstream
  auto operator<=>(const DomainName& o) const {
    return labels_ <=> o.labels_;
  }

 private:
  static void validate(const std::vector<std::string>& labels);
  std::vector<std::string> labels_;
};

inline DomainName parse_domain(std::string_view text) { return DomainName::parse(text); }
inline std::string present_domain(const DomainName& n) { return n.to_string(); }

struct RecordKey {
  DomainName name;
  QType qtype = QType::A;

  bool operator==(const RecordKey&) const = default;
  auto operator<=>(const RecordKey& o) const {
    if (auto c = name <=> o.name; c != 0) return c;
    return uint8_t(qtype) <=> uint8_t(o.qtype);
  }
};

using Ipv4 = std::array<uint8_t, 4>;
using Ipv6 = std::array<uint8_t, 16>;

/// One DNS answer: an IPv4/IPv6 address or a CNAME target.
class RecordAnswer {
 public:
  RecordAnswer() : value_(Ipv4{}) {}
  static RecordAnswer a(Ipv4 addr) { return RecordAnswer(addr); }
  static RecordAnswer aaaa(Ipv6 addr) { return RecordAnswer(addr); }
  static RecordAnswer cname(DomainName target) { return RecordAnswer(std::move(target)); }

  QType tag() const { return QType(uint8_t(value_.index() + 1)); }
  bool is_cname() const { return tag() == QType::CNAME; }

  const Ipv4& ipv4() const { return std::get<Ipv4>(value_); }
  const Ipv6& ipv6() const { return std::get<Ipv6>(value_); }
  const DomainName& target() const { return std::get<DomainName>(value_); }

  /// "1.2.3.4", RFC-style hex for AAAA, or the CNAME target name.
  std::string to_string() const;

  bool operator==(const RecordAnswer&) const = default;
  auto operator<=>(const RecordAnswer&) const = default;

  size_t hash() const;

 private:
  explicit RecordAnswer(Ipv4 v) : value_(v) {}
  explicit RecordAnswer(Ipv6 v) : value_(v) {}
  explicit RecordAnswer(DomainName v) : value_(std::move(v)) {}
  std::variant<Ipv4, Ipv6, DomainName> value_;
};

struct AnswerHash {
  size_t operator()(const RecordAnswer& a) const { return a.hash(); }
};

/// True when an entry holding `answer` is usable for a query of type `qtype`:
/// the tags match, or the answer is a CNAME link in a chain.
inline bool answer_compatible(QType qtype, const RecordAnswer& answer) {
  return answer.tag() == qtype || answer.is_cname();
}

/// TTL in seconds, always >= 1. Values below the enforced minimum are clamped
/// by update scheduling, never stored clamped here.
struct TtlSeconds {
  uint32_t value = 1;

  TtlSeconds() = default;
  explicit TtlSeconds(uint32_t v) : value(v) {
    if (v == 0) throw Error("TTL must be >= 1 second");
  }
  bool operator==(const TtlSeconds&) const = default;
  auto operator<=>(const TtlSeconds&) const = default;
};

/// Opaque client identity assigned at registration; unique per deployment.
using ClientId = uint32_t;

}  // namespace popdns
