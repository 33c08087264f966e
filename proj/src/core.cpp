#include "popdns/core.hpp"

#include <cctype>

#include "popdns/rng.hpp"

namespace popdns {

namespace {
constexpr size_t kMaxLabel = 63;
constexpr size_t kMaxName = 253;  // presentation form without trailing dot
}  // namespace

std::string_view qtype_name(QType t) {
  switch (t) {
    case QType::A: return "A";
    case QType::AAAA: return "AAAA";
    case QType::CNAME: return "CNAME";
  }
  return "?";
}

QType qtype_from_name(std::string_view s) {
  if (s == "A") return QType::A;
  if (s == "AAAA") return QType::AAAA;
  if (s == "CNAME") return QType::CNAME;
  throw Error("unsupported record type: " + std::string(s));
}

void DomainName::validate(const std::vector<std::string>& labels) {
  if (labels.empty())
    throw NameError(NameError::Kind::Empty, "empty domain name");
  size_t total = labels.size() - 1;  // dots
  for (const auto& label : labels) {
    if (label.empty())
      throw NameError(NameError::Kind::EmptyLabel, "empty label");
    if (label.size() > kMaxLabel)
      throw NameError(NameError::Kind::LabelTooLong,
                      "label exceeds 63 bytes: " + label.substr(0, 16) + "...");
    for (unsigned char c : label) {
      if (c >= 0x80)
        throw NameError(NameError::Kind::NonAscii, "non-ASCII byte in label");
      if (c == '.')
        throw NameError(NameError::Kind::BadLabelByte, "'.' inside a label");
      if (c < 0x21 || c == 0x7F)
        throw NameError(NameError::Kind::BadLabelByte,
                        "unprintable byte in label");
    }
    total += label.size();
  }
  if (total > kMaxName)
    throw NameError(NameError::Kind::NameTooLong, "name exceeds 253 bytes");
}

DomainName DomainName::parse(std::string_view text) {
  if (!text.empty() && text.back() == '.') text.remove_suffix(1);
  if (text.empty())
    throw NameError(NameError::Kind::Empty, "empty domain name");

  std::vector<std::string> presentation;
  size_t start = 0;
  for (size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '.') {
      std::string label(text.substr(start, i - start));
      for (auto& c : label)
        if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
      presentation.push_back(std::move(label));
      start = i + 1;
    }
  }
  std::vector<std::string> labels(presentation.rbegin(), presentation.rend());
  validate(labels);
  DomainName n;
  n.labels_ = std::move(labels);
  return n;
}

DomainName DomainName::from_labels(std::vector<std::string> labels) {
  for (auto& label : labels)
    for (auto& c : label)
      if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
  validate(labels);
  DomainName n;
  n.labels_ = std::move(labels);
  return n;
}

std::string DomainName::to_string() const {
  std::string out;
  for (auto it = labels_.rbegin(); it != labels_.rend(); ++it) {
    if (!out.empty()) out += '.';
    out += *it;
  }
  return out;
}

std::string RecordAnswer::to_string() const {
  switch (tag()) {
    case QType::A: {
      const auto& v = ipv4();
      std::string s;
      for (int i = 0; i < 4; ++i) {
        if (i) s += '.';
        s += std::to_string(v[i]);
      }
      return s;
    }
    case QType::AAAA: {
      const auto& v = ipv6();
      static const char* hex = "0123456789abcdef";
      std::string s;
      for (int i = 0; i < 16; i += 2) {
        if (i) s += ':';
        s += hex[v[i] >> 4];
        s += hex[v[i] & 0xf];
        s += hex[v[i + 1] >> 4];
        s += hex[v[i + 1] & 0xf];
      }
      return s;
    }
    case QType::CNAME:
      return target().to_string();
  }
  return "?";
}

size_t RecordAnswer::hash() const {
  uint64_t h = hash_mix(uint64_t(tag()));
  switch (tag()) {
    case QType::A:
      for (uint8_t b : ipv4()) h = hash_mix(h, b);
      break;
    case QType::AAAA:
      for (uint8_t b : ipv6()) h = hash_mix(h, b);
      break;
    case QType::CNAME:
      for (const auto& label : target().labels()) h = hash_mix(h, hash_str(label));
      break;
  }
  return size_t(h);
}

}  // namespace popdns
