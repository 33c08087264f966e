#pragma once

#include <stdexcept>
#include <string>

namespace popdns {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- domain name parsing ---

struct NameError : Error {
  enum class Kind {
    LabelTooLong,
    NameTooLong,
    EmptyLabel,
    NonAscii,
    BadLabelByte,  // '.' inside a label would not survive re-parsing
    Empty
  };
  Kind kind;
  NameError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

// --- snapshot / batch codecs ---

struct BadMagic : Error {
  explicit BadMagic(const std::string& msg) : Error(msg) {}
};

struct UnsupportedFormat : Error {
  explicit UnsupportedFormat(const std::string& msg) : Error(msg) {}
};

struct TruncatedInput : Error {
  explicit TruncatedInput(const std::string& msg) : Error(msg) {}
};

struct DecompressError : Error {
  explicit DecompressError(const std::string& msg) : Error(msg) {}
};

struct MalformedSnapshot : Error {
  explicit MalformedSnapshot(const std::string& msg) : Error(msg) {}
};

struct DanglingPoolIndex : Error {
  explicit DanglingPoolIndex(const std::string& msg) : Error(msg) {}
};

struct VersionGap : Error {
  uint64_t batch_from;
  uint64_t replica_version;
  VersionGap(uint64_t from, uint64_t have)
      : Error("batch from_version " + std::to_string(from) +
              " does not match replica version " + std::to_string(have)),
        batch_from(from), replica_version(have) {}
};

struct MalformedDelta : Error {
  explicit MalformedDelta(const std::string& msg) : Error(msg) {}
};

struct DanglingReference : Error {
  explicit DanglingReference(const std::string& msg) : Error(msg) {}
};

// --- mix network ---

struct SealError : Error {
  explicit SealError(const std::string& msg) : Error(msg) {}
};

struct PathError : Error {
  explicit PathError(const std::string& msg) : Error(msg) {}
};

struct QuotaViolation : Error {
  uint32_t client;
  QuotaViolation(uint32_t client_id, size_t submitted, size_t allowed)
      : Error("client " + std::to_string(client_id) + " submitted " +
              std::to_string(submitted) + " votes, quota is " +
              std::to_string(allowed)),
        client(client_id) {}
};

struct LedgerMismatch : Error {
  uint32_t node;
  uint32_t round;
  LedgerMismatch(uint32_t node_id, uint32_t round_idx, const std::string& msg)
      : Error(msg), node(node_id), round(round_idx) {}
};

struct DuplicateCredential : Error {
  explicit DuplicateCredential(const std::string& msg) : Error(msg) {}
};

struct InvalidCertificate : Error {
  explicit InvalidCertificate(const std::string& msg) : Error(msg) {}
};

// --- traces and configuration ---

struct TraceError : Error {
  size_t line;  // 1-based line number, 0 when not line-specific
  TraceError(size_t line_no, const std::string& msg)
      : Error(line_no ? ("line " + std::to_string(line_no) + ": " + msg) : msg),
        line(line_no) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace popdns
