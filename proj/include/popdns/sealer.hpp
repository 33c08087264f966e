#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "popdns/rng.hpp"

namespace popdns {

struct MixKeyPair {
  std::vector<uint8_t> pub;
  std::vector<uint8_t> sec;
};

/// Randomized public-key authenticated encryption: two seals of the same
/// plaintext differ, opening with the wrong key fails, ciphertext length is
/// plaintext length plus a constant overhead. Implementations draw all
/// randomness from the caller's Rng so sealed bytes are reproducible.
class Sealer {
 public:
  virtual ~Sealer() = default;
  virtual size_t overhead() const = 0;
  virtual MixKeyPair keypair(Rng& rng) const = 0;
  virtual std::vector<uint8_t> seal(std::span<const uint8_t> plain,
                                    std::span<const uint8_t> pub,
                                    Rng& rng) const = 0;
  /// nullopt when authentication fails (wrong key or tampered bytes).
  virtual std::optional<std::vector<uint8_t>> open(
      std::span<const uint8_t> sealed, const MixKeyPair& keys) const = 0;
};

/// Curve25519 sealed boxes (anonymous sender): ciphertext is an ephemeral
/// public key followed by an XSalsa20-Poly1305 box under the shared secret,
/// nonce derived from both public keys. Wire-compatible with the libsodium
/// sealed-box format.
class BoxSealer final : public Sealer {
 public:
  size_t overhead() const override;
  MixKeyPair keypair(Rng& rng) const override;
  std::vector<uint8_t> seal(std::span<const uint8_t> plain,
                            std::span<const uint8_t> pub,
                            Rng& rng) const override;
  std::optional<std::vector<uint8_t>> open(
      std::span<const uint8_t> sealed, const MixKeyPair& keys) const override;
};

/// Symmetric stand-in for bulk simulation: secretbox under a key hashed from
/// the recipient's public key. Same interface and authentication behavior,
/// none of the public-key cost (and none of the security).
class FastSealer final : public Sealer {
 public:
  size_t overhead() const override;
  MixKeyPair keypair(Rng& rng) const override;
  std::vector<uint8_t> seal(std::span<const uint8_t> plain,
                            std::span<const uint8_t> pub,
                            Rng& rng) const override;
  std::optional<std::vector<uint8_t>> open(
      std::span<const uint8_t> sealed, const MixKeyPair& keys) const override;
};

/// Identity transform prefixed with the recipient key so wrong-key opens
/// still fail. Protocol-logic tests only.
class NullSealer final : public Sealer {
 public:
  size_t overhead() const override;
  MixKeyPair keypair(Rng& rng) const override;
  std::vector<uint8_t> seal(std::span<const uint8_t> plain,
                            std::span<const uint8_t> pub,
                            Rng& rng) const override;
  std::optional<std::vector<uint8_t>> open(
      std::span<const uint8_t> sealed, const MixKeyPair& keys) const override;
};

}  // namespace popdns
