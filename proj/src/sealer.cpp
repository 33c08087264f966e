#include "popdns/sealer.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>

#include "popdns/errors.hpp"

namespace popdns {

namespace {

void require_sodium() {
  if (sodium_init() < 0) throw SealError("libsodium failed to initialize");
}

// sealed-box nonce rule: blake2b-24(ephemeral_pk || recipient_pk)
std::array<uint8_t, crypto_box_NONCEBYTES> seal_nonce(const uint8_t* epk,
                                                      const uint8_t* rpk) {
  std::array<uint8_t, crypto_box_NONCEBYTES> nonce;
  crypto_generichash_state state;
  crypto_generichash_init(&state, nullptr, 0, nonce.size());
  crypto_generichash_update(&state, epk, crypto_box_PUBLICKEYBYTES);
  crypto_generichash_update(&state, rpk, crypto_box_PUBLICKEYBYTES);
  crypto_generichash_final(&state, nonce.data(), nonce.size());
  return nonce;
}

}  // namespace

size_t BoxSealer::overhead() const {
  return crypto_box_PUBLICKEYBYTES + crypto_box_MACBYTES;
}

MixKeyPair BoxSealer::keypair(Rng& rng) const {
  require_sodium();
  std::array<uint8_t, crypto_box_SEEDBYTES> seed;
  rng.fill(seed.data(), seed.size());
  MixKeyPair keys;
  keys.pub.resize(crypto_box_PUBLICKEYBYTES);
  keys.sec.resize(crypto_box_SECRETKEYBYTES);
  crypto_box_seed_keypair(keys.pub.data(), keys.sec.data(), seed.data());
  return keys;
}

std::vector<uint8_t> BoxSealer::seal(std::span<const uint8_t> plain,
                                     std::span<const uint8_t> pub,
                                     Rng& rng) const {
  require_sodium();
  if (pub.size() != crypto_box_PUBLICKEYBYTES)
    throw SealError("recipient key is not a curve25519 public key");
  std::array<uint8_t, crypto_box_SEEDBYTES> seed;
  rng.fill(seed.data(), seed.size());
  std::vector<uint8_t> epk(crypto_box_PUBLICKEYBYTES);
  std::vector<uint8_t> esk(crypto_box_SECRETKEYBYTES);
  crypto_box_seed_keypair(epk.data(), esk.data(), seed.data());

  auto nonce = seal_nonce(epk.data(), pub.data());
  std::vector<uint8_t> out(crypto_box_PUBLICKEYBYTES + crypto_box_MACBYTES +
                           plain.size());
  std::copy(epk.begin(), epk.end(), out.begin());
  if (crypto_box_easy(out.data() + crypto_box_PUBLICKEYBYTES, plain.data(),
                      plain.size(), nonce.data(), pub.data(),
                      esk.data()) != 0)
    throw SealError("box seal failed");
  return out;
}

std::optional<std::vector<uint8_t>> BoxSealer::open(
    std::span<const uint8_t> sealed, const MixKeyPair& keys) const {
  require_sodium();
  if (sealed.size() < overhead()) return std::nullopt;
  if (keys.pub.size() != crypto_box_PUBLICKEYBYTES ||
      keys.sec.size() != crypto_box_SECRETKEYBYTES)
    return std::nullopt;
  const uint8_t* epk = sealed.data();
  auto nonce = seal_nonce(epk, keys.pub.data());
  std::vector<uint8_t> plain(sealed.size() - overhead());
  if (crypto_box_open_easy(plain.data(), sealed.data() + crypto_box_PUBLICKEYBYTES,
                           sealed.size() - crypto_box_PUBLICKEYBYTES,
                           nonce.data(), epk, keys.sec.data()) != 0)
    return std::nullopt;
  return plain;
}

namespace {

std::array<uint8_t, crypto_secretbox_KEYBYTES> fast_key(
    std::span<const uint8_t> pub) {
  std::array<uint8_t, crypto_secretbox_KEYBYTES> key;
  crypto_generichash(key.data(), key.size(), pub.data(), pub.size(), nullptr,
                     0);
  return key;
}

}  // namespace

size_t FastSealer::overhead() const {
  return crypto_secretbox_NONCEBYTES + crypto_secretbox_MACBYTES;
}

MixKeyPair FastSealer::keypair(Rng& rng) const {
  require_sodium();
  MixKeyPair keys;
  keys.pub.resize(crypto_secretbox_KEYBYTES);
  rng.fill(keys.pub.data(), keys.pub.size());
  keys.sec = keys.pub;
  return keys;
}

std::vector<uint8_t> FastSealer::seal(std::span<const uint8_t> plain,
                                      std::span<const uint8_t> pub,
                                      Rng& rng) const {
  require_sodium();
  auto key = fast_key(pub);
  std::vector<uint8_t> out(crypto_secretbox_NONCEBYTES +
                           crypto_secretbox_MACBYTES + plain.size());
  rng.fill(out.data(), crypto_secretbox_NONCEBYTES);
  if (crypto_secretbox_easy(out.data() + crypto_secretbox_NONCEBYTES,
                            plain.data(), plain.size(), out.data(),
                            key.data()) != 0)
    throw SealError("secretbox seal failed");
  return out;
}

std::optional<std::vector<uint8_t>> FastSealer::open(
    std::span<const uint8_t> sealed, const MixKeyPair& keys) const {
  require_sodium();
  if (sealed.size() < overhead()) return std::nullopt;
  auto key = fast_key(keys.pub);
  std::vector<uint8_t> plain(sealed.size() - overhead());
  if (crypto_secretbox_open_easy(
          plain.data(), sealed.data() + crypto_secretbox_NONCEBYTES,
          sealed.size() - crypto_secretbox_NONCEBYTES, sealed.data(),
          key.data()) != 0)
    return std::nullopt;
  return plain;
}

namespace {
constexpr size_t kNullKeyBytes = 8;
}

size_t NullSealer::overhead() const { return kNullKeyBytes; }

MixKeyPair NullSealer::keypair(Rng& rng) const {
  MixKeyPair keys;
  keys.pub.resize(kNullKeyBytes);
  rng.fill(keys.pub.data(), keys.pub.size());
  keys.sec = keys.pub;
  return keys;
}

std::vector<uint8_t> NullSealer::seal(std::span<const uint8_t> plain,
                                      std::span<const uint8_t> pub,
                                      Rng&) const {
  if (pub.size() != kNullKeyBytes) throw SealError("bad null-sealer key");
  std::vector<uint8_t> out(kNullKeyBytes + plain.size());
  std::memcpy(out.data(), pub.data(), kNullKeyBytes);
  if (!plain.empty())
    std::memcpy(out.data() + kNullKeyBytes, plain.data(), plain.size());
  return out;
}

std::optional<std::vector<uint8_t>> NullSealer::open(
    std::span<const uint8_t> sealed, const MixKeyPair& keys) const {
  if (sealed.size() < kNullKeyBytes) return std::nullopt;
  if (!std::equal(keys.pub.begin(), keys.pub.end(), sealed.begin()))
    return std::nullopt;
  return std::vector<uint8_t>(sealed.begin() + kNullKeyBytes, sealed.end());
}

}  // namespace popdns
