#include <doctest.h>

#include "popdns/errors.hpp"
#include "popdns/rng.hpp"
#include "popdns/wire.hpp"

using namespace popdns;

TEST_CASE("varint encodes LEB128") {
  ByteWriter w;
  w.varint(0);
  w.varint(127);
  w.varint(128);
  w.varint(300);
  auto bytes = w.take();
  CHECK(bytes == std::vector<uint8_t>{0x00, 0x7f, 0x80, 0x01, 0xac, 0x02});
  ByteReader r(bytes);
  CHECK(r.varint() == 0);
  CHECK(r.varint() == 127);
  CHECK(r.varint() == 128);
  CHECK(r.varint() == 300);
  CHECK(r.done());
}

TEST_CASE("zigzag maps small magnitudes to small codes") {
  // -4 zigzags to 7: the worked encoding for relative pool references
  ByteWriter w;
  w.zigzag(-4);
  auto bytes = w.take();
  REQUIRE(bytes.size() == 1);
  CHECK(bytes[0] == 7);

  for (int64_t v : {int64_t(0), int64_t(1), int64_t(-1), int64_t(2),
                    int64_t(-2), int64_t(1000), int64_t(-1000),
                    int64_t(1) << 62, -(int64_t(1) << 62)}) {
    ByteWriter ww;
    ww.zigzag(v);
    auto b = ww.take();
    ByteReader r(b);
    CHECK(r.zigzag() == v);
  }
}

TEST_CASE("fixed-width integers are little-endian") {
  ByteWriter w;
  w.u32le(0x01020304u);
  w.u64le(0x1122334455667788ull);
  auto bytes = w.take();
  CHECK(bytes[0] == 0x04);
  CHECK(bytes[3] == 0x01);
  CHECK(bytes[4] == 0x88);
  CHECK(bytes[11] == 0x11);
  ByteReader r(bytes);
  CHECK(r.u32le() == 0x01020304u);
  CHECK(r.u64le() == 0x1122334455667788ull);
}

TEST_CASE("round-trip of random primitive sequences") {
  Rng rng(7);
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<uint64_t> vals;
    ByteWriter w;
    size_t n = rng.uniform(50);
    for (size_t i = 0; i < n; ++i) {
      uint64_t v = rng.next_u64() >> rng.uniform(64);
      vals.push_back(v);
      w.varint(v);
    }
    auto bytes = w.take();
    ByteReader r(bytes);
    for (uint64_t v : vals) CHECK(r.varint() == v);
    CHECK(r.done());
  }
}

TEST_CASE("reader throws TruncatedInput past the end") {
  std::vector<uint8_t> bytes{0x80};  // varint continuation with no next byte
  ByteReader r(bytes);
  CHECK_THROWS_AS(r.varint(), TruncatedInput);
  ByteReader r2(bytes);
  CHECK_THROWS_AS(r2.u32le(), TruncatedInput);
}

TEST_CASE("overlong varint rejected") {
  std::vector<uint8_t> bytes(11, 0x80);
  ByteReader r(bytes);
  CHECK_THROWS_AS(r.varint(), TruncatedInput);
}

TEST_CASE("deflate round-trips and compresses repetition") {
  std::vector<uint8_t> input;
  for (int i = 0; i < 10000; ++i) input.push_back(uint8_t(i % 7));
  auto packed = deflate_bytes(input);
  CHECK(packed.size() < input.size() / 10);
  CHECK(inflate_bytes(packed) == input);

  std::vector<uint8_t> empty;
  CHECK(inflate_bytes(deflate_bytes(empty)).empty());
}

TEST_CASE("inflate rejects garbage and truncation") {
  std::vector<uint8_t> junk{0xde, 0xad, 0xbe, 0xef, 0x01};
  CHECK_THROWS_AS(inflate_bytes(junk), DecompressError);

  std::vector<uint8_t> input(1000, 42);
  auto packed = deflate_bytes(input);
  packed.resize(packed.size() / 2);
  CHECK_THROWS_AS(inflate_bytes(packed), DecompressError);
}

TEST_CASE("rng determinism and derive independence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // derive() is pure: untouched by how much the parent stream advanced
  Rng c(42);
  auto d1 = c.derive("x", 3);
  c.next_u64();
  auto d2 = c.derive("x", 3);
  CHECK(d1.next_u64() == d2.next_u64());

  Rng e = Rng(42).derive("x", 3);
  Rng f = Rng(42).derive("x", 4);
  CHECK(e.next_u64() != f.next_u64());
}

TEST_CASE("rng uniform stays in bounds and covers the range") {
  Rng rng(1);
  std::vector<int> seen(10, 0);
  for (int i = 0; i < 10000; ++i) {
    uint64_t v = rng.uniform(10);
    REQUIRE(v < 10);
    seen[v]++;
  }
  for (int c : seen) CHECK(c > 800);  // roughly uniform

  CHECK(rng.uniform(1) == 0);
  for (int i = 0; i < 1000; ++i) {
    double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("shuffle is a permutation") {
  Rng rng(9);
  std::vector<int> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i;
  auto orig = v;
  rng.shuffle(v);
  CHECK(v != orig);  // astronomically unlikely to be identity
  std::sort(v.begin(), v.end());
  CHECK(v == orig);
}
