#include "popdns/wire.hpp"

#include <zlib.h>

namespace popdns {

std::vector<uint8_t> deflate_bytes(std::span<const uint8_t> input, int level) {
  z_stream zs{};
  // negative windowBits selects raw DEFLATE
  if (deflateInit2(&zs, level, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error("deflateInit2 failed");

  std::vector<uint8_t> out(deflateBound(&zs, uLong(input.size())));
  zs.next_in = const_cast<Bytef*>(input.data());
  zs.avail_in = uInt(input.size());
  zs.next_out = out.data();
  zs.avail_out = uInt(out.size());
  int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error("deflate failed: " + std::to_string(rc));
  out.resize(zs.total_out);
  return out;
}

std::vector<uint8_t> inflate_bytes(std::span<const uint8_t> input,
                                   size_t max_output) {
  z_stream zs{};
  if (inflateInit2(&zs, -15) != Z_OK) throw DecompressError("inflateInit2 failed");

  std::vector<uint8_t> out;
  out.resize(std::max<size_t>(input.size() * 4, 256));
  zs.next_in = const_cast<Bytef*>(input.data());
  zs.avail_in = uInt(input.size());
  size_t written = 0;
  for (;;) {
    zs.next_out = out.data() + written;
    zs.avail_out = uInt(out.size() - written);
    int rc = inflate(&zs, Z_NO_FLUSH);
    written = out.size() - zs.avail_out;
    if (rc == Z_STREAM_END) break;
    if (rc == Z_OK || rc == Z_BUF_ERROR) {
      if (rc == Z_BUF_ERROR && zs.avail_in == 0 && zs.avail_out > 0) {
        inflateEnd(&zs);
        throw DecompressError("deflate stream truncated");
      }
      if (written == out.size()) {
        if (out.size() >= max_output) {
          inflateEnd(&zs);
          throw DecompressError("decompressed output exceeds limit");
        }
        out.resize(std::min(max_output, out.size() * 2));
      }
      continue;
    }
    inflateEnd(&zs);
    throw DecompressError("inflate failed: " + std::to_string(rc));
  }
  inflateEnd(&zs);
  out.resize(written);
  return out;
}

}  // namespace popdns
