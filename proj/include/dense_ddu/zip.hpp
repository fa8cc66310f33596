#pragma once

// Minimal zip container support for NPZ archives: reads stored and deflated
// members (including zip64 size fields), writes stored members with a fixed
// timestamp so archives are reproducible byte for byte.

#include <algorithm>
#include <cstdint>
#include <span>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "dense_ddu/error.hpp"

namespace ddu {

struct ZipMember {
  std::string name;
  std::vector<std::byte> data;
};

namespace zip_detail {

inline constexpr std::uint32_t local_sig = 0x04034b50;
inline constexpr std::uint32_t central_sig = 0x02014b50;
inline constexpr std::uint32_t eocd_sig = 0x06054b50;
inline constexpr std::uint32_t eocd64_sig = 0x06064b50;
inline constexpr std::uint32_t eocd64_locator_sig = 0x07064b50;

class Reader {
 public:
  explicit Reader(std::span<const std::byte> buf) : buf_(buf) {}

  std::uint64_t le(std::size_t off, std::size_t n) const {
    if (off + n > buf_.size()) throw ParseError("zip: structure runs past end of archive");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= std::to_integer<std::uint64_t>(buf_[off + i]) << (8 * i);
    return v;
  }
  std::uint16_t u16(std::size_t off) const { return static_cast<std::uint16_t>(le(off, 2)); }
  std::uint32_t u32(std::size_t off) const { return static_cast<std::uint32_t>(le(off, 4)); }
  std::uint64_t u64(std::size_t off) const { return le(off, 8); }
  std::size_t size() const { return buf_.size(); }
  std::span<const std::byte> slice(std::size_t off, std::size_t n) const {
    if (off > buf_.size() || n > buf_.size() - off) throw ParseError("zip: member data runs past end of archive");
    return buf_.subspan(off, n);
  }

 private:
  std::span<const std::byte> buf_;
};

inline std::uint32_t crc(std::span<const std::byte> data) {
  uLong c = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks
  std::size_t off = 0;
  while (off < data.size()) {
    const std::size_t n = std::min<std::size_t>(data.size() - off, 1u << 30);
    c = crc32(c, reinterpret_cast<const Bytef*>(data.data() + off), static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(c);
}

inline std::vector<std::byte> inflate_raw(std::span<const std::byte> in, std::size_t expected) {
  std::vector<std::byte> out(expected);
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw ParseError("zip: inflateInit failed");
  zs.next_in = const_cast<Bytef*>(reinterpret_cast<const Bytef*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected) throw ParseError("zip: corrupt deflate stream");
  return out;
}

inline void put16(std::vector<std::byte>& out, std::uint32_t v) {
  out.push_back(static_cast<std::byte>(v & 0xFF));
  out.push_back(static_cast<std::byte>((v >> 8) & 0xFF));
}
inline void put32(std::vector<std::byte>& out, std::uint32_t v) {
  put16(out, v & 0xFFFF);
  put16(out, v >> 16);
}

}  // namespace zip_detail

inline std::vector<ZipMember> parse_zip(std::span<const std::byte> buf) {
  using namespace zip_detail;
  Reader r(buf);
  if (buf.size() < 22) throw ParseError("zip: archive too small");

  // End of central directory: scan backwards over a possible comment.
  std::size_t eocd = std::string::npos;
  const std::size_t lowest = buf.size() >= 22 + 0xFFFF ? buf.size() - 22 - 0xFFFF : 0;
  for (std::size_t pos = buf.size() - 22;; --pos) {
    if (r.u32(pos) == eocd_sig) { eocd = pos; break; }
    if (pos == lowest) break;
  }
  if (eocd == std::string::npos) throw ParseError("zip: end of central directory not found");

  std::uint64_t entries = r.u16(eocd + 10);
  std::uint64_t cd_offset = r.u32(eocd + 16);
  if ((entries == 0xFFFF || cd_offset == 0xFFFFFFFF) && eocd >= 20 &&
      r.u32(eocd - 20) == eocd64_locator_sig) {
    const std::uint64_t rec = r.u64(eocd - 20 + 8);
    if (r.u32(rec) != eocd64_sig) throw ParseError("zip: bad zip64 end record");
    entries = r.u64(rec + 32);
    cd_offset = r.u64(rec + 48);
  }

  std::vector<ZipMember> members;
  std::size_t pos = cd_offset;
  for (std::uint64_t e = 0; e < entries; ++e) {
    if (r.u32(pos) != central_sig) throw ParseError("zip: bad central directory entry");
    const std::uint16_t flags = r.u16(pos + 8);
    const std::uint16_t method = r.u16(pos + 10);
    const std::uint32_t expected_crc = r.u32(pos + 16);
    std::uint64_t comp_size = r.u32(pos + 20);
    std::uint64_t size = r.u32(pos + 24);
    const std::uint16_t name_len = r.u16(pos + 28);
    const std::uint16_t extra_len = r.u16(pos + 30);
    const std::uint16_t comment_len = r.u16(pos + 32);
    std::uint64_t local_off = r.u32(pos + 42);
    const auto name_bytes = r.slice(pos + 46, name_len);
    std::string name(reinterpret_cast<const char*>(name_bytes.data()), name_len);

    // zip64 extended information: only fields saturated in the fixed record are present
    std::size_t x = pos + 46 + name_len;
    const std::size_t x_end = x + extra_len;
    while (x + 4 <= x_end) {
      const std::uint16_t id = r.u16(x);
      const std::uint16_t len = r.u16(x + 2);
      if (id == 0x0001) {
        std::size_t f = x + 4;
        if (size == 0xFFFFFFFF) { size = r.u64(f); f += 8; }
        if (comp_size == 0xFFFFFFFF) { comp_size = r.u64(f); f += 8; }
        if (local_off == 0xFFFFFFFF) { local_off = r.u64(f); f += 8; }
      }
      x += 4 + len;
    }
    pos = x_end + comment_len;

    if (flags & 0x1) throw UnsupportedFormat("zip: encrypted member '" + name + "'");
    if (r.u32(local_off) != local_sig) throw ParseError("zip: bad local header for '" + name + "'");
    const std::size_t data_off = local_off + 30 + r.u16(local_off + 26) + r.u16(local_off + 28);
    const auto raw = r.slice(data_off, comp_size);

    ZipMember m{std::move(name), {}};
    if (method == 0) {
      if (comp_size != size) throw ParseError("zip: stored member size mismatch in '" + m.name + "'");
      m.data.assign(raw.begin(), raw.end());
    } else if (method == 8) {
      m.data = inflate_raw(raw, size);
    } else {
      throw UnsupportedFormat("zip: compression method " + std::to_string(method) + " in '" + m.name + "'");
    }
    if (crc(m.data) != expected_crc) throw ParseError("zip: CRC mismatch in '" + m.name + "'");
    members.push_back(std::move(m));
  }
  return members;
}

/// Stored (uncompressed) archive with DOS time 1980-01-01 00:00 on every member.
inline std::vector<std::byte> serialize_zip(const std::vector<ZipMember>& members) {
  using namespace zip_detail;
  std::vector<std::byte> out;
  std::vector<std::byte> central;
  constexpr std::uint32_t dos_time = 0;
  constexpr std::uint32_t dos_date = (0 << 9) | (1 << 5) | 1;
  for (const auto& m : members) {
    if (m.data.size() >= 0xFFFFFFFFull || out.size() >= 0xFFFFFFFFull) {
      throw UnsupportedFormat("zip: member '" + m.name + "' exceeds 4 GiB; zip64 writing not supported");
    }
    const std::uint32_t c = crc(m.data);
    const auto size = static_cast<std::uint32_t>(m.data.size());
    const auto offset = static_cast<std::uint32_t>(out.size());

    put32(out, local_sig);
    put16(out, 20);
    put16(out, 0);
    put16(out, 0);
    put16(out, dos_time);
    put16(out, dos_date);
    put32(out, c);
    put32(out, size);
    put32(out, size);
    put16(out, static_cast<std::uint32_t>(m.name.size()));
    put16(out, 0);
    for (char ch : m.name) out.push_back(static_cast<std::byte>(ch));
    out.insert(out.end(), m.data.begin(), m.data.end());

    put32(central, central_sig);
    put16(central, 20);
    put16(central, 20);
    put16(central, 0);
    put16(central, 0);
    put16(central, dos_time);
    put16(central, dos_date);
    put32(central, c);
    put32(central, size);
    put32(central, size);
    put16(central, static_cast<std::uint32_t>(m.name.size()));
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put32(central, 0);
    put32(central, offset);
    for (char ch : m.name) central.push_back(static_cast<std::byte>(ch));
  }
  const auto cd_offset = static_cast<std::uint32_t>(out.size());
  out.insert(out.end(), central.begin(), central.end());
  put32(out, eocd_sig);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint32_t>(members.size()));
  put16(out, static_cast<std::uint32_t>(members.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, cd_offset);
  put16(out, 0);
  return out;
}

}  // namespace ddu
