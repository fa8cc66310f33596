#pragma once

// NPY (v1.0 / v2.0) tensor serialization. Only little-endian C-order payloads
// are accepted; the writer emits the same header bytes numpy does.

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dense_ddu/error.hpp"
#include "dense_ddu/file_io.hpp"
#include "dense_ddu/tensor.hpp"

namespace ddu {

static_assert(std::endian::native == std::endian::little, "NPY payloads are copied verbatim");

struct NpyHeader {
  DType dtype = DType::f64;
  Shape shape;
  std::size_t data_offset = 0;  // bytes from start of file to payload
};

namespace npy_detail {

inline constexpr std::string_view magic = "\x93NUMPY";

// Parses the python dict literal numpy writes:
//   {'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }
class DictParser {
 public:
  explicit DictParser(std::string_view s) : s_(s) {}

  struct Result {
    std::optional<std::string> descr;
    std::optional<bool> fortran_order;
    std::optional<Shape> shape;
  };

  Result parse() {
    Result r;
    expect('{');
    while (true) {
      skip_ws();
      if (peek() == '}') { ++pos_; break; }
      const std::string key = parse_string();
      expect(':');
      skip_ws();
      if (key == "descr") {
        r.descr = parse_string();
      } else if (key == "fortran_order") {
        r.fortran_order = parse_bool();
      } else if (key == "shape") {
        r.shape = parse_tuple();
      } else {
        throw ParseError("npy header: unexpected key '" + key + "'");
      }
      skip_ws();
      if (peek() == ',') { ++pos_; continue; }
      expect('}');
      break;
    }
    skip_ws();
    if (pos_ != s_.size()) throw ParseError("npy header: trailing characters after dict");
    return r;
  }

 private:
  char peek() const {
    if (pos_ >= s_.size()) throw ParseError("npy header: unexpected end");
    return s_[pos_];
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  void expect(char c) {
    skip_ws();
    if (peek() != c) throw ParseError(std::string("npy header: expected '") + c + "'");
    ++pos_;
  }
  std::string parse_string() {
    skip_ws();
    const char quote = peek();
    if (quote != '\'' && quote != '"') throw ParseError("npy header: expected string");
    const auto end = s_.find(quote, pos_ + 1);
    if (end == std::string_view::npos) throw ParseError("npy header: unterminated string");
    std::string out(s_.substr(pos_ + 1, end - pos_ - 1));
    pos_ = end + 1;
    return out;
  }
  bool parse_bool() {
    if (s_.substr(pos_, 4) == "True") { pos_ += 4; return true; }
    if (s_.substr(pos_, 5) == "False") { pos_ += 5; return false; }
    throw ParseError("npy header: expected True/False");
  }
  Shape parse_tuple() {
    expect('(');
    Shape shape;
    while (true) {
      skip_ws();
      if (peek() == ')') { ++pos_; break; }
      if (!std::isdigit(static_cast<unsigned char>(peek()))) {
        throw ParseError("npy header: bad shape entry");
      }
      std::size_t v = 0;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        v = v * 10 + static_cast<std::size_t>(s_[pos_] - '0');
        ++pos_;
      }
      // L suffix from python 2 era writers
      if (pos_ < s_.size() && s_[pos_] == 'L') ++pos_;
      shape.push_back(v);
      skip_ws();
      if (peek() == ',') { ++pos_; continue; }
      expect(')');
      break;
    }
    return shape;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

inline DType parse_descr(const std::string& descr) {
  if (descr.size() < 2) throw ParseError("npy header: bad descr '" + descr + "'");
  const char order = descr[0];
  const std::string code = descr.substr(1);
  if (code == "u1") return DType::u8;  // byte order is irrelevant for single bytes
  if (order == '>') throw UnsupportedFormat("npy: big-endian payload '" + descr + "' not supported");
  if (order != '<' && order != '=') throw UnsupportedFormat("npy: unsupported descr '" + descr + "'");
  if (code == "f4") return DType::f32;
  if (code == "f8") return DType::f64;
  if (code == "i4") return DType::i32;
  throw UnsupportedFormat("npy: unsupported dtype '" + descr + "'");
}

inline std::string descr_of(DType t) {
  switch (t) {
    case DType::f32: return "<f4";
    case DType::f64: return "<f8";
    case DType::u8: return "|u1";
    case DType::i32: return "<i4";
  }
  return "";
}

inline std::uint32_t read_le(std::span<const std::byte> b, std::size_t off, std::size_t n) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < n; ++i) v |= std::to_integer<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

}  // namespace npy_detail

/// Parses the header of an in-memory NPY buffer.
inline NpyHeader parse_npy_header(std::span<const std::byte> buf) {
  using namespace npy_detail;
  if (buf.size() < 10 || std::memcmp(buf.data(), magic.data(), magic.size()) != 0) {
    throw ParseError("npy: missing magic header");
  }
  const auto major = std::to_integer<int>(buf[6]);
  std::size_t len_bytes = 0;
  if (major == 1) {
    len_bytes = 2;
  } else if (major == 2 || major == 3) {
    len_bytes = 4;
  } else {
    throw UnsupportedFormat("npy: unsupported format version " + std::to_string(major));
  }
  if (buf.size() < 8 + len_bytes) throw ParseError("npy: truncated header");
  const std::size_t header_len = read_le(buf, 8, len_bytes);
  const std::size_t start = 8 + len_bytes;
  if (buf.size() < start + header_len) throw ParseError("npy: truncated header");
  const std::string_view text(reinterpret_cast<const char*>(buf.data() + start), header_len);

  const auto dict = DictParser(text).parse();
  if (!dict.descr || !dict.fortran_order || !dict.shape) {
    throw ParseError("npy header: missing descr/fortran_order/shape");
  }
  NpyHeader h;
  h.dtype = parse_descr(*dict.descr);
  if (*dict.fortran_order) throw UnsupportedFormat("npy: Fortran-ordered payloads not supported");
  h.shape = *dict.shape;
  h.data_offset = start + header_len;
  return h;
}

inline Tensor parse_npy(std::span<const std::byte> buf) {
  const NpyHeader h = parse_npy_header(buf);
  Tensor t = Tensor::zeros(h.dtype, h.shape);
  const std::size_t expected = t.size() * dtype_size(h.dtype);
  const std::size_t available = buf.size() - h.data_offset;
  if (available != expected) {
    throw ParseError("npy: shape " + shape_string(h.shape) + " needs " + std::to_string(expected) +
                     " payload bytes, found " + std::to_string(available));
  }
  auto dst = t.mutable_bytes();
  if (expected) std::memcpy(dst.data(), buf.data() + h.data_offset, expected);
  return t;
}

/// Serializes a tensor byte-for-byte the way numpy.save does.
inline std::vector<std::byte> serialize_npy(const Tensor& t) {
  std::string dict = "{'descr': '" + npy_detail::descr_of(t.dtype()) +
                     "', 'fortran_order': False, 'shape': (";
  const auto& shape = t.shape();
  for (std::size_t i = 0; i < shape.size(); ++i) {
    dict += std::to_string(shape[i]);
    dict += (shape.size() == 1) ? "," : (i + 1 < shape.size() ? ", " : "");
  }
  dict += "), }";
  // numpy reserves room so the leading axis can grow in place
  if (!shape.empty()) {
    const std::size_t digits = std::to_string(shape[0]).size();
    if (digits < 21) dict.append(21 - digits, ' ');
  }
  std::size_t len_bytes = 2;
  int major = 1;
  std::size_t total = 8 + len_bytes + dict.size() + 1;
  std::size_t padded = (total + 63) / 64 * 64;
  if (padded - 8 - len_bytes > 0xFFFF) {
    len_bytes = 4;
    major = 2;
    total = 8 + len_bytes + dict.size() + 1;
    padded = (total + 63) / 64 * 64;
  }
  dict.append(padded - total, ' ');
  dict += '\n';

  const auto payload = t.bytes();
  std::vector<std::byte> out;
  out.reserve(padded + payload.size());
  for (char c : npy_detail::magic) out.push_back(static_cast<std::byte>(c));
  out.push_back(static_cast<std::byte>(major));
  out.push_back(std::byte{0});
  const std::size_t header_len = dict.size();
  for (std::size_t i = 0; i < len_bytes; ++i) {
    out.push_back(static_cast<std::byte>((header_len >> (8 * i)) & 0xFF));
  }
  for (char c : dict) out.push_back(static_cast<std::byte>(c));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline Tensor read_tensor(const fs::path& path) {
  try {
    return parse_npy(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const UnsupportedFormat& e) {
    throw UnsupportedFormat(path.string() + ": " + e.what());
  }
}

/// Reads only the header; used to validate inputs before any output is written.
inline NpyHeader read_tensor_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::byte> head(4096);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  try {
    return parse_npy_header(head);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::unsupported_format) throw UnsupportedFormat(path.string() + ": " + e.what());
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_tensor(const fs::path& path, const Tensor& t) {
  write_file_atomic(path, serialize_npy(t));
}

}  // namespace ddu
