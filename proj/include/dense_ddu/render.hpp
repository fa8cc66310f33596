#pragma once

// 8-bit grayscale rendering of uncertainty maps, accuracy maps and distance
// matrices, written as PNG (non-interlaced, colour type 0) or binary PGM.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <zlib.h>

#include "dense_ddu/analysis.hpp"
#include "dense_ddu/error.hpp"
#include "dense_ddu/file_io.hpp"
#include "dense_ddu/maps.hpp"
#include "dense_ddu/metrics.hpp"

namespace ddu {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

/// Value range mapped onto [0, 255]: the map's own min/max, or a pair of
/// quantiles (values outside are clamped).
struct Normalization {
  enum class Kind { minmax, quantile, fixed } kind = Kind::minmax;
  double lo = 0.0;  // quantile levels for `quantile`, absolute bounds for `fixed`
  double hi = 1.0;

  static Normalization minmax() { return {}; }
  static Normalization quantile(double lo, double hi) { return {Kind::quantile, lo, hi}; }
  /// Shared bounds, e.g. computed across a whole dataset.
  static Normalization fixed(double lo, double hi) { return {Kind::fixed, lo, hi}; }
};

/// Resolves a normalization into absolute [lo, hi] bounds for `values`.
inline std::pair<double, double> normalization_bounds(std::span<const double> values, const Normalization& norm) {
  if (values.empty()) return {0.0, 0.0};
  switch (norm.kind) {
    case Normalization::Kind::minmax: {
      const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
      return {*mn, *mx};
    }
    case Normalization::Kind::quantile: {
      if (!(norm.lo >= 0.0 && norm.lo < norm.hi && norm.hi <= 1.0)) {
        throw ConfigError("quantile normalization needs 0 ≤ lo < hi ≤ 1");
      }
      std::vector<double> sorted(values.begin(), values.end());
      std::sort(sorted.begin(), sorted.end());
      return {metrics_detail::quantile_sorted(sorted, norm.lo), metrics_detail::quantile_sorted(sorted, norm.hi)};
    }
    case Normalization::Kind::fixed:
      return {norm.lo, norm.hi};
  }
  return {0.0, 0.0};
}

inline std::uint8_t to_gray(double v, double lo, double hi) {
  if (!(hi > lo)) return 128;
  const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(t * 255.0));
}

/// Brighter means larger values: more uncertain for uncertainty-like maps,
/// more confident for log-density maps. A constant map renders mid-gray.
inline GrayImage render_map(const UncertaintyMap& map, const Normalization& norm = Normalization::minmax()) {
  for (double v : map.values) {
    if (!std::isfinite(v)) throw ValidationError("render_map: non-finite value");
  }
  const auto [lo, hi] = normalization_bounds(map.values, norm);
  GrayImage img{map.width, map.height, std::vector<std::uint8_t>(map.values.size())};
  for (std::size_t p = 0; p < map.values.size(); ++p) img.pixels[p] = to_gray(map.values[p], lo, hi);
  return img;
}

/// 255 where the prediction is right, 0 where wrong, `ignore_gray` on ignore-id pixels.
inline GrayImage render_accuracy(const LabelMap& pred, const LabelMap& gt, std::uint8_t ignore_gray = 128) {
  require_same_shape(pred.height, pred.width, gt.height, gt.width, "render_accuracy");
  GrayImage img{gt.width, gt.height, std::vector<std::uint8_t>(gt.pixels())};
  for (std::size_t p = 0; p < gt.pixels(); ++p) {
    img.pixels[p] = gt.ignored(p) ? ignore_gray : (pred[p] == gt[p] ? 255 : 0);
  }
  return img;
}

/// Distance matrix heatmap (bright = far); undefined cells are black.
inline GrayImage render_matrix(const DistanceMatrix& m, const Normalization& norm = Normalization::minmax()) {
  std::vector<double> defined;
  for (const auto& e : m.entries) {
    if (e) defined.push_back(*e);
  }
  const auto [lo, hi] = normalization_bounds(defined, norm);
  GrayImage img{m.num_classes, m.num_classes, std::vector<std::uint8_t>(m.entries.size(), 0)};
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    if (m.entries[i]) img.pixels[i] = to_gray(*m.entries[i], lo, hi);
  }
  return img;
}

/// Nearest-neighbour enlargement, for tiny images such as 21×21 matrices.
inline GrayImage upscale(const GrayImage& in, std::size_t factor) {
  if (factor <= 1) return in;
  GrayImage out{in.width * factor, in.height * factor, std::vector<std::uint8_t>(in.pixels.size() * factor * factor)};
  for (std::size_t r = 0; r < out.height; ++r) {
    for (std::size_t c = 0; c < out.width; ++c) out.pixels[r * out.width + c] = in.at(r / factor, c / factor);
  }
  return out;
}

namespace render_detail {

inline void put_be32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::byte>((v >> s) & 0xFF));
}

inline void put_chunk(std::vector<std::byte>& out, const char type[5], const std::vector<std::byte>& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>(type[i]));
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(out.data() + start),
                         static_cast<uInt>(out.size() - start));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace render_detail

inline std::vector<std::byte> encode_png(const GrayImage& img) {
  using namespace render_detail;
  if (img.width == 0 || img.height == 0) throw ValidationError("encode_png: empty image");
  std::vector<std::byte> out;
  for (unsigned char c : std::initializer_list<unsigned char>{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'}) out.push_back(static_cast<std::byte>(c));

  std::vector<std::byte> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  for (unsigned char c : {8, 0, 0, 0, 0}) ihdr.push_back(static_cast<std::byte>(c));  // depth, gray, deflate, filter, no interlace
  put_chunk(out, "IHDR", ihdr);

  // each scanline is prefixed by filter type 0
  std::vector<Bytef> raw;
  raw.reserve(img.height * (img.width + 1));
  for (std::size_t r = 0; r < img.height; ++r) {
    raw.push_back(0);
    raw.insert(raw.end(), img.pixels.begin() + static_cast<std::ptrdiff_t>(r * img.width),
               img.pixels.begin() + static_cast<std::ptrdiff_t>((r + 1) * img.width));
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<Bytef> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw IoError("encode_png: deflate failed");
  }
  std::vector<std::byte> idat(zlen);
  std::memcpy(idat.data(), z.data(), zlen);
  put_chunk(out, "IDAT", idat);
  put_chunk(out, "IEND", {});
  return out;
}

inline std::vector<std::byte> encode_pgm(const GrayImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::byte> out;
  for (char c : header) out.push_back(static_cast<std::byte>(c));
  for (auto v : img.pixels) out.push_back(static_cast<std::byte>(v));
  return out;
}

/// Format chosen by extension: `.pgm` writes PGM, anything else PNG.
inline void write_image(const fs::path& path, const GrayImage& img) {
  write_file_atomic(path, path.extension() == ".pgm" ? encode_pgm(img) : encode_png(img));
}

}  // namespace ddu
