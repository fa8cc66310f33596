#pragma once

// Pixel-independence diagnostic: class means of the features observed at fixed
// pixel coordinates across a dataset, and the cross-location distance matrix
// M[p][q] = ‖μ_a(p) − μ_b(q)‖₂ between two such locations.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dense_ddu/error.hpp"
#include "dense_ddu/manifest.hpp"
#include "dense_ddu/maps.hpp"
#include "dense_ddu/metrics.hpp"

namespace ddu {

struct PixelCoord {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const PixelCoord&) const = default;
};

struct LocationMeans {
  PixelCoord coord;
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<std::uint64_t> counts;  // K
  std::vector<double> sums;           // K×D running sums
  std::size_t skipped_images = 0;     // images too small to contain the coordinate

  LocationMeans() = default;
  LocationMeans(PixelCoord c, std::size_t k, std::size_t d) : coord(c), num_classes(k), dim(d), counts(k, 0), sums(k * d, 0.0) {}

  bool defined(std::size_t cls) const { return counts[cls] > 0; }

  /// Mean feature of class `cls` at this location, or empty if never observed.
  std::optional<std::vector<double>> mean(std::size_t cls) const {
    if (!defined(cls)) return std::nullopt;
    std::vector<double> m(sums.begin() + static_cast<std::ptrdiff_t>(cls * dim),
                          sums.begin() + static_cast<std::ptrdiff_t>((cls + 1) * dim));
    for (double& v : m) v /= static_cast<double>(counts[cls]);
    return m;
  }

  void add_image(const FeatureMap& f, const LabelMap& l) {
    require_same_shape(f.height, f.width, l.height, l.width, "location means");
    if (f.dim != dim) throw ValidationError("location means: feature dim mismatch");
    if (coord.row >= f.height || coord.col >= f.width) {
      ++skipped_images;
      return;
    }
    const std::size_t p = coord.row * f.width + coord.col;
    if (l.ignored(p)) return;
    const auto cls = l[p];
    if (cls < 0 || static_cast<std::size_t>(cls) >= num_classes) {
      throw ValidationError("location means: label " + std::to_string(cls) + " outside [0, K)");
    }
    const auto c = static_cast<std::size_t>(cls);
    ++counts[c];
    const auto z = f.pixel(p);
    for (std::size_t d = 0; d < dim; ++d) sums[c * dim + d] += z[d];
  }
};

/// Location means over images supplied by `load(i)` in index order.
inline std::vector<LocationMeans> fit_location_means(
    std::size_t num_images, std::size_t num_classes, std::size_t dim, std::span<const PixelCoord> coords,
    const std::function<std::pair<FeatureMap, LabelMap>(std::size_t)>& load) {
  std::vector<LocationMeans> out;
  for (const auto& c : coords) out.emplace_back(c, num_classes, dim);
  for (std::size_t i = 0; i < num_images; ++i) {
    const auto [f, l] = load(i);
    for (auto& lm : out) lm.add_image(f, l);
  }
  return out;
}

inline std::vector<LocationMeans> fit_location_means(const DatasetManifest& m, std::span<const PixelCoord> coords) {
  return fit_location_means(m.entries.size(), m.num_classes, m.feature_dim, coords, [&](std::size_t i) {
    return std::pair{load_features(m, m.entries[i]), load_labels(m, m.entries[i])};
  });
}

/// K×K matrix with undefined entries where either class mean is missing.
struct DistanceMatrix {
  std::size_t num_classes = 0;
  std::vector<std::optional<double>> entries;

  const std::optional<double>& at(std::size_t p, std::size_t q) const { return entries[p * num_classes + q]; }
};

inline DistanceMatrix distance_matrix(const LocationMeans& a, const LocationMeans& b) {
  if (a.num_classes != b.num_classes || a.dim != b.dim) {
    throw ValidationError("distance_matrix: locations differ in K or D");
  }
  const std::size_t k = a.num_classes;
  DistanceMatrix m{k, std::vector<std::optional<double>>(k * k)};
  for (std::size_t p = 0; p < k; ++p) {
    const auto mp = a.mean(p);
    if (!mp) continue;
    for (std::size_t q = 0; q < k; ++q) {
      const auto mq = b.mean(q);
      if (!mq) continue;
      double s = 0.0;
      for (std::size_t d = 0; d < a.dim; ++d) {
        const double diff = (*mp)[d] - (*mq)[d];
        s += diff * diff;
      }
      m.entries[p * k + q] = std::sqrt(s);
    }
  }
  return m;
}

/// Rows of the matrix as CSV; undefined cells are empty.
inline std::string distance_matrix_to_csv(const DistanceMatrix& m) {
  std::string out;
  for (std::size_t p = 0; p < m.num_classes; ++p) {
    for (std::size_t q = 0; q < m.num_classes; ++q) {
      if (q) out += ',';
      if (m.at(p, q)) out += metrics_detail::fmt_double(*m.at(p, q));
    }
    out += '\n';
  }
  return out;
}

inline DistanceMatrix distance_matrix_from_csv(const std::string& text) {
  std::vector<std::vector<std::optional<double>>> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    std::vector<std::optional<double>> row;
    std::size_t s = 0;
    while (true) {
      const auto comma = line.find(',', s);
      const std::string cell = line.substr(s, comma == std::string::npos ? std::string::npos : comma - s);
      if (cell.empty()) {
        row.emplace_back();
      } else {
        try {
          std::size_t used = 0;
          row.emplace_back(std::stod(cell, &used));
          if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
          throw ParseError("distance matrix CSV: bad cell '" + cell + "'");
        }
      }
      if (comma == std::string::npos) break;
      s = comma + 1;
    }
    rows.push_back(std::move(row));
  }
  DistanceMatrix m{rows.size(), {}};
  for (const auto& r : rows) {
    if (r.size() != rows.size()) throw ParseError("distance matrix CSV is not square");
    m.entries.insert(m.entries.end(), r.begin(), r.end());
  }
  return m;
}

}  // namespace ddu
