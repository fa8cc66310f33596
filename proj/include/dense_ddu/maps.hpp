#pragma once

// Per-pixel containers shared by every stage of the pipeline.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dense_ddu/error.hpp"
#include "dense_ddu/tensor.hpp"

namespace ddu {

inline constexpr std::int32_t default_ignore_id = 255;

/// H×W×D feature vectors, row-major: element (i, j, d) lives at (i·W + j)·D + d.
struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(std::size_t h, std::size_t w, std::size_t d)
      : height(h), width(w), dim(d), data(h * w * d, 0.0) {}
  FeatureMap(std::size_t h, std::size_t w, std::size_t d, std::vector<double> values)
      : height(h), width(w), dim(d), data(std::move(values)) {
    if (data.size() != h * w * d) throw ValidationError("feature map size does not match H×W×D");
  }

  std::size_t pixels() const noexcept { return height * width; }
  std::span<const double> pixel(std::size_t p) const { return {data.data() + p * dim, dim}; }
  std::span<double> pixel(std::size_t p) { return {data.data() + p * dim, dim}; }
  std::span<const double> at(std::size_t i, std::size_t j) const { return pixel(i * width + j); }

  static FeatureMap from_tensor(const Tensor& t) {
    if (t.rank() != 3) {
      throw ValidationError("feature tensor must be H×W×D, got shape " + shape_string(t.shape()));
    }
    if (t.dtype() != DType::f32 && t.dtype() != DType::f64) {
      throw ValidationError("feature tensor must be float32 or float64");
    }
    return {t.dim(0), t.dim(1), t.dim(2), t.to_f64()};
  }
};

/// H×W class ids; `ignore_id` marks pixels excluded from fitting and evaluation.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::int32_t> labels;
  std::int32_t ignore_id = default_ignore_id;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::vector<std::int32_t> values,
           std::int32_t ignore = default_ignore_id)
      : height(h), width(w), labels(std::move(values)), ignore_id(ignore) {
    if (labels.size() != h * w) throw ValidationError("label map size does not match H×W");
  }

  std::size_t pixels() const noexcept { return height * width; }
  std::int32_t operator[](std::size_t p) const { return labels[p]; }
  bool ignored(std::size_t p) const { return labels[p] == ignore_id; }

  /// Every label is either the ignore id or in [0, num_classes).
  void validate(std::size_t num_classes) const {
    for (std::size_t p = 0; p < labels.size(); ++p) {
      const auto l = labels[p];
      if (l != ignore_id && (l < 0 || static_cast<std::size_t>(l) >= num_classes)) {
        throw ValidationError("label " + std::to_string(l) + " at pixel " + std::to_string(p) +
                              " outside [0, " + std::to_string(num_classes) + ") and not ignore id");
      }
    }
  }

  static LabelMap from_tensor(const Tensor& t, std::int32_t ignore) {
    if (t.rank() != 2) {
      throw ValidationError("label tensor must be H×W, got shape " + shape_string(t.shape()));
    }
    return {t.dim(0), t.dim(1), t.to_labels(), ignore};
  }
};

enum class Polarity { uncertainty, confidence };

enum class Source { entropy, predictive_entropy, mutual_information, log_density, negative_log_density };

inline std::string_view polarity_name(Polarity p) {
  return p == Polarity::uncertainty ? "uncertainty" : "confidence";
}

inline std::string_view source_name(Source s) {
  switch (s) {
    case Source::entropy: return "entropy";
    case Source::predictive_entropy: return "pe";
    case Source::mutual_information: return "mi";
    case Source::log_density: return "log_density";
    case Source::negative_log_density: return "neg_log_density";
  }
  return "?";
}

inline Source parse_source(std::string_view s) {
  if (s == "entropy") return Source::entropy;
  if (s == "pe") return Source::predictive_entropy;
  if (s == "mi") return Source::mutual_information;
  if (s == "log_density") return Source::log_density;
  if (s == "neg_log_density") return Source::negative_log_density;
  throw ParseError("unknown uncertainty source '" + std::string(s) + "'");
}

inline Polarity polarity_of(Source s) {
  return s == Source::log_density ? Polarity::confidence : Polarity::uncertainty;
}

/// H×W scalar field. Only log-density maps are confidence-like (bright = confident).
struct UncertaintyMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  Source source = Source::entropy;

  UncertaintyMap() = default;
  UncertaintyMap(std::size_t h, std::size_t w, std::vector<double> v, Source src)
      : height(h), width(w), values(std::move(v)), source(src) {
    if (values.size() != h * w) throw ValidationError("uncertainty map size does not match H×W");
    for (double x : values) {
      if (!std::isfinite(x)) throw ValidationError("uncertainty map contains non-finite values");
    }
  }

  Polarity polarity() const noexcept { return polarity_of(source); }
  std::size_t pixels() const noexcept { return height * width; }

  Tensor to_tensor() const { return Tensor({height, width}, values); }
};

inline void require_same_shape(std::size_t h1, std::size_t w1, std::size_t h2, std::size_t w2,
                               std::string_view what) {
  if (h1 != h2 || w1 != w2) {
    throw ValidationError(std::string(what) + ": shape mismatch " + std::to_string(h1) + "×" +
                          std::to_string(w1) + " vs " + std::to_string(h2) + "×" + std::to_string(w2));
  }
}

}  // namespace ddu
