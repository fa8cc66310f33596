#pragma once

// Softmax-based uncertainty: entropy for a single deterministic model,
// predictive entropy and mutual information for M stochastic members.
// All logarithms are natural (nats).

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dense_ddu/error.hpp"
#include "dense_ddu/maps.hpp"
#include "dense_ddu/tensor.hpp"

namespace ddu {

/// Floor applied to probabilities inside every logarithm.
inline constexpr double probability_floor = 1e-12;
/// Row-sum tolerance before a categorical row is rejected.
inline constexpr double simplex_tolerance = 1e-5;

/// M×H×W×K categorical distributions, member-major.
struct SoftmaxStack {
  std::size_t members = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t classes = 0;
  std::vector<double> probs;

  std::size_t pixels() const noexcept { return height * width; }
  std::span<const double> row(std::size_t member, std::size_t pixel) const {
    return {probs.data() + (member * pixels() + pixel) * classes, classes};
  }

  /// Validates the simplex invariant; rows within tolerance are renormalized.
  static SoftmaxStack from_probabilities(std::size_t m, std::size_t h, std::size_t w, std::size_t k,
                                         std::vector<double> p) {
    if (m == 0 || k == 0) throw ValidationError("softmax stack needs M ≥ 1 and K ≥ 1");
    if (p.size() != m * h * w * k) throw ValidationError("softmax stack size does not match M×H×W×K");
    for (std::size_t r = 0; r < m * h * w; ++r) {
      double* row = p.data() + r * k;
      double sum = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        if (!(row[c] >= -simplex_tolerance && row[c] <= 1.0 + simplex_tolerance)) {
          throw ValidationError("softmax probability outside [0, 1] in row " + std::to_string(r));
        }
        row[c] = std::clamp(row[c], 0.0, 1.0);
        sum += row[c];
      }
      if (std::abs(sum - 1.0) > simplex_tolerance) {
        throw ValidationError("softmax row " + std::to_string(r) + " sums to " + std::to_string(sum));
      }
      if (sum != 1.0) {
        for (std::size_t c = 0; c < k; ++c) row[c] /= sum;
      }
    }
    return {m, h, w, k, std::move(p)};
  }

  /// Accepts H×W×K (M = 1) or M×H×W×K float tensors.
  static SoftmaxStack from_tensor(const Tensor& t) {
    if (t.dtype() != DType::f32 && t.dtype() != DType::f64) {
      throw ValidationError("softmax tensor must be float32 or float64");
    }
    if (t.rank() == 3) return from_probabilities(1, t.dim(0), t.dim(1), t.dim(2), t.to_f64());
    if (t.rank() == 4) return from_probabilities(t.dim(0), t.dim(1), t.dim(2), t.dim(3), t.to_f64());
    throw ValidationError("softmax tensor must be H×W×K or M×H×W×K, got " + shape_string(t.shape()));
  }
};

/// Max-subtracted softmax over the last axis of an H×W×K logit tensor.
inline SoftmaxStack softmax_from_logits(std::size_t h, std::size_t w, std::size_t k, std::span<const double> logits) {
  if (logits.size() != h * w * k || k == 0) throw ValidationError("logit tensor size does not match H×W×K");
  SoftmaxStack s{1, h, w, k, std::vector<double>(logits.size())};
  for (std::size_t p = 0; p < h * w; ++p) {
    const double* in = logits.data() + p * k;
    double* out = s.probs.data() + p * k;
    double mx = in[0];
    for (std::size_t c = 0; c < k; ++c) {
      if (!std::isfinite(in[c])) throw ValidationError("non-finite logit at pixel " + std::to_string(p));
      mx = std::max(mx, in[c]);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    for (std::size_t c = 0; c < k; ++c) out[c] /= sum;
  }
  return s;
}

inline SoftmaxStack softmax_from_logits(const Tensor& t) {
  if (t.rank() != 3) throw ValidationError("logit tensor must be H×W×K, got " + shape_string(t.shape()));
  const auto v = t.to_f64();
  return softmax_from_logits(t.dim(0), t.dim(1), t.dim(2), v);
}

/// −Σ p log p with the probability floor; 0·log 0 contributes 0.
inline double categorical_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) h -= v * std::log(std::max(v, probability_floor));
  return h;
}

inline UncertaintyMap entropy(const SoftmaxStack& s) {
  if (s.members != 1) {
    throw ValidationError("entropy expects a single member, got M=" + std::to_string(s.members) +
                          "; use predictive_entropy for ensembles");
  }
  std::vector<double> v(s.pixels());
  for (std::size_t p = 0; p < s.pixels(); ++p) v[p] = categorical_entropy(s.row(0, p));
  return {s.height, s.width, std::move(v), Source::entropy};
}

namespace uncertainty_detail {

inline void member_mean(const SoftmaxStack& s, std::size_t p, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t m = 0; m < s.members; ++m) {
    const auto r = s.row(m, p);
    for (std::size_t c = 0; c < s.classes; ++c) out[c] += r[c];
  }
  const double inv = static_cast<double>(s.members);
  for (double& x : out) x /= inv;
}

}  // namespace uncertainty_detail

/// H[E_m p_m]: entropy of the member-averaged distribution.
inline UncertaintyMap predictive_entropy(const SoftmaxStack& s) {
  std::vector<double> v(s.pixels());
  std::vector<double> mean(s.classes);
  for (std::size_t p = 0; p < s.pixels(); ++p) {
    uncertainty_detail::member_mean(s, p, mean);
    v[p] = categorical_entropy(mean);
  }
  return {s.height, s.width, std::move(v), Source::predictive_entropy};
}

/// H[E_m p_m] − E_m H[p_m], clamped at zero.
inline UncertaintyMap mutual_information(const SoftmaxStack& s) {
  std::vector<double> v(s.pixels());
  std::vector<double> mean(s.classes);
  for (std::size_t p = 0; p < s.pixels(); ++p) {
    uncertainty_detail::member_mean(s, p, mean);
    const double pe = categorical_entropy(mean);
    double expected = 0.0;
    for (std::size_t m = 0; m < s.members; ++m) expected += categorical_entropy(s.row(m, p));
    expected /= static_cast<double>(s.members);
    v[p] = std::max(0.0, pe - expected);
  }
  return {s.height, s.width, std::move(v), Source::mutual_information};
}

/// Flips a confidence-like map into an uncertainty-like one; pixel order reverses exactly.
inline UncertaintyMap negate_to_uncertainty(const UncertaintyMap& map) {
  if (map.polarity() != Polarity::confidence) {
    throw ValidationError("negate_to_uncertainty: map '" + std::string(source_name(map.source)) +
                          "' is already uncertainty-like");
  }
  std::vector<double> v(map.values.size());
  std::transform(map.values.begin(), map.values.end(), v.begin(), [](double x) { return -x; });
  return {map.height, map.width, std::move(v), Source::negative_log_density};
}

/// Uncertainty-like view of any map (negates log-density maps, passes others through).
inline UncertaintyMap as_uncertainty(const UncertaintyMap& map) {
  return map.polarity() == Polarity::confidence ? negate_to_uncertainty(map) : map;
}

/// Per-pixel argmax of the member-averaged distribution.
inline LabelMap predicted_labels(const SoftmaxStack& s, std::int32_t ignore_id) {
  std::vector<std::int32_t> out(s.pixels());
  std::vector<double> mean(s.classes);
  for (std::size_t p = 0; p < s.pixels(); ++p) {
    uncertainty_detail::member_mean(s, p, mean);
    out[p] = static_cast<std::int32_t>(std::max_element(mean.begin(), mean.end()) - mean.begin());
  }
  return {s.height, s.width, std::move(out), ignore_id};
}

}  // namespace ddu
