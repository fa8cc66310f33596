#pragma once

// Patch-based uncertainty evaluation (p(accurate|certain), p(uncertain|inaccurate),
// PAVPU) with threshold sweeps, dataset mIoU, and a rank-based OoD AUROC.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dense_ddu/error.hpp"
#include "dense_ddu/maps.hpp"

namespace ddu {

enum class PatchAggregate { mean, max, median };
enum class ThresholdMode { quantile, absolute };

inline std::string_view aggregate_name(PatchAggregate a) {
  switch (a) {
    case PatchAggregate::mean: return "mean";
    case PatchAggregate::max: return "max";
    case PatchAggregate::median: return "median";
  }
  return "?";
}

inline PatchAggregate parse_aggregate(std::string_view s) {
  if (s == "mean") return PatchAggregate::mean;
  if (s == "max") return PatchAggregate::max;
  if (s == "median") return PatchAggregate::median;
  throw ConfigError("unknown patch aggregate '" + std::string(s) + "' (mean|max|median)");
}

inline std::string_view threshold_mode_name(ThresholdMode m) {
  return m == ThresholdMode::quantile ? "quantile" : "absolute";
}

inline ThresholdMode parse_threshold_mode(std::string_view s) {
  if (s == "quantile") return ThresholdMode::quantile;
  if (s == "absolute") return ThresholdMode::absolute;
  throw ConfigError("unknown threshold mode '" + std::string(s) + "' (quantile|absolute)");
}

/// Square w×w patches placed every `stride` pixels (0 means stride = w).
/// Only windows that fit entirely inside the image are evaluated.
struct PatchConfig {
  std::size_t window = 1;
  double alpha = 0.5;
  std::size_t stride = 0;
  PatchAggregate aggregate = PatchAggregate::mean;

  std::size_t effective_stride() const noexcept { return stride ? stride : window; }

  void validate() const {
    if (window < 1) throw ConfigError("patch window must be ≥ 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("patch alpha must lie in (0, 1]");
  }
};

struct ConfusionCounts {
  std::uint64_t n_ac = 0;  // accurate, certain
  std::uint64_t n_au = 0;  // accurate, uncertain
  std::uint64_t n_ic = 0;  // inaccurate, certain
  std::uint64_t n_iu = 0;  // inaccurate, uncertain

  std::uint64_t total() const noexcept { return n_ac + n_au + n_ic + n_iu; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    n_ac += o.n_ac;
    n_au += o.n_au;
    n_ic += o.n_ic;
    n_iu += o.n_iu;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Each ratio is empty when its denominator is zero.
struct PatchMetrics {
  std::optional<double> p_acc_given_cert;
  std::optional<double> p_unc_given_inacc;
  std::optional<double> pavpu;
};

inline std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

inline PatchMetrics metrics_from_counts(const ConfusionCounts& c) {
  return {ratio(c.n_ac, c.n_ac + c.n_ic), ratio(c.n_iu, c.n_ic + c.n_iu), ratio(c.n_ac + c.n_iu, c.total())};
}

/// Accuracy flag and aggregated uncertainty of one patch.
struct PatchStat {
  bool accurate = false;
  double uncertainty = 0.0;
};

namespace metrics_detail {

inline void check_inputs(const LabelMap& pred, const LabelMap& gt, const UncertaintyMap& unc) {
  if (unc.polarity() != Polarity::uncertainty) {
    throw ValidationError("patch metrics need an uncertainty-like map; negate log-density maps first");
  }
  require_same_shape(pred.height, pred.width, gt.height, gt.width, "prediction vs ground truth");
  require_same_shape(unc.height, unc.width, gt.height, gt.width, "uncertainty vs ground truth");
}

inline double aggregate(std::vector<double>& v, PatchAggregate mode) {
  switch (mode) {
    case PatchAggregate::mean: {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    }
    case PatchAggregate::max:
      return *std::max_element(v.begin(), v.end());
    case PatchAggregate::median: {
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
  }
  return 0.0;
}

/// Linear interpolation between order statistics (numpy's default).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

}  // namespace metrics_detail

/// Per-patch accuracy and uncertainty for one image. Ignore-id pixels take no
/// part in either; patches without any valid pixel are skipped.
inline std::vector<PatchStat> summarize_patches(const LabelMap& pred, const LabelMap& gt, const UncertaintyMap& unc,
                                                const PatchConfig& cfg) {
  cfg.validate();
  metrics_detail::check_inputs(pred, gt, unc);
  const std::size_t w = cfg.window;
  const std::size_t s = cfg.effective_stride();
  std::vector<PatchStat> out;
  std::vector<double> vals;
  for (std::size_t r = 0; r + w <= gt.height; r += s) {
    for (std::size_t c = 0; c + w <= gt.width; c += s) {
      vals.clear();
      std::size_t correct = 0;
      for (std::size_t i = r; i < r + w; ++i) {
        for (std::size_t j = c; j < c + w; ++j) {
          const std::size_t p = i * gt.width + j;
          if (gt.ignored(p)) continue;
          vals.push_back(unc.values[p]);
          if (pred[p] == gt[p]) ++correct;
        }
      }
      if (vals.empty()) continue;
      const bool accurate = static_cast<double>(correct) >= cfg.alpha * static_cast<double>(vals.size());
      out.push_back({accurate, metrics_detail::aggregate(vals, cfg.aggregate)});
    }
  }
  return out;
}

/// A patch is certain iff its aggregated uncertainty ≤ threshold.
inline ConfusionCounts counts_at(std::span<const PatchStat> patches, double threshold) {
  ConfusionCounts c;
  for (const auto& p : patches) {
    const bool certain = p.uncertainty <= threshold;
    if (p.accurate) {
      ++(certain ? c.n_ac : c.n_au);
    } else {
      ++(certain ? c.n_ic : c.n_iu);
    }
  }
  return c;
}

inline ConfusionCounts patch_counts(const LabelMap& pred, const LabelMap& gt, const UncertaintyMap& unc,
                                    double threshold, const PatchConfig& cfg = {}) {
  return counts_at(summarize_patches(pred, gt, unc, cfg), threshold);
}

struct CurvePoint {
  double threshold = 0.0;
  ConfusionCounts counts;
  PatchMetrics metrics;
};

struct MetricCurve {
  ThresholdMode mode = ThresholdMode::quantile;
  std::vector<CurvePoint> points;
};

/// Thresholds for a sweep over pooled patch uncertainties: `points` quantiles
/// at levels i/(points+1), or `points` values evenly spanning [min, max].
inline std::vector<double> sweep_thresholds(std::span<const PatchStat> patches, ThresholdMode mode, std::size_t points) {
  if (points < 2) throw ConfigError("threshold sweep needs at least 2 points");
  if (patches.empty()) throw ValidationError("threshold sweep: no evaluable patches");
  std::vector<double> u;
  u.reserve(patches.size());
  for (const auto& p : patches) u.push_back(p.uncertainty);
  std::sort(u.begin(), u.end());
  std::vector<double> t(points);
  for (std::size_t i = 0; i < points; ++i) {
    if (mode == ThresholdMode::quantile) {
      t[i] = metrics_detail::quantile_sorted(u, static_cast<double>(i + 1) / static_cast<double>(points + 1));
    } else {
      const double f = static_cast<double>(i) / static_cast<double>(points - 1);
      t[i] = i + 1 == points ? u.back() : u.front() + (u.back() - u.front()) * f;
    }
  }
  return t;
}

/// Sweep over pooled patch statistics (already summarized per image).
inline MetricCurve sweep_patches(std::span<const PatchStat> patches, ThresholdMode mode, std::size_t points) {
  const auto thresholds = sweep_thresholds(patches, mode, points);
  // sort once; counts at each threshold come from prefix sums
  std::vector<PatchStat> sorted(patches.begin(), patches.end());
  std::sort(sorted.begin(), sorted.end(), [](const PatchStat& a, const PatchStat& b) {
    return a.uncertainty < b.uncertainty;
  });
  std::vector<std::uint64_t> acc_prefix(sorted.size() + 1, 0);
  for (std::size_t i = 0; i < sorted.size(); ++i) acc_prefix[i + 1] = acc_prefix[i] + (sorted[i].accurate ? 1 : 0);
  const std::uint64_t total_acc = acc_prefix.back();
  const std::uint64_t total = sorted.size();

  MetricCurve curve{mode, {}};
  for (double t : thresholds) {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), t,
                                     [](double v, const PatchStat& p) { return v < p.uncertainty; });
    const auto certain = static_cast<std::uint64_t>(it - sorted.begin());
    ConfusionCounts c;
    c.n_ac = acc_prefix[certain];
    c.n_ic = certain - c.n_ac;
    c.n_au = total_acc - c.n_ac;
    c.n_iu = (total - certain) - c.n_au;
    curve.points.push_back({t, c, metrics_from_counts(c)});
  }
  return curve;
}

inline MetricCurve sweep(std::span<const LabelMap> pred, std::span<const LabelMap> gt,
                         std::span<const UncertaintyMap> unc, const PatchConfig& cfg,
                         ThresholdMode mode = ThresholdMode::quantile, std::size_t points = 20) {
  if (points < 2) throw ConfigError("threshold sweep needs at least 2 points");
  if (pred.size() != gt.size() || unc.size() != gt.size()) {
    throw ValidationError("sweep: prediction, ground-truth and uncertainty lists differ in length");
  }
  std::vector<PatchStat> pooled;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto s = summarize_patches(pred[i], gt[i], unc[i], cfg);
    pooled.insert(pooled.end(), s.begin(), s.end());
  }
  return sweep_patches(pooled, mode, points);
}

inline MetricCurve sweep(const LabelMap& pred, const LabelMap& gt, const UncertaintyMap& unc, const PatchConfig& cfg,
                         ThresholdMode mode = ThresholdMode::quantile, std::size_t points = 20) {
  return sweep(std::span(&pred, 1), std::span(&gt, 1), std::span(&unc, 1), cfg, mode, points);
}

namespace metrics_detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_optional(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); }

inline nlohmann::json json_optional(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace metrics_detail

/// CSV with one row per threshold; undefined ratios are empty cells.
inline std::string curve_to_csv(const MetricCurve& curve) {
  using metrics_detail::fmt_double;
  using metrics_detail::fmt_optional;
  std::string out = "threshold,p_acc_cert,p_unc_inacc,pavpu,n_ac,n_au,n_ic,n_iu\n";
  for (const auto& p : curve.points) {
    out += fmt_double(p.threshold) + ',' + fmt_optional(p.metrics.p_acc_given_cert) + ',' +
           fmt_optional(p.metrics.p_unc_given_inacc) + ',' + fmt_optional(p.metrics.pavpu) + ',' +
           std::to_string(p.counts.n_ac) + ',' + std::to_string(p.counts.n_au) + ',' +
           std::to_string(p.counts.n_ic) + ',' + std::to_string(p.counts.n_iu) + '\n';
  }
  return out;
}

inline nlohmann::json curve_to_json(const MetricCurve& curve) {
  using metrics_detail::json_optional;
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : curve.points) {
    pts.push_back({{"threshold", p.threshold},
                   {"p_acc_cert", json_optional(p.metrics.p_acc_given_cert)},
                   {"p_unc_inacc", json_optional(p.metrics.p_unc_given_inacc)},
                   {"pavpu", json_optional(p.metrics.pavpu)},
                   {"n_ac", p.counts.n_ac},
                   {"n_au", p.counts.n_au},
                   {"n_ic", p.counts.n_ic},
                   {"n_iu", p.counts.n_iu}});
  }
  return {{"threshold_mode", threshold_mode_name(curve.mode)}, {"points", std::move(pts)}};
}

// ---------------------------------------------------------------------------
// mIoU with dataset-global accumulation.

struct IoUReport {
  std::vector<std::uint64_t> intersection;
  std::vector<std::uint64_t> union_;
  std::vector<std::optional<double>> iou;  // empty when the class is absent from gt and pred
  std::optional<double> miou;
};

inline IoUReport miou(std::span<const LabelMap> pred, std::span<const LabelMap> gt, std::size_t num_classes,
                      std::int32_t ignore_id) {
  if (pred.size() != gt.size()) throw ValidationError("miou: prediction and ground-truth lists differ in length");
  IoUReport r;
  r.intersection.assign(num_classes, 0);
  r.union_.assign(num_classes, 0);
  std::vector<std::uint64_t> pred_count(num_classes, 0);
  std::vector<std::uint64_t> gt_count(num_classes, 0);
  auto check = [&](std::int32_t l, const char* what) {
    if (l != ignore_id && (l < 0 || static_cast<std::size_t>(l) >= num_classes)) {
      throw ValidationError(std::string("miou: ") + what + " label " + std::to_string(l) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    }
  };
  for (std::size_t i = 0; i < gt.size(); ++i) {
    require_same_shape(pred[i].height, pred[i].width, gt[i].height, gt[i].width, "miou");
    for (std::size_t p = 0; p < gt[i].pixels(); ++p) {
      const auto g = gt[i][p];
      const auto q = pred[i][p];
      check(g, "ground-truth");
      check(q, "predicted");
      if (g == ignore_id) continue;
      ++gt_count[static_cast<std::size_t>(g)];
      if (q != ignore_id) ++pred_count[static_cast<std::size_t>(q)];
      if (g == q) ++r.intersection[static_cast<std::size_t>(g)];
    }
  }
  double sum = 0.0;
  std::size_t defined = 0;
  r.iou.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    r.union_[c] = gt_count[c] + pred_count[c] - r.intersection[c];
    if (r.union_[c] > 0) {
      r.iou[c] = static_cast<double>(r.intersection[c]) / static_cast<double>(r.union_[c]);
      sum += *r.iou[c];
      ++defined;
    }
  }
  if (defined) r.miou = sum / static_cast<double>(defined);
  return r;
}

inline nlohmann::json iou_to_json(const IoUReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < r.iou.size(); ++c) {
    classes.push_back({{"class_id", c},
                       {"intersection", r.intersection[c]},
                       {"union", r.union_[c]},
                       {"iou", metrics_detail::json_optional(r.iou[c])}});
  }
  return {{"miou", metrics_detail::json_optional(r.miou)}, {"classes", std::move(classes)}};
}

// ---------------------------------------------------------------------------
// OoD AUROC: out-of-distribution scores are positives, ties count one half.

inline double ood_auroc(std::span<const double> in_scores, std::span<const double> out_scores) {
  if (in_scores.empty() || out_scores.empty()) throw ValidationError("ood_auroc: both score sets must be non-empty");
  struct Item {
    double v;
    bool out;
  };
  std::vector<Item> all;
  all.reserve(in_scores.size() + out_scores.size());
  for (double v : in_scores) all.push_back({v, false});
  for (double v : out_scores) all.push_back({v, true});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.v < b.v; });
  // twice the Mann-Whitney U statistic, kept integral
  std::uint64_t u2 = 0;
  std::uint64_t in_below = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::uint64_t in_g = 0;
    std::uint64_t out_g = 0;
    while (j < all.size() && all[j].v == all[i].v) {
      (all[j].out ? out_g : in_g) += 1;
      ++j;
    }
    u2 += out_g * (2 * in_below + in_g);
    in_below += in_g;
    i = j;
  }
  return static_cast<double>(u2) /
         (2.0 * static_cast<double>(in_scores.size()) * static_cast<double>(out_scores.size()));
}

inline double ood_auroc(std::span<const UncertaintyMap> in_maps, std::span<const UncertaintyMap> out_maps) {
  std::vector<double> in;
  std::vector<double> out;
  for (const auto& m : in_maps) {
    if (m.polarity() != Polarity::uncertainty) throw ValidationError("ood_auroc: maps must be uncertainty-like");
    in.insert(in.end(), m.values.begin(), m.values.end());
  }
  for (const auto& m : out_maps) {
    if (m.polarity() != Polarity::uncertainty) throw ValidationError("ood_auroc: maps must be uncertainty-like");
    out.insert(out.end(), m.values.begin(), m.values.end());
  }
  return ood_auroc(in, out);
}

}  // namespace ddu
