#pragma once

// Deterministic synthetic segmentation data drawn from known class Gaussians.
// Every random number is addressed by (seed, image, pixel, purpose), so the
// output is identical for any worker count or generation order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dense_ddu/error.hpp"
#include "dense_ddu/file_io.hpp"
#include "dense_ddu/gda.hpp"
#include "dense_ddu/linalg.hpp"
#include "dense_ddu/manifest.hpp"
#include "dense_ddu/maps.hpp"
#include "dense_ddu/npy.hpp"
#include "dense_ddu/parallel.hpp"
#include "dense_ddu/rng.hpp"

namespace ddu {

enum class LayoutMode { random, blocks, voronoi };

inline std::string_view layout_name(LayoutMode m) {
  switch (m) {
    case LayoutMode::random: return "random";
    case LayoutMode::blocks: return "blocks";
    case LayoutMode::voronoi: return "voronoi";
  }
  return "?";
}

inline LayoutMode parse_layout(std::string_view s) {
  if (s == "random") return LayoutMode::random;
  if (s == "blocks") return LayoutMode::blocks;
  if (s == "voronoi") return LayoutMode::voronoi;
  throw ConfigError("unknown layout '" + std::string(s) + "' (random|blocks|voronoi)");
}

struct SynthSpec {
  std::size_t num_classes = 3;
  std::size_t feature_dim = 8;
  std::size_t num_images = 10;
  std::size_t height = 32;
  std::size_t width = 32;
  LayoutMode layout = LayoutMode::blocks;
  /// K×D true means; generated on the signed coordinate axes when empty.
  std::vector<std::vector<double>> means;
  /// K of D×D true covariances (row-major); random SPD when empty.
  std::vector<std::vector<double>> covariances;
  double class_separation = 4.0;
  double noise_scale = 1.0;
  double ood_fraction = 0.0;
  /// Distance of the OoD mean beyond the class means, in units of the largest class σ.
  double ood_offset = 10.0;
  /// Fraction of in-distribution pixels whose logit argmax equals the label.
  double logit_accuracy = 0.9;
  double logit_scale = 4.0;
  std::int32_t ignore_id = default_ignore_id;
  std::uint64_t seed = 0;
};

/// Spec with every generated parameter filled in and factorized.
struct ResolvedSynth {
  SynthSpec spec;
  std::vector<std::vector<double>> chol;  // per class, lower factor of the covariance
  std::vector<double> log_priors;         // analytic layout proportions
  std::vector<double> ood_mean;
  double ood_sigma = 1.0;
};

struct SynthImage {
  FeatureMap features;
  LabelMap labels;
  std::vector<double> logits;  // H×W×K
  LabelMap ood_mask;           // 1 on OoD pixels
};

namespace synth_detail {

inline constexpr std::uint32_t image_level = 0xFFFFFFFFu;

inline void validate(const SynthSpec& s) {
  if (s.num_classes == 0 || s.feature_dim == 0) throw ConfigError("synth: K and D must be positive");
  if (s.height == 0 || s.width == 0) throw ConfigError("synth: image size must be positive");
  if (s.ignore_id >= 0 && static_cast<std::size_t>(s.ignore_id) < s.num_classes) {
    throw ConfigError("synth: ignore_id collides with a class id");
  }
  if (!(s.ood_fraction >= 0.0 && s.ood_fraction < 1.0)) throw ConfigError("synth: ood_fraction must lie in [0, 1)");
  if (!(s.logit_accuracy >= 0.0 && s.logit_accuracy <= 1.0)) throw ConfigError("synth: logit_accuracy must lie in [0, 1]");
  if (!s.means.empty()) {
    if (s.means.size() != s.num_classes) throw ConfigError("synth: need one mean per class");
    for (const auto& m : s.means) {
      if (m.size() != s.feature_dim) throw ConfigError("synth: mean has wrong dimension");
    }
  }
  if (!s.covariances.empty()) {
    if (s.covariances.size() != s.num_classes) throw ConfigError("synth: need one covariance per class");
    for (const auto& c : s.covariances) {
      if (c.size() != s.feature_dim * s.feature_dim) throw ConfigError("synth: covariance has wrong size");
    }
  }
}

inline std::size_t blocks_class(std::size_t col, std::size_t width, std::size_t k) { return col * k / width; }

}  // namespace synth_detail

/// Analytic class proportions implied by the layout (exact for blocks).
inline std::vector<double> layout_proportions(const SynthSpec& s) {
  std::vector<double> p(s.num_classes, 0.0);
  if (s.layout == LayoutMode::blocks) {
    for (std::size_t j = 0; j < s.width; ++j) p[synth_detail::blocks_class(j, s.width, s.num_classes)] += 1.0;
    for (double& v : p) v /= static_cast<double>(s.width);
  } else {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(s.num_classes));
  }
  return p;
}

inline ResolvedSynth resolve(const SynthSpec& spec) {
  synth_detail::validate(spec);
  ResolvedSynth r{spec, {}, {}, {}, 1.0};
  auto& s = r.spec;
  const std::size_t k = s.num_classes;
  const std::size_t d = s.feature_dim;
  if (s.means.empty()) {
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> m(d, 0.0);
      const double sign = (c / d) % 2 == 0 ? 1.0 : -1.0;
      m[c % d] = sign * s.class_separation * static_cast<double>(1 + c / (2 * d));
      s.means.push_back(std::move(m));
    }
  }
  if (s.covariances.empty()) {
    // Σ = σ² (A·Aᵀ / D + ½ I) with standard-normal A
    for (std::size_t c = 0; c < k; ++c) {
      CounterRng rng(s.seed, synth_detail::image_level, static_cast<std::uint32_t>(c), RngPurpose::parameters);
      std::vector<double> a(d * d);
      for (double& v : a) v = rng.normal();
      std::vector<double> cov(d * d, 0.0);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          double acc = 0.0;
          for (std::size_t t = 0; t < d; ++t) acc += a[i * d + t] * a[j * d + t];
          cov[i * d + j] = s.noise_scale * s.noise_scale * (acc / static_cast<double>(d) + (i == j ? 0.5 : 0.0));
        }
      }
      s.covariances.push_back(std::move(cov));
    }
  }
  double max_var = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const auto& cov = s.covariances[c];
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (std::abs(cov[i * d + j] - cov[j * d + i]) > 1e-12 * (1.0 + std::abs(cov[i * d + j]))) {
          throw ConfigError("synth: covariance of class " + std::to_string(c) + " is not symmetric");
        }
      }
      max_var = std::max(max_var, cov[i * d + i]);
    }
    std::vector<double> l = cov;
    if (!linalg::cholesky_lower(l, d)) {
      throw ConfigError("synth: covariance of class " + std::to_string(c) + " is not positive definite");
    }
    r.chol.push_back(std::move(l));
  }
  for (double p : layout_proportions(s)) r.log_priors.push_back(std::log(p));

  // OoD mean: centroid pushed along the diagonal past every class mean by offset·σ
  std::vector<double> centroid(d, 0.0);
  for (const auto& m : s.means) {
    for (std::size_t i = 0; i < d; ++i) centroid[i] += m[i] / static_cast<double>(k);
  }
  double radius = 0.0;
  for (const auto& m : s.means) {
    double s2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) s2 += (m[i] - centroid[i]) * (m[i] - centroid[i]);
    radius = std::max(radius, std::sqrt(s2));
  }
  r.ood_sigma = std::sqrt(max_var);
  const double reach = radius + s.ood_offset * r.ood_sigma;
  r.ood_mean.resize(d);
  for (std::size_t i = 0; i < d; ++i) r.ood_mean[i] = centroid[i] + reach / std::sqrt(static_cast<double>(d));
  return r;
}

/// Exact mixture log density of the generating distribution (in-distribution classes only).
inline double analytic_log_density(const ResolvedSynth& r, std::span<const double> z) {
  const std::size_t d = r.spec.feature_dim;
  if (z.size() != d) throw ValidationError("analytic_log_density: dimension mismatch");
  std::vector<double> terms;
  std::vector<double> y(d);
  for (std::size_t c = 0; c < r.spec.num_classes; ++c) {
    for (std::size_t i = 0; i < d; ++i) y[i] = z[i] - r.spec.means[c][i];
    linalg::forward_substitute(r.chol[c], d, y);
    double q = 0.0;
    for (double v : y) q += v * v;
    const double log_det = linalg::log_det_from_cholesky(r.chol[c], d);
    terms.push_back(r.log_priors[c] - 0.5 * (static_cast<double>(d) * linalg::log_two_pi + log_det + q));
  }
  return logsumexp(terms);
}

inline double analytic_log_density(const SynthSpec& s, std::span<const double> z) {
  return analytic_log_density(resolve(s), z);
}

/// Draws one in-distribution sample from class c (or the OoD Gaussian when c < 0).
inline void sample_feature(const ResolvedSynth& r, int cls, CounterRng& rng, std::span<double> out) {
  const std::size_t d = r.spec.feature_dim;
  std::vector<double> eps(d);
  for (double& e : eps) e = rng.normal();
  if (cls < 0) {
    for (std::size_t i = 0; i < d; ++i) out[i] = r.ood_mean[i] + r.ood_sigma * eps[i];
    return;
  }
  const auto c = static_cast<std::size_t>(cls);
  linalg::lower_multiply(r.chol[c], d, eps, out);
  for (std::size_t i = 0; i < d; ++i) out[i] += r.spec.means[c][i];
}

inline SynthImage generate_image(const ResolvedSynth& r, std::size_t index) {
  const auto& s = r.spec;
  const std::size_t h = s.height;
  const std::size_t w = s.width;
  const std::size_t k = s.num_classes;
  const std::size_t d = s.feature_dim;
  const auto img = static_cast<std::uint32_t>(index);

  std::vector<std::int32_t> labels(h * w);
  switch (s.layout) {
    case LayoutMode::random:
      for (std::size_t p = 0; p < h * w; ++p) {
        CounterRng rng(s.seed, img, static_cast<std::uint32_t>(p), RngPurpose::layout);
        labels[p] = static_cast<std::int32_t>(rng.below(static_cast<std::uint32_t>(k)));
      }
      break;
    case LayoutMode::blocks:
      for (std::size_t p = 0; p < h * w; ++p) {
        labels[p] = static_cast<std::int32_t>(synth_detail::blocks_class(p % w, w, k));
      }
      break;
    case LayoutMode::voronoi: {
      CounterRng rng(s.seed, img, synth_detail::image_level, RngPurpose::layout);
      std::vector<std::pair<double, double>> sites(k);
      for (auto& site : sites) site = {rng.uniform() * static_cast<double>(h), rng.uniform() * static_cast<double>(w)};
      for (std::size_t p = 0; p < h * w; ++p) {
        const double y = static_cast<double>(p / w) + 0.5;
        const double x = static_cast<double>(p % w) + 0.5;
        std::size_t best = 0;
        double best_d = INFINITY;
        for (std::size_t c = 0; c < k; ++c) {
          const double dd = (y - sites[c].first) * (y - sites[c].first) + (x - sites[c].second) * (x - sites[c].second);
          if (dd < best_d) {
            best_d = dd;
            best = c;
          }
        }
        labels[p] = static_cast<std::int32_t>(best);
      }
      break;
    }
  }

  std::vector<std::int32_t> ood(h * w, 0);
  if (s.ood_fraction > 0.0) {
    CounterRng rng(s.seed, img, synth_detail::image_level, RngPurpose::ood);
    const auto side = static_cast<std::size_t>(std::clamp<double>(
        std::round(std::sqrt(s.ood_fraction * static_cast<double>(h * w))), 1.0, static_cast<double>(std::min(h, w))));
    const std::size_t top = rng.below(static_cast<std::uint32_t>(h - side + 1));
    const std::size_t left = rng.below(static_cast<std::uint32_t>(w - side + 1));
    for (std::size_t i = top; i < top + side; ++i) {
      for (std::size_t j = left; j < left + side; ++j) ood[i * w + j] = 1;
    }
  }

  auto boundary = [&](std::size_t p) {
    const std::size_t i = p / w;
    const std::size_t j = p % w;
    auto differs = [&](std::size_t q) { return labels[q] != labels[p] || ood[q] != ood[p]; };
    return (i > 0 && differs(p - w)) || (i + 1 < h && differs(p + w)) || (j > 0 && differs(p - 1)) ||
           (j + 1 < w && differs(p + 1));
  };

  SynthImage out{FeatureMap(h, w, d), {}, std::vector<double>(h * w * k), {}};
  for (std::size_t p = 0; p < h * w; ++p) {
    const bool is_ood = ood[p] != 0;
    CounterRng frng(s.seed, img, static_cast<std::uint32_t>(p), RngPurpose::features);
    auto z = out.features.pixel(p);
    sample_feature(r, is_ood ? -1 : labels[p], frng, z);
    for (double& v : z) v = static_cast<double>(static_cast<float>(v));  // stored as float32

    CounterRng lrng(s.seed, img, static_cast<std::uint32_t>(p), RngPurpose::logits);
    std::int32_t target;
    if (is_ood) {
      target = static_cast<std::int32_t>(lrng.below(static_cast<std::uint32_t>(k)));
    } else if (k == 1 || lrng.uniform() < s.logit_accuracy) {
      target = labels[p];
    } else {
      const auto shift = 1 + lrng.below(static_cast<std::uint32_t>(k - 1));
      target = static_cast<std::int32_t>((static_cast<std::size_t>(labels[p]) + shift) % k);
    }
    double margin = s.logit_scale * (0.5 + lrng.uniform());
    if (boundary(p)) margin *= 0.25;  // ambiguous pixels on class edges
    double* lg = out.logits.data() + p * k;
    for (std::size_t c = 0; c < k; ++c) {
      const double v = 0.5 * lrng.normal() + (static_cast<std::int32_t>(c) == target ? margin : 0.0);
      lg[c] = static_cast<double>(static_cast<float>(v));
    }
    if (is_ood) labels[p] = s.ignore_id;
  }
  out.labels = LabelMap(h, w, std::move(labels), s.ignore_id);
  out.ood_mask = LabelMap(h, w, std::move(ood), -1);
  return out;
}

// ---------------------------------------------------------------------------
// JSON spec and on-disk dataset.

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.num_classes = j.value("num_classes", s.num_classes);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.num_images = j.value("num_images", s.num_images);
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.layout = parse_layout(j.value("layout", std::string(layout_name(s.layout))));
    s.means = j.value("means", s.means);
    if (j.contains("covariances")) {
      // accept either K×D×D nested arrays or K flat row-major arrays
      for (const auto& c : j.at("covariances")) {
        std::vector<double> flat;
        for (const auto& row : c) {
          if (row.is_array()) {
            for (const auto& v : row) flat.push_back(v.get<double>());
          } else {
            flat.push_back(row.get<double>());
          }
        }
        s.covariances.push_back(std::move(flat));
      }
    }
    s.class_separation = j.value("class_separation", s.class_separation);
    s.noise_scale = j.value("noise_scale", s.noise_scale);
    s.ood_fraction = j.value("ood_fraction", s.ood_fraction);
    s.ood_offset = j.value("ood_offset", s.ood_offset);
    s.logit_accuracy = j.value("logit_accuracy", s.logit_accuracy);
    s.logit_scale = j.value("logit_scale", s.logit_scale);
    s.ignore_id = j.value("ignore_id", s.ignore_id);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  return s;
}

inline nlohmann::json synth_spec_to_json(const SynthSpec& s) {
  return {{"num_classes", s.num_classes},   {"feature_dim", s.feature_dim},
          {"num_images", s.num_images},     {"height", s.height},
          {"width", s.width},               {"layout", layout_name(s.layout)},
          {"means", s.means},               {"covariances", s.covariances},
          {"class_separation", s.class_separation},
          {"noise_scale", s.noise_scale},   {"ood_fraction", s.ood_fraction},
          {"ood_offset", s.ood_offset},     {"logit_accuracy", s.logit_accuracy},
          {"logit_scale", s.logit_scale},   {"ignore_id", s.ignore_id},
          {"seed", s.seed}};
}

inline std::string synth_image_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%05zu", i);
  return buf;
}

/// Writes features (float32), logits (float32), labels and OoD masks for every
/// image plus `manifest.json` and the fully resolved `synth_spec.json`.
inline DatasetManifest generate(const SynthSpec& spec, const fs::path& out_dir, std::size_t workers = 1) {
  const ResolvedSynth r = resolve(spec);
  const auto& s = r.spec;
  ensure_directory(out_dir);
  const bool small_labels = s.num_classes <= 255 && s.ignore_id >= 0 && s.ignore_id <= 255;

  DatasetManifest m;
  m.num_classes = s.num_classes;
  m.feature_dim = s.feature_dim;
  m.ignore_id = s.ignore_id;
  m.base_dir = out_dir;
  for (std::size_t i = 0; i < s.num_images; ++i) {
    const std::string id = synth_image_id(i);
    m.entries.push_back({id, id + "_features.npy", id + "_logits.npy", std::nullopt, id + "_labels.npy",
                         id + "_ood.npy"});
  }

  parallel_for(s.num_images, workers, [&](std::size_t i) {
    const SynthImage img = generate_image(r, i);
    const auto& e = m.entries[i];
    std::vector<float> f(img.features.data.begin(), img.features.data.end());
    write_tensor(out_dir / *e.feature_path, Tensor({s.height, s.width, s.feature_dim}, std::move(f)));
    std::vector<float> lg(img.logits.begin(), img.logits.end());
    write_tensor(out_dir / *e.logit_path, Tensor({s.height, s.width, s.num_classes}, std::move(lg)));
    if (small_labels) {
      std::vector<std::uint8_t> l(img.labels.labels.begin(), img.labels.labels.end());
      write_tensor(out_dir / *e.label_path, Tensor({s.height, s.width}, std::move(l)));
    } else {
      write_tensor(out_dir / *e.label_path, Tensor({s.height, s.width}, img.labels.labels));
    }
    std::vector<std::uint8_t> mask(img.ood_mask.labels.begin(), img.ood_mask.labels.end());
    write_tensor(out_dir / *e.ood_mask_path, Tensor({s.height, s.width}, std::move(mask)));
  });

  auto resolved = synth_spec_to_json(s);
  resolved["log_priors"] = r.log_priors;
  resolved["ood_mean"] = r.ood_mean;
  resolved["ood_sigma"] = r.ood_sigma;
  write_file_atomic(out_dir / "synth_spec.json", resolved.dump(2) + "\n");
  save_manifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace ddu
