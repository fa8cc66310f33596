#pragma once

// Gaussian discriminant analysis over pixel features and the marginal
// feature density log p(z) = logsumexp_c [log p(c) + log N(z; μ_c, Σ_c)].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dense_ddu/accumulator.hpp"
#include "dense_ddu/error.hpp"
#include "dense_ddu/linalg.hpp"
#include "dense_ddu/maps.hpp"
#include "dense_ddu/npz.hpp"
#include "dense_ddu/parallel.hpp"

namespace ddu {

enum class CovarianceMode { full, diagonal, tied };

inline std::string_view covariance_mode_name(CovarianceMode m) {
  switch (m) {
    case CovarianceMode::full: return "full";
    case CovarianceMode::diagonal: return "diagonal";
    case CovarianceMode::tied: return "tied";
  }
  return "?";
}

inline CovarianceMode parse_covariance_mode(std::string_view s) {
  if (s == "full") return CovarianceMode::full;
  if (s == "diagonal") return CovarianceMode::diagonal;
  if (s == "tied") return CovarianceMode::tied;
  throw ConfigError("unknown covariance mode '" + std::string(s) + "' (full|diagonal|tied)");
}

struct FitOptions {
  CovarianceMode covariance = CovarianceMode::full;
  /// Multiples of the mean covariance diagonal tried in order until Cholesky succeeds.
  std::vector<double> jitter_ladder{1e-8, 1e-6, 1e-4, 1e-2, 1.0};
};

struct ClassGaussian {
  std::int32_t class_id = 0;
  std::vector<double> mean;      // D
  std::vector<double> chol;      // D×D lower, L·Lᵀ = Σ + εI
  double log_det = 0.0;          // log det(Σ + εI)
  double log_prior = 0.0;
  double jitter = 0.0;           // absolute ε added to the diagonal
  double jitter_factor = 0.0;    // ladder entry that produced ε
  std::uint64_t count = 0;
  bool degenerate = false;       // fewer than D + 1 pixels
};

struct GdaModel {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  CovarianceMode covariance = CovarianceMode::full;
  std::int32_t ignore_id = default_ignore_id;
  std::vector<ClassGaussian> components;      // classes with at least one pixel
  std::vector<std::int32_t> dropped_classes;  // classes absent from the fit data

  std::vector<double> log_priors() const {
    std::vector<double> out;
    for (const auto& c : components) out.push_back(c.log_prior);
    return out;
  }
};

inline double logsumexp(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

/// Turns per-class sufficient statistics into a fitted model.
inline GdaModel finalize(const std::vector<ClassAccumulator>& accs, const FitOptions& opts = {},
                         std::int32_t ignore_id = default_ignore_id) {
  if (accs.empty()) throw FitError("finalize: no class accumulators");
  if (opts.jitter_ladder.empty()) throw ConfigError("finalize: empty jitter ladder");
  const std::size_t dim = accs.front().dim();
  GdaModel model;
  model.num_classes = accs.size();
  model.dim = dim;
  model.covariance = opts.covariance;
  model.ignore_id = ignore_id;

  std::uint64_t total = 0;
  for (const auto& a : accs) {
    if (a.dim() != dim) throw ValidationError("finalize: accumulators disagree on D");
    total += a.count();
  }
  if (total == 0) throw FitError("finalize: every class is empty");

  std::vector<double> tied;
  if (opts.covariance == CovarianceMode::tied) {
    tied.assign(dim * dim, 0.0);
    for (const auto& a : accs) {
      const auto m = a.comoment();
      for (std::size_t i = 0; i < tied.size(); ++i) tied[i] += m[i];
    }
    for (double& v : tied) v /= static_cast<double>(total);
  }

  for (const auto& a : accs) {
    if (a.empty()) {
      model.dropped_classes.push_back(a.class_id());
      continue;
    }
    ClassGaussian g;
    g.class_id = a.class_id();
    g.count = a.count();
    g.degenerate = a.count() < dim + 1;
    g.mean.assign(a.mean().begin(), a.mean().end());
    g.log_prior = std::log(static_cast<double>(a.count()) / static_cast<double>(total));

    std::vector<double> cov = opts.covariance == CovarianceMode::tied ? tied : a.covariance();
    if (opts.covariance == CovarianceMode::diagonal) {
      for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
          if (i != j) cov[i * dim + j] = 0.0;
        }
      }
    }
    double scale = linalg::mean_diagonal(cov, dim);
    if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;

    bool ok = false;
    for (double factor : opts.jitter_ladder) {
      g.chol = cov;
      const double eps = factor * scale;
      for (std::size_t i = 0; i < dim; ++i) g.chol[i * dim + i] += eps;
      if (linalg::cholesky_lower(g.chol, dim)) {
        g.jitter = eps;
        g.jitter_factor = factor;
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw NumericalError("finalize: covariance of class " + std::to_string(a.class_id()) +
                           " is not positive definite even at maximum jitter");
    }
    g.log_det = linalg::log_det_from_cholesky(g.chol, dim);
    model.components.push_back(std::move(g));
  }
  return model;
}

inline GdaModel finalize(const AccumulatorSet& set, const FitOptions& opts = {},
                         std::int32_t ignore_id = default_ignore_id) {
  return finalize(set.classes(), opts, ignore_id);
}

/// log N(z; μ, LLᵀ) via one triangular solve. `work` must hold D doubles.
inline double component_log_pdf(const ClassGaussian& g, std::span<const double> z, std::span<double> work) {
  const std::size_t dim = g.mean.size();
  for (std::size_t d = 0; d < dim; ++d) work[d] = z[d] - g.mean[d];
  linalg::forward_substitute(g.chol, dim, work);
  double q = 0.0;
  for (std::size_t d = 0; d < dim; ++d) q += work[d] * work[d];
  return -0.5 * (static_cast<double>(dim) * linalg::log_two_pi + g.log_det + q);
}

/// log p(z) for one feature vector. `terms` holds one slot per component.
inline double point_log_density(const GdaModel& model, std::span<const double> z, std::span<double> work,
                                std::span<double> terms) {
  for (std::size_t c = 0; c < model.components.size(); ++c) {
    terms[c] = model.components[c].log_prior + component_log_pdf(model.components[c], z, work);
  }
  return logsumexp(terms.first(model.components.size()));
}

namespace gda_detail {

inline void check_features(const GdaModel& model, const FeatureMap& f) {
  if (f.dim != model.dim) {
    throw ValidationError("feature dim " + std::to_string(f.dim) + " != model dim " + std::to_string(model.dim));
  }
  for (double v : f.data) {
    if (!std::isfinite(v)) throw ValidationError("feature map contains non-finite values");
  }
}

// Splits pixels into fixed row bands; each band is independent.
template <class Fn>
void for_pixel_bands(const FeatureMap& f, std::size_t workers, Fn&& fn) {
  constexpr std::size_t band = 4096;
  const std::size_t n = f.pixels();
  const std::size_t bands = (n + band - 1) / band;
  parallel_for(bands, workers, [&](std::size_t b) {
    fn(b * band, std::min(n, (b + 1) * band));
  });
}

}  // namespace gda_detail

/// Per-pixel log p(z|c) for every mixture component (pixel-major, one row of
/// `components.size()` values per pixel).
struct ClassLogDensities {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t components = 0;
  std::vector<double> values;

  std::span<const double> pixel(std::size_t p) const { return {values.data() + p * components, components}; }
};

inline ClassLogDensities log_density_per_class(const GdaModel& model, const FeatureMap& features,
                                               std::size_t workers = 1) {
  gda_detail::check_features(model, features);
  const std::size_t k = model.components.size();
  ClassLogDensities out{features.height, features.width, k, std::vector<double>(features.pixels() * k)};
  gda_detail::for_pixel_bands(features, workers, [&](std::size_t begin, std::size_t end) {
    std::vector<double> work(model.dim);
    for (std::size_t p = begin; p < end; ++p) {
      for (std::size_t c = 0; c < k; ++c) {
        out.values[p * k + c] = component_log_pdf(model.components[c], features.pixel(p), work);
      }
    }
  });
  return out;
}

/// Confidence-like map of log p(z); higher means more familiar features.
inline UncertaintyMap log_density(const GdaModel& model, const FeatureMap& features, std::size_t workers = 1) {
  gda_detail::check_features(model, features);
  std::vector<double> values(features.pixels());
  gda_detail::for_pixel_bands(features, workers, [&](std::size_t begin, std::size_t end) {
    std::vector<double> work(model.dim);
    std::vector<double> terms(model.components.size());
    for (std::size_t p = begin; p < end; ++p) values[p] = point_log_density(model, features.pixel(p), work, terms);
  });
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericalError("log density underflowed to -inf; features far outside every class");
  }
  return {features.height, features.width, std::move(values), Source::log_density};
}

// ---------------------------------------------------------------------------
// Fitting over a dataset with a fixed reduction tree.

/// Images per leaf of the reduction tree. Fixed so the merge order, and hence
/// every bit of the result, is independent of the worker count.
inline constexpr std::size_t fit_block_images = 8;

/// Accumulates statistics for `num_images` images supplied by `load(i)`, which
/// returns the (features, labels) pair of image i.
inline AccumulatorSet accumulate_dataset(std::size_t num_images, std::size_t num_classes, std::size_t dim,
                                         const std::function<std::pair<FeatureMap, LabelMap>(std::size_t)>& load,
                                         std::size_t workers = 1) {
  const std::size_t blocks = (num_images + fit_block_images - 1) / fit_block_images;
  const std::size_t wave = std::max<std::size_t>(1, resolve_workers(workers));
  auto merge_sets = [](AccumulatorSet a, AccumulatorSet b) {
    a.merge_in(b);
    return a;
  };
  PairwiseReducer<AccumulatorSet, decltype(merge_sets)> reducer(merge_sets);
  for (std::size_t first = 0; first < blocks; first += wave) {
    const std::size_t count = std::min(wave, blocks - first);
    std::vector<AccumulatorSet> leaves(count, AccumulatorSet(num_classes, dim));
    parallel_for(count, workers, [&](std::size_t b) {
      const std::size_t begin = (first + b) * fit_block_images;
      const std::size_t end = std::min(num_images, begin + fit_block_images);
      for (std::size_t i = begin; i < end; ++i) {
        auto [features, labels] = load(i);
        leaves[b].accumulate(features, labels);
      }
    });
    for (auto& leaf : leaves) reducer.push(std::move(leaf));
  }
  auto result = reducer.finish();
  return result ? std::move(*result) : AccumulatorSet(num_classes, dim);
}

// ---------------------------------------------------------------------------
// Model archive: mean (K×D), chol (K×D×D), log_prior (K) + metadata.json.

inline constexpr int model_format_version = 1;

inline nlohmann::json model_metadata(const GdaModel& m) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : m.components) {
    classes.push_back({{"class_id", c.class_id},
                       {"count", c.count},
                       {"jitter", c.jitter},
                       {"jitter_factor", c.jitter_factor},
                       {"degenerate", c.degenerate}});
  }
  return {{"format_version", model_format_version},
          {"num_classes", m.num_classes},
          {"feature_dim", m.dim},
          {"covariance", covariance_mode_name(m.covariance)},
          {"ignore_id", m.ignore_id},
          {"classes", std::move(classes)},
          {"dropped_classes", m.dropped_classes}};
}

inline Archive model_to_archive(const GdaModel& m, const nlohmann::json& settings = nlohmann::json::object()) {
  const std::size_t k = m.components.size();
  const std::size_t d = m.dim;
  std::vector<double> mean;
  std::vector<double> chol;
  std::vector<double> prior;
  mean.reserve(k * d);
  chol.reserve(k * d * d);
  for (const auto& c : m.components) {
    mean.insert(mean.end(), c.mean.begin(), c.mean.end());
    chol.insert(chol.end(), c.chol.begin(), c.chol.end());
    prior.push_back(c.log_prior);
  }
  auto meta = model_metadata(m);
  meta["settings"] = settings;
  Archive a;
  a.tensors.emplace("mean", Tensor({k, d}, std::move(mean)));
  a.tensors.emplace("chol", Tensor({k, d, d}, std::move(chol)));
  a.tensors.emplace("log_prior", Tensor({k}, std::move(prior)));
  a.extras.emplace("metadata.json", meta.dump(2) + "\n");
  return a;
}

inline GdaModel model_from_archive(const Archive& a) {
  auto need = [&](const char* name) -> const Tensor& {
    const auto it = a.tensors.find(name);
    if (it == a.tensors.end()) throw ParseError(std::string("model archive lacks '") + name + "'");
    if (it->second.dtype() != DType::f64) throw ParseError(std::string("model tensor '") + name + "' must be float64");
    return it->second;
  };
  const auto meta_it = a.extras.find("metadata.json");
  if (meta_it == a.extras.end()) throw ParseError("model archive lacks metadata.json");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_it->second);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model metadata: ") + e.what());
  }

  GdaModel m;
  try {
    if (meta.at("format_version").get<int>() != model_format_version) {
      throw UnsupportedFormat("model format version " + meta.at("format_version").dump());
    }
    m.num_classes = meta.at("num_classes").get<std::size_t>();
    m.dim = meta.at("feature_dim").get<std::size_t>();
    m.covariance = parse_covariance_mode(meta.at("covariance").get<std::string>());
    m.ignore_id = meta.at("ignore_id").get<std::int32_t>();
    m.dropped_classes = meta.at("dropped_classes").get<std::vector<std::int32_t>>();
    const auto& classes = meta.at("classes");
    const auto& mean = need("mean");
    const auto& chol = need("chol");
    const auto& prior = need("log_prior");
    const std::size_t k = classes.size();
    const std::size_t d = m.dim;
    if (mean.shape() != Shape{k, d} || chol.shape() != Shape{k, d, d} || prior.shape() != Shape{k}) {
      throw ParseError("model tensors do not match K=" + std::to_string(k) + ", D=" + std::to_string(d));
    }
    const auto mv = mean.values<double>();
    const auto lv = chol.values<double>();
    const auto pv = prior.values<double>();
    for (std::size_t c = 0; c < k; ++c) {
      ClassGaussian g;
      g.class_id = classes[c].at("class_id").get<std::int32_t>();
      g.count = classes[c].at("count").get<std::uint64_t>();
      g.jitter = classes[c].at("jitter").get<double>();
      g.jitter_factor = classes[c].at("jitter_factor").get<double>();
      g.degenerate = classes[c].at("degenerate").get<bool>();
      g.mean.assign(mv.begin() + static_cast<std::ptrdiff_t>(c * d), mv.begin() + static_cast<std::ptrdiff_t>((c + 1) * d));
      g.chol.assign(lv.begin() + static_cast<std::ptrdiff_t>(c * d * d),
                    lv.begin() + static_cast<std::ptrdiff_t>((c + 1) * d * d));
      for (std::size_t i = 0; i < d; ++i) {
        if (!(g.chol[i * d + i] > 0.0)) throw ParseError("model: Cholesky factor has a non-positive diagonal");
        for (std::size_t j = i + 1; j < d; ++j) {
          if (g.chol[i * d + j] != 0.0) throw ParseError("model: Cholesky factor is not lower triangular");
        }
      }
      g.log_det = linalg::log_det_from_cholesky(g.chol, d);
      g.log_prior = pv[c];
      m.components.push_back(std::move(g));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model metadata: ") + e.what());
  }
  return m;
}

inline void save_model(const fs::path& path, const GdaModel& m,
                       const nlohmann::json& settings = nlohmann::json::object()) {
  write_archive(path, model_to_archive(m, settings));
}

inline GdaModel load_model(const fs::path& path) { return model_from_archive(read_archive_file(path)); }

}  // namespace ddu
