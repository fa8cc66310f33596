#pragma once

// Batch pipeline behind the command-line tool. Each command validates all of
// its inputs before writing anything, and every file is written atomically.

#include <algorithm>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dense_ddu/analysis.hpp"
#include "dense_ddu/gda.hpp"
#include "dense_ddu/manifest.hpp"
#include "dense_ddu/map_io.hpp"
#include "dense_ddu/metrics.hpp"
#include "dense_ddu/render.hpp"
#include "dense_ddu/synth.hpp"
#include "dense_ddu/uncertainty.hpp"

namespace ddu {

enum class Measure { entropy, predictive_entropy, mutual_information };

inline Measure parse_measure(std::string_view s) {
  if (s == "entropy") return Measure::entropy;
  if (s == "pe") return Measure::predictive_entropy;
  if (s == "mi") return Measure::mutual_information;
  throw ConfigError("unknown measure '" + std::string(s) + "' (entropy|pe|mi)");
}

/// Softmax stack of an entry, from `softmax_path` if present, else from logits.
inline SoftmaxStack load_scores(const DatasetManifest& m, const ManifestEntry& e) {
  SoftmaxStack s;
  if (e.softmax_path) {
    s = SoftmaxStack::from_tensor(read_tensor(m.resolve(*e.softmax_path)));
  } else if (e.logit_path) {
    s = softmax_from_logits(read_tensor(m.resolve(*e.logit_path)));
  } else {
    throw ConfigError("entry '" + e.image_id + "' has neither logit_path nor softmax_path");
  }
  if (s.classes != m.num_classes) {
    throw ValidationError("entry '" + e.image_id + "': scores have K=" + std::to_string(s.classes) +
                          ", manifest says " + std::to_string(m.num_classes));
  }
  return s;
}

// ---------------------------------------------------------------------------

struct FitCommand {
  fs::path manifest;
  fs::path model_out;
  FitOptions options;
  std::size_t workers = 1;
};

inline nlohmann::json fit_settings(const FitOptions& o) {
  return {{"covariance", covariance_mode_name(o.covariance)}, {"jitter_ladder", o.jitter_ladder}};
}

inline GdaModel cmd_fit(const FitCommand& cmd, std::ostream& log) {
  const auto m = load_manifest(cmd.manifest);
  validate_entries(m, {.features = true, .labels = true});
  auto stats = accumulate_dataset(m.entries.size(), m.num_classes, m.feature_dim, [&](std::size_t i) {
    auto f = load_features(m, m.entries[i]);
    auto l = load_labels(m, m.entries[i]);
    require_same_shape(f.height, f.width, l.height, l.width, "entry '" + m.entries[i].image_id + "'");
    return std::pair{std::move(f), std::move(l)};
  }, cmd.workers);
  GdaModel model = finalize(stats, cmd.options, m.ignore_id);
  save_model(cmd.model_out, model, fit_settings(cmd.options));

  log << "class  pixels  jitter\n";
  for (const auto& c : model.components) {
    log << c.class_id << "  " << c.count << "  " << c.jitter << (c.degenerate ? "  (degenerate)" : "") << "\n";
  }
  for (auto c : model.dropped_classes) log << c << "  0  dropped\n";
  return model;
}

// ---------------------------------------------------------------------------

struct DensityCommand {
  fs::path manifest;
  fs::path model;
  fs::path out_dir;
  std::size_t workers = 1;
};

inline void cmd_density(const DensityCommand& cmd, std::ostream& log) {
  const auto m = load_manifest(cmd.manifest);
  const GdaModel model = load_model(cmd.model);
  if (model.dim != m.feature_dim) {
    throw ValidationError("model D=" + std::to_string(model.dim) + " but manifest feature_dim=" +
                          std::to_string(m.feature_dim));
  }
  validate_entries(m, {.features = true});
  ensure_directory(cmd.out_dir);
  const nlohmann::json settings{{"model", cmd.model.filename().string()}};
  parallel_for(m.entries.size(), cmd.workers, [&](std::size_t i) {
    const auto& e = m.entries[i];
    const auto map = log_density(model, load_features(m, e));
    write_uncertainty_map(cmd.out_dir / (e.image_id + ".npy"), map, settings);
  });
  log << "wrote " << m.entries.size() << " log-density maps to " << cmd.out_dir.string() << "\n";
}

// ---------------------------------------------------------------------------

struct EntropyCommand {
  fs::path manifest;
  fs::path out_dir;
  Measure measure = Measure::entropy;
  std::size_t workers = 1;
};

inline void cmd_entropy(const EntropyCommand& cmd, std::ostream& log) {
  const auto m = load_manifest(cmd.manifest);
  validate_entries(m, {.scores = true});
  ensure_directory(cmd.out_dir);
  parallel_for(m.entries.size(), cmd.workers, [&](std::size_t i) {
    const auto& e = m.entries[i];
    const auto stack = load_scores(m, e);
    UncertaintyMap map;
    switch (cmd.measure) {
      case Measure::entropy: map = entropy(stack); break;
      case Measure::predictive_entropy: map = predictive_entropy(stack); break;
      case Measure::mutual_information: map = mutual_information(stack); break;
    }
    write_uncertainty_map(cmd.out_dir / (e.image_id + ".npy"), map);
  });
  log << "wrote " << m.entries.size() << " maps to " << cmd.out_dir.string() << "\n";
}

// ---------------------------------------------------------------------------

struct EvaluateCommand {
  fs::path manifest;
  fs::path uncertainty_dir;
  PatchConfig patch;
  ThresholdMode mode = ThresholdMode::quantile;
  std::size_t points = 20;
  fs::path out;  // prefix: writes <out>.csv, <out>.json, <out>_iou.json
  std::size_t workers = 1;
};

struct EvaluateResult {
  MetricCurve curve;
  IoUReport iou;
};

inline fs::path with_suffix(const fs::path& prefix, const std::string& suffix) {
  return prefix.string() + suffix;
}

inline EvaluateResult cmd_evaluate(const EvaluateCommand& cmd, std::ostream& log) {
  cmd.patch.validate();
  if (cmd.points < 2) throw ConfigError("threshold sweep needs at least 2 points");
  const auto m = load_manifest(cmd.manifest);
  validate_entries(m, {.labels = true, .scores = true});
  for (const auto& e : m.entries) {
    const auto p = cmd.uncertainty_dir / (e.image_id + ".npy");
    if (!fs::exists(p)) throw ConfigError("no uncertainty map for entry '" + e.image_id + "' at " + p.string());
  }

  const std::size_t n = m.entries.size();
  std::vector<LabelMap> preds(n);
  std::vector<LabelMap> gts(n);
  std::vector<UncertaintyMap> uncs(n);
  parallel_for(n, cmd.workers, [&](std::size_t i) {
    const auto& e = m.entries[i];
    gts[i] = load_labels(m, e);
    preds[i] = predicted_labels(load_scores(m, e), m.ignore_id);
    uncs[i] = as_uncertainty(read_uncertainty_map(cmd.uncertainty_dir / (e.image_id + ".npy")));
  });

  EvaluateResult r{sweep(preds, gts, uncs, cmd.patch, cmd.mode, cmd.points),
                   miou(preds, gts, m.num_classes, m.ignore_id)};

  const nlohmann::json settings{{"window", cmd.patch.window},
                                {"alpha", cmd.patch.alpha},
                                {"stride", cmd.patch.effective_stride()},
                                {"aggregate", aggregate_name(cmd.patch.aggregate)},
                                {"threshold_mode", threshold_mode_name(cmd.mode)},
                                {"points", cmd.points},
                                {"uncertainty_source", source_name(uncs.front().source)}};
  auto curve_json = curve_to_json(r.curve);
  curve_json["settings"] = settings;
  write_file_atomic(with_suffix(cmd.out, ".csv"), curve_to_csv(r.curve));
  write_file_atomic(with_suffix(cmd.out, ".json"), curve_json.dump(2) + "\n");
  write_file_atomic(with_suffix(cmd.out, "_iou.json"), iou_to_json(r.iou).dump(2) + "\n");

  log << "mIoU " << (r.iou.miou ? std::to_string(*r.iou.miou) : "undefined") << " over " << n << " images\n";
  return r;
}

// ---------------------------------------------------------------------------

struct DistancesCommand {
  fs::path manifest;
  std::vector<std::pair<PixelCoord, PixelCoord>> pairs;
  fs::path out;  // prefix: writes <out>_<n>.csv and <out>_<n>.png per pair
  std::size_t scale = 8;
};

inline std::vector<DistanceMatrix> cmd_distances(const DistancesCommand& cmd, std::ostream& log) {
  if (cmd.pairs.empty()) throw ConfigError("distances: no coordinate pairs given");
  const auto m = load_manifest(cmd.manifest);
  validate_entries(m, {.features = true, .labels = true});
  std::vector<PixelCoord> coords;
  for (const auto& [a, b] : cmd.pairs) {
    for (const auto& c : {a, b}) {
      if (std::find(coords.begin(), coords.end(), c) == coords.end()) coords.push_back(c);
    }
  }
  const auto means = fit_location_means(m, coords);
  auto find = [&](const PixelCoord& c) -> const LocationMeans& {
    return means[static_cast<std::size_t>(std::find(coords.begin(), coords.end(), c) - coords.begin())];
  };
  std::vector<DistanceMatrix> out;
  for (std::size_t n = 0; n < cmd.pairs.size(); ++n) {
    const auto& a = find(cmd.pairs[n].first);
    const auto& b = find(cmd.pairs[n].second);
    out.push_back(distance_matrix(a, b));
    const std::string tag = "_" + std::to_string(n);
    write_file_atomic(with_suffix(cmd.out, tag + ".csv"), distance_matrix_to_csv(out.back()));
    write_image(with_suffix(cmd.out, tag + ".png"), upscale(render_matrix(out.back()), cmd.scale));
    log << "pair " << n << ": (" << a.coord.row << "," << a.coord.col << ") vs (" << b.coord.row << ","
        << b.coord.col << "), skipped images " << a.skipped_images << "/" << b.skipped_images << "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

struct SynthCommand {
  fs::path spec;
  fs::path out_dir;
  std::size_t workers = 1;
};

inline DatasetManifest cmd_synth(const SynthCommand& cmd, std::ostream& log) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(cmd.spec));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(cmd.spec.string() + ": " + e.what());
  }
  const SynthSpec spec = synth_spec_from_json(j);
  resolve(spec);  // validate before touching the output directory
  auto m = generate(spec, cmd.out_dir, cmd.workers);
  log << "generated " << m.entries.size() << " images in " << cmd.out_dir.string() << "\n";
  return m;
}

// ---------------------------------------------------------------------------

struct RenderCommand {
  fs::path input;  // .npy map or .csv distance matrix; unused in accuracy mode
  fs::path out;    // image path, or output directory in accuracy mode
  Normalization norm;
  std::size_t scale = 1;
  std::optional<fs::path> accuracy_manifest;  // render pred-vs-gt maps for every entry
};

inline void cmd_render(const RenderCommand& cmd, std::ostream& log) {
  if (cmd.accuracy_manifest) {
    const auto m = load_manifest(*cmd.accuracy_manifest);
    validate_entries(m, {.labels = true, .scores = true});
    ensure_directory(cmd.out);
    for (const auto& e : m.entries) {
      const auto gt = load_labels(m, e);
      const auto pred = predicted_labels(load_scores(m, e), m.ignore_id);
      write_image(cmd.out / (e.image_id + "_accuracy.png"), upscale(render_accuracy(pred, gt), cmd.scale));
    }
    log << "rendered " << m.entries.size() << " accuracy maps\n";
    return;
  }
  GrayImage img;
  if (cmd.input.extension() == ".csv") {
    img = render_matrix(distance_matrix_from_csv(read_text_file(cmd.input)), cmd.norm);
  } else {
    img = render_map(read_uncertainty_map(cmd.input, false), cmd.norm);
  }
  write_image(cmd.out, upscale(img, cmd.scale));
  log << "rendered " << cmd.input.string() << " to " << cmd.out.string() << "\n";
}

}  // namespace ddu
