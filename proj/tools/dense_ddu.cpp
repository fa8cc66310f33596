// dense_ddu: command-line frontend for fitting class-conditional Gaussians to
// segmentation features and evaluating per-pixel uncertainty.
//
// Settings resolve as: command-line flag > environment (DENSE_DDU_WORKERS) >
// JSON config file (--config) > built-in default.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dense_ddu/commands.hpp"

namespace {

using ddu::fs::path;

/// Flag value if given, else config-file value, else default.
template <class T>
T resolve_setting(const CLI::Option* flag, const T& flag_value, const nlohmann::json& config, const char* key,
                  T fallback) {
  if (flag->count() > 0) return flag_value;
  if (config.contains(key)) {
    try {
      return config.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ddu::ConfigError(std::string("config: field '") + key + "' has the wrong type");
    }
  }
  return fallback;
}

std::size_t resolve_workers(const CLI::Option* flag, std::size_t flag_value, const nlohmann::json& config) {
  if (flag->count() > 0) return flag_value;
  if (const char* env = std::getenv("DENSE_DDU_WORKERS"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoul(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      return v;
    } catch (const std::exception&) {
      throw ddu::ConfigError(std::string("DENSE_DDU_WORKERS is not a number: ") + env);
    }
  }
  return resolve_setting<std::size_t>(flag, 0, config, "workers", 1);
}

std::vector<double> parse_ladder(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ddu::ConfigError("bad jitter ladder entry '" + item + "'");
    }
  }
  if (out.empty()) throw ddu::ConfigError("empty jitter ladder");
  return out;
}

std::pair<ddu::PixelCoord, ddu::PixelCoord> parse_pair(const std::string& text) {
  std::vector<std::size_t> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw ddu::ConfigError("bad coordinate '" + item + "' in pair '" + text + "'");
    }
  }
  if (v.size() != 4) throw ddu::ConfigError("pair must be row1,col1,row2,col2, got '" + text + "'");
  return {{v[0], v[1]}, {v[2], v[3]}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-density and softmax uncertainty for dense prediction models"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with default settings");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit per-class Gaussians over a manifest's features");
  std::string fit_manifest, fit_out, fit_cov = "full", fit_jitter;
  std::size_t fit_workers = 1;
  fit->add_option("--manifest", fit_manifest)->required();
  fit->add_option("--out", fit_out, "Model archive (.npz)")->required();
  auto* fit_cov_opt = fit->add_option("--covariance", fit_cov, "full|diagonal|tied");
  auto* fit_jitter_opt = fit->add_option("--jitter", fit_jitter, "Comma-separated jitter ladder");
  auto* fit_workers_opt = fit->add_option("--workers", fit_workers);

  // density
  auto* density = app.add_subcommand("density", "Per-image log feature density maps");
  std::string den_manifest, den_model, den_out;
  std::size_t den_workers = 1;
  density->add_option("--manifest", den_manifest)->required();
  density->add_option("--model", den_model)->required();
  density->add_option("--out-dir", den_out)->required();
  auto* den_workers_opt = density->add_option("--workers", den_workers);

  // entropy
  auto* ent = app.add_subcommand("entropy", "Per-image softmax entropy / PE / MI maps");
  std::string ent_manifest, ent_out, ent_measure = "entropy";
  std::size_t ent_workers = 1;
  ent->add_option("--manifest", ent_manifest)->required();
  ent->add_option("--out-dir", ent_out)->required();
  auto* ent_measure_opt = ent->add_option("--measure", ent_measure, "entropy|pe|mi");
  auto* ent_workers_opt = ent->add_option("--workers", ent_workers);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Patch metric sweep and mIoU");
  std::string ev_manifest, ev_unc, ev_out, ev_agg = "mean", ev_mode = "quantile";
  std::size_t ev_window = 1, ev_stride = 0, ev_points = 20, ev_workers = 1;
  double ev_alpha = 0.5;
  ev->add_option("--manifest", ev_manifest)->required();
  ev->add_option("--uncertainty-dir", ev_unc)->required();
  ev->add_option("--out", ev_out, "Output prefix")->required();
  auto* ev_window_opt = ev->add_option("--window", ev_window);
  auto* ev_alpha_opt = ev->add_option("--alpha", ev_alpha);
  auto* ev_stride_opt = ev->add_option("--stride", ev_stride, "0 = window");
  auto* ev_agg_opt = ev->add_option("--aggregate", ev_agg, "mean|max|median");
  auto* ev_mode_opt = ev->add_option("--mode", ev_mode, "quantile|absolute");
  auto* ev_points_opt = ev->add_option("--points", ev_points);
  auto* ev_workers_opt = ev->add_option("--workers", ev_workers);

  // distances
  auto* dist = app.add_subcommand("distances", "Cross-location class-mean distance matrices");
  std::string dist_manifest, dist_out;
  std::vector<std::string> dist_pairs;
  std::size_t dist_scale = 8;
  dist->add_option("--manifest", dist_manifest)->required();
  dist->add_option("--pair", dist_pairs, "row1,col1,row2,col2 (repeatable)")->required();
  dist->add_option("--out", dist_out, "Output prefix")->required();
  auto* dist_scale_opt = dist->add_option("--scale", dist_scale, "Heatmap upscale factor");

  // synth
  auto* syn = app.add_subcommand("synth", "Generate a synthetic dataset from a JSON spec");
  std::string syn_spec, syn_out;
  std::size_t syn_workers = 1;
  syn->add_option("--spec", syn_spec)->required();
  syn->add_option("--out-dir", syn_out)->required();
  auto* syn_workers_opt = syn->add_option("--workers", syn_workers);

  // render
  auto* ren = app.add_subcommand("render", "Render a map or distance matrix as a grayscale image");
  std::string ren_in, ren_out, ren_norm = "minmax", ren_acc;
  double ren_lo = 0.01, ren_hi = 0.99;
  std::size_t ren_scale = 1;
  ren->add_option("--input", ren_in, "Map .npy or matrix .csv");
  ren->add_option("--out", ren_out, "Image path (.png/.pgm), or directory with --accuracy")->required();
  auto* ren_norm_opt = ren->add_option("--normalization", ren_norm, "minmax|quantile");
  auto* ren_lo_opt = ren->add_option("--lo", ren_lo, "Lower quantile");
  auto* ren_hi_opt = ren->add_option("--hi", ren_hi, "Upper quantile");
  auto* ren_scale_opt = ren->add_option("--scale", ren_scale);
  ren->add_option("--accuracy", ren_acc, "Manifest: render accuracy maps for every entry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    nlohmann::json config = nlohmann::json::object();
    if (!config_path.empty()) {
      try {
        config = nlohmann::json::parse(ddu::read_text_file(config_path));
      } catch (const nlohmann::json::parse_error& e) {
        throw ddu::ParseError(config_path + ": " + e.what());
      }
      if (!config.is_object()) throw ddu::ConfigError(config_path + ": config must be a JSON object");
    }

    if (*fit) {
      ddu::FitCommand cmd{fit_manifest, fit_out, {}, resolve_workers(fit_workers_opt, fit_workers, config)};
      cmd.options.covariance = ddu::parse_covariance_mode(
          resolve_setting<std::string>(fit_cov_opt, fit_cov, config, "covariance", "full"));
      if (fit_jitter_opt->count() > 0) {
        cmd.options.jitter_ladder = parse_ladder(fit_jitter);
      } else if (config.contains("jitter_ladder")) {
        cmd.options.jitter_ladder = config.at("jitter_ladder").get<std::vector<double>>();
      }
      std::cout << "settings " << ddu::fit_settings(cmd.options).dump() << " workers " << cmd.workers << "\n";
      ddu::cmd_fit(cmd, std::cout);
    } else if (*density) {
      ddu::cmd_density({den_manifest, den_model, den_out, resolve_workers(den_workers_opt, den_workers, config)},
                       std::cout);
    } else if (*ent) {
      ddu::cmd_entropy({ent_manifest, ent_out,
                        ddu::parse_measure(resolve_setting<std::string>(ent_measure_opt, ent_measure, config,
                                                                        "measure", "entropy")),
                        resolve_workers(ent_workers_opt, ent_workers, config)},
                       std::cout);
    } else if (*ev) {
      ddu::EvaluateCommand cmd;
      cmd.manifest = ev_manifest;
      cmd.uncertainty_dir = ev_unc;
      cmd.out = ev_out;
      cmd.patch.window = resolve_setting<std::size_t>(ev_window_opt, ev_window, config, "window", 1);
      cmd.patch.alpha = resolve_setting<double>(ev_alpha_opt, ev_alpha, config, "alpha", 0.5);
      cmd.patch.stride = resolve_setting<std::size_t>(ev_stride_opt, ev_stride, config, "stride", 0);
      cmd.patch.aggregate =
          ddu::parse_aggregate(resolve_setting<std::string>(ev_agg_opt, ev_agg, config, "aggregate", "mean"));
      cmd.mode = ddu::parse_threshold_mode(
          resolve_setting<std::string>(ev_mode_opt, ev_mode, config, "threshold_mode", "quantile"));
      cmd.points = resolve_setting<std::size_t>(ev_points_opt, ev_points, config, "points", 20);
      cmd.workers = resolve_workers(ev_workers_opt, ev_workers, config);
      ddu::cmd_evaluate(cmd, std::cout);
    } else if (*dist) {
      ddu::DistancesCommand cmd{dist_manifest, {}, dist_out,
                                resolve_setting<std::size_t>(dist_scale_opt, dist_scale, config, "scale", 8)};
      for (const auto& p : dist_pairs) cmd.pairs.push_back(parse_pair(p));
      ddu::cmd_distances(cmd, std::cout);
    } else if (*syn) {
      ddu::cmd_synth({syn_spec, syn_out, resolve_workers(syn_workers_opt, syn_workers, config)}, std::cout);
    } else if (*ren) {
      ddu::RenderCommand cmd;
      cmd.input = ren_in;
      cmd.out = ren_out;
      cmd.scale = resolve_setting<std::size_t>(ren_scale_opt, ren_scale, config, "scale", 1);
      const auto norm = resolve_setting<std::string>(ren_norm_opt, ren_norm, config, "normalization", "minmax");
      if (norm == "quantile") {
        cmd.norm = ddu::Normalization::quantile(resolve_setting<double>(ren_lo_opt, ren_lo, config, "lo", 0.01),
                                                resolve_setting<double>(ren_hi_opt, ren_hi, config, "hi", 0.99));
      } else if (norm != "minmax") {
        throw ddu::ConfigError("unknown normalization '" + norm + "' (minmax|quantile)");
      }
      if (!ren_acc.empty()) {
        cmd.accuracy_manifest = ren_acc;
      } else if (ren_in.empty()) {
        throw ddu::ConfigError("render needs --input or --accuracy");
      }
      ddu::cmd_render(cmd, std::cout);
    }
  } catch (const ddu::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ddu::exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
