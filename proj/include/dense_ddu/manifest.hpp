#pragma once

// Dataset manifest: a JSON document listing per-image tensor files.
//
//   { "num_classes": 21, "feature_dim": 256, "ignore_id": 255,
//     "entries": [ { "image_id": "2007_000033",
//                    "feature_path": "feat/2007_000033.npy",
//                    "logit_path": "logits/2007_000033.npy",    (or "softmax_path")
//                    "label_path": "labels/2007_000033.npy",
//                    "ood_mask_path": "ood/2007_000033.npy" } ] }   (optional)
//
// Relative paths resolve against the manifest's directory.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dense_ddu/error.hpp"
#include "dense_ddu/file_io.hpp"
#include "dense_ddu/maps.hpp"
#include "dense_ddu/npy.hpp"

namespace ddu {

struct ManifestEntry {
  std::string image_id;
  std::optional<fs::path> feature_path;
  std::optional<fs::path> logit_path;
  std::optional<fs::path> softmax_path;
  std::optional<fs::path> label_path;
  std::optional<fs::path> ood_mask_path;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::int32_t ignore_id = default_ignore_id;
  fs::path base_dir;

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }
};

namespace manifest_detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw ConfigError(where + ": missing required field '" + key + "'");
  }
  return j.at(key);
}

template <class T>
T get_as(const nlohmann::json& v, const char* key, const std::string& where) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + ": field '" + key + "' has the wrong type");
  }
}

inline std::optional<fs::path> optional_path(const nlohmann::json& e, const char* key, const std::string& where) {
  if (!e.contains(key) || e.at(key).is_null()) return std::nullopt;
  return fs::path(get_as<std::string>(e.at(key), key, where));
}

}  // namespace manifest_detail

inline DatasetManifest parse_manifest(const nlohmann::json& j, fs::path base_dir, const std::string& where) {
  using namespace manifest_detail;
  DatasetManifest m;
  m.base_dir = std::move(base_dir);
  m.num_classes = get_as<std::size_t>(require(j, "num_classes", where), "num_classes", where);
  m.feature_dim = get_as<std::size_t>(require(j, "feature_dim", where), "feature_dim", where);
  m.ignore_id = get_as<std::int32_t>(require(j, "ignore_id", where), "ignore_id", where);
  const auto& entries = require(j, "entries", where);
  if (!entries.is_array()) throw ConfigError(where + ": 'entries' must be an array");
  if (m.num_classes == 0) throw ValidationError(where + ": num_classes must be positive");
  if (m.ignore_id >= 0 && static_cast<std::size_t>(m.ignore_id) < m.num_classes) {
    throw ValidationError(where + ": ignore_id " + std::to_string(m.ignore_id) + " collides with a class id");
  }

  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const std::string ew = where + ": entries[" + std::to_string(i) + "]";
    ManifestEntry entry;
    entry.image_id = get_as<std::string>(require(e, "image_id", ew), "image_id", ew);
    entry.feature_path = optional_path(e, "feature_path", ew);
    entry.logit_path = optional_path(e, "logit_path", ew);
    entry.softmax_path = optional_path(e, "softmax_path", ew);
    entry.label_path = optional_path(e, "label_path", ew);
    entry.ood_mask_path = optional_path(e, "ood_mask_path", ew);
    // entries may restate the dataset-wide constants; they must agree
    if (e.contains("num_classes") && get_as<std::size_t>(e["num_classes"], "num_classes", ew) != m.num_classes) {
      throw ValidationError(ew + ": num_classes disagrees with the manifest");
    }
    if (e.contains("feature_dim") && get_as<std::size_t>(e["feature_dim"], "feature_dim", ew) != m.feature_dim) {
      throw ValidationError(ew + ": feature_dim disagrees with the manifest");
    }
    if (e.contains("ignore_id") && get_as<std::int32_t>(e["ignore_id"], "ignore_id", ew) != m.ignore_id) {
      throw ValidationError(ew + ": ignore_id disagrees with the manifest");
    }
    m.entries.push_back(std::move(entry));
  }
  return m;
}

inline DatasetManifest load_manifest(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return parse_manifest(j, path.parent_path(), path.string());
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json j{{"image_id", e.image_id}};
    if (e.feature_path) j["feature_path"] = e.feature_path->generic_string();
    if (e.logit_path) j["logit_path"] = e.logit_path->generic_string();
    if (e.softmax_path) j["softmax_path"] = e.softmax_path->generic_string();
    if (e.label_path) j["label_path"] = e.label_path->generic_string();
    if (e.ood_mask_path) j["ood_mask_path"] = e.ood_mask_path->generic_string();
    entries.push_back(std::move(j));
  }
  return {{"num_classes", m.num_classes}, {"feature_dim", m.feature_dim},
          {"ignore_id", m.ignore_id}, {"entries", std::move(entries)}};
}

inline void save_manifest(const fs::path& path, const DatasetManifest& m) {
  write_file_atomic(path, manifest_to_json(m).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Per-entry tensor loading with shape checks against the manifest constants.

inline const fs::path& require_path(const std::optional<fs::path>& p, const ManifestEntry& e, const char* what) {
  if (!p) throw ConfigError("entry '" + e.image_id + "' has no " + what);
  return *p;
}

inline FeatureMap load_features(const DatasetManifest& m, const ManifestEntry& e) {
  auto f = FeatureMap::from_tensor(read_tensor(m.resolve(require_path(e.feature_path, e, "feature_path"))));
  if (f.dim != m.feature_dim) {
    throw ValidationError("entry '" + e.image_id + "': feature dim " + std::to_string(f.dim) +
                          " != manifest feature_dim " + std::to_string(m.feature_dim));
  }
  return f;
}

inline LabelMap load_labels(const DatasetManifest& m, const ManifestEntry& e) {
  auto l = LabelMap::from_tensor(read_tensor(m.resolve(require_path(e.label_path, e, "label_path"))), m.ignore_id);
  try {
    l.validate(m.num_classes);
  } catch (const ValidationError& err) {
    throw ValidationError("entry '" + e.image_id + "': " + err.what());
  }
  return l;
}

inline LabelMap load_ood_mask(const DatasetManifest& m, const ManifestEntry& e) {
  return LabelMap::from_tensor(read_tensor(m.resolve(require_path(e.ood_mask_path, e, "ood_mask_path"))), -1);
}

struct EntryRequirements {
  bool features = false;
  bool labels = false;
  bool scores = false;  // logits or softmax
};

/// Checks existence and header shapes of every required tensor without
/// reading payloads, so commands can fail before writing any output.
inline void validate_entries(const DatasetManifest& m, EntryRequirements req) {
  if (m.entries.empty()) throw ConfigError("manifest has no entries");
  for (const auto& e : m.entries) {
    const std::string who = "entry '" + e.image_id + "'";
    std::optional<std::pair<std::size_t, std::size_t>> hw;
    auto check_hw = [&](std::size_t h, std::size_t w, const char* what) {
      if (!hw) {
        hw = {h, w};
      } else if (hw->first != h || hw->second != w) {
        throw ValidationError(who + ": " + what + " spatial size differs from other tensors");
      }
    };
    if (req.features) {
      const auto h = read_tensor_header(m.resolve(require_path(e.feature_path, e, "feature_path")));
      if (h.shape.size() != 3 || h.shape[2] != m.feature_dim) {
        throw ValidationError(who + ": features must be H×W×" + std::to_string(m.feature_dim) +
                              ", got " + shape_string(h.shape));
      }
      check_hw(h.shape[0], h.shape[1], "features");
    }
    if (req.labels) {
      const auto h = read_tensor_header(m.resolve(require_path(e.label_path, e, "label_path")));
      if (h.shape.size() != 2) throw ValidationError(who + ": labels must be H×W");
      if (h.dtype != DType::u8 && h.dtype != DType::i32) throw ValidationError(who + ": labels must be uint8 or int32");
      check_hw(h.shape[0], h.shape[1], "labels");
    }
    if (req.scores) {
      if (e.softmax_path) {
        const auto h = read_tensor_header(m.resolve(*e.softmax_path));
        if ((h.shape.size() != 3 && h.shape.size() != 4) || h.shape.back() != m.num_classes) {
          throw ValidationError(who + ": softmax must be [M×]H×W×" + std::to_string(m.num_classes));
        }
        const std::size_t off = h.shape.size() - 3;
        check_hw(h.shape[off], h.shape[off + 1], "softmax");
      } else if (e.logit_path) {
        const auto h = read_tensor_header(m.resolve(*e.logit_path));
        if (h.shape.size() != 3 || h.shape[2] != m.num_classes) {
          throw ValidationError(who + ": logits must be H×W×" + std::to_string(m.num_classes));
        }
        check_hw(h.shape[0], h.shape[1], "logits");
      } else {
        throw ConfigError(who + " has neither logit_path nor softmax_path");
      }
    }
  }
}

}  // namespace ddu
