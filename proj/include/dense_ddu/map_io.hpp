#pragma once

// Uncertainty maps on disk: `<id>.npy` (H×W float64) plus a `<id>.json`
// sidecar carrying polarity and source tag.

#include <string>

#include "json.hpp"

#include "dense_ddu/error.hpp"
#include "dense_ddu/file_io.hpp"
#include "dense_ddu/maps.hpp"
#include "dense_ddu/npy.hpp"

namespace ddu {

inline fs::path sidecar_path(const fs::path& npy) {
  fs::path p = npy;
  p.replace_extension(".json");
  return p;
}

inline void write_uncertainty_map(const fs::path& npy, const UncertaintyMap& map,
                                  const nlohmann::json& settings = nlohmann::json::object()) {
  nlohmann::json side{{"source", source_name(map.source)},
                      {"polarity", polarity_name(map.polarity())},
                      {"height", map.height},
                      {"width", map.width},
                      {"settings", settings}};
  write_tensor(npy, map.to_tensor());
  write_file_atomic(sidecar_path(npy), side.dump(2) + "\n");
}

/// Reads a map and its sidecar. Without a sidecar the map is taken as
/// uncertainty-like only when `require_sidecar` is false.
inline UncertaintyMap read_uncertainty_map(const fs::path& npy, bool require_sidecar = true) {
  const Tensor t = read_tensor(npy);
  if (t.rank() != 2 || (t.dtype() != DType::f64 && t.dtype() != DType::f32)) {
    throw ValidationError(npy.string() + ": uncertainty map must be an H×W float tensor");
  }
  Source source = Source::entropy;
  const fs::path side = sidecar_path(npy);
  if (fs::exists(side)) {
    try {
      const auto j = nlohmann::json::parse(read_text_file(side));
      source = parse_source(j.at("source").get<std::string>());
      const auto pol = j.at("polarity").get<std::string>();
      if (pol != polarity_name(polarity_of(source))) {
        throw ValidationError(side.string() + ": polarity '" + pol + "' contradicts source");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(side.string() + ": " + e.what());
    }
  } else if (require_sidecar) {
    throw ConfigError("missing sidecar " + side.string());
  }
  return {t.dim(0), t.dim(1), t.to_f64(), source};
}

}  // namespace ddu
