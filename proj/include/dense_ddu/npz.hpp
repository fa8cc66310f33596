#pragma once

#include <map>
#include <string>
#include <vector>

#include "dense_ddu/npy.hpp"
#include "dense_ddu/zip.hpp"

namespace ddu {

using TensorMap = std::map<std::string, Tensor>;

/// Parsed NPZ container: `.npy` members become tensors keyed by their stem,
/// anything else (e.g. a JSON sidecar) is kept verbatim.
struct Archive {
  TensorMap tensors;
  std::map<std::string, std::string> extras;
};

inline Archive parse_archive(std::span<const std::byte> buf) {
  Archive a;
  for (auto& m : parse_zip(buf)) {
    const bool is_npy = m.name.size() > 4 && m.name.ends_with(".npy");
    if (!is_npy) {
      a.extras.emplace(m.name, std::string(reinterpret_cast<const char*>(m.data.data()), m.data.size()));
      continue;
    }
    const std::string key = m.name.substr(0, m.name.size() - 4);
    try {
      a.tensors.insert_or_assign(key, parse_npy(m.data));
    } catch (const ParseError& e) {
      throw ParseError("member '" + key + "': " + e.what());
    } catch (const UnsupportedFormat& e) {
      throw UnsupportedFormat("member '" + key + "': " + e.what());
    }
  }
  return a;
}

inline std::vector<std::byte> serialize_archive(const Archive& a) {
  std::vector<ZipMember> members;
  for (const auto& [name, t] : a.tensors) members.push_back({name + ".npy", serialize_npy(t)});
  for (const auto& [name, text] : a.extras) {
    const auto* p = reinterpret_cast<const std::byte*>(text.data());
    members.push_back({name, std::vector<std::byte>(p, p + text.size())});
  }
  return serialize_zip(members);
}

inline Archive read_archive_file(const fs::path& path) {
  try {
    return parse_archive(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const UnsupportedFormat& e) {
    throw UnsupportedFormat(path.string() + ": " + e.what());
  }
}

/// Tensor members of an NPZ archive keyed by name without extension.
inline TensorMap read_archive(const fs::path& path) { return read_archive_file(path).tensors; }

inline void write_archive(const fs::path& path, const Archive& a) {
  write_file_atomic(path, serialize_archive(a));
}

inline void write_archive(const fs::path& path, const TensorMap& tensors) {
  write_archive(path, Archive{tensors, {}});
}

}  // namespace ddu
