#pragma once

#include <atomic>
#include <cstdint>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "dense_ddu/file_io.hpp"
#include "dense_ddu/maps.hpp"

namespace testutil {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = ddu::fs::temp_directory_path() /
            ("ddu_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    ddu::fs::remove_all(path_);
    ddu::fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    ddu::fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const ddu::fs::path& path() const { return path_; }
  ddu::fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  ddu::fs::path path_;
};

inline std::vector<std::byte> to_bytes(const std::string& s) {
  const auto* p = reinterpret_cast<const std::byte*>(s.data());
  return {p, p + s.size()};
}

inline std::vector<std::string> files_in(const ddu::fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : ddu::fs::directory_iterator(dir)) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

inline ddu::LabelMap random_labels(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t k,
                                   double ignore_rate, std::int32_t ignore = ddu::default_ignore_id) {
  std::uniform_int_distribution<int> cls(0, static_cast<int>(k) - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::int32_t> v(h * w);
  for (auto& x : v) x = u(rng) < ignore_rate ? ignore : cls(rng);
  return {h, w, std::move(v), ignore};
}

}  // namespace testutil
