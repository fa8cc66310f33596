#pragma once

// Per-class sufficient statistics (count, mean, centered second moment) for a
// location-shared Gaussian fit. Every pixel is an independent sample; there
// are no per-location parameters.

#include <cstdint>
#include <span>
#include <vector>

#include "dense_ddu/error.hpp"
#include "dense_ddu/maps.hpp"

namespace ddu {

/// Count n, mean, and centered comoment M = Σ (z − mean)(z − mean)ᵀ (D×D row-major).
class ClassAccumulator {
 public:
  ClassAccumulator() = default;
  ClassAccumulator(std::int32_t class_id, std::size_t dim)
      : class_id_(class_id), dim_(dim), mean_(dim, 0.0), comoment_(dim * dim, 0.0) {}

  std::int32_t class_id() const noexcept { return class_id_; }
  std::size_t dim() const noexcept { return dim_; }
  std::uint64_t count() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }
  std::span<const double> mean() const noexcept { return mean_; }
  std::span<const double> comoment() const noexcept { return comoment_; }

  /// Maximum-likelihood covariance M / n.
  std::vector<double> covariance() const {
    std::vector<double> cov(comoment_);
    if (count_) {
      for (double& v : cov) v /= static_cast<double>(count_);
    }
    return cov;
  }

  /// Single-sample Welford update.
  void add(std::span<const double> z) {
    check_dim(z.size());
    ++count_;
    const double n = static_cast<double>(count_);
    std::vector<double> delta(dim_);
    for (std::size_t d = 0; d < dim_; ++d) {
      delta[d] = z[d] - mean_[d];
      mean_[d] += delta[d] / n;
    }
    const double f = (n - 1.0) / n;
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t j = 0; j < dim_; ++j) comoment_[i * dim_ + j] += delta[i] * delta[j] * f;
    }
  }

  /// Folds every pixel labelled with this class into the statistics. Other
  /// classes and ignore-id pixels are skipped.
  void accumulate(const FeatureMap& features, const LabelMap& labels) {
    require_same_shape(features.height, features.width, labels.height, labels.width, "accumulate");
    check_dim(features.dim);
    std::vector<std::size_t> pixels;
    for (std::size_t p = 0; p < labels.pixels(); ++p) {
      if (labels[p] == class_id_ && !labels.ignored(p)) pixels.push_back(p);
    }
    merge_in(batch(features, pixels));
  }

  /// Pairwise (Chan et al.) combination of two disjoint sample sets.
  void merge_in(const ClassAccumulator& other) {
    if (other.class_id_ != class_id_ || other.dim_ != dim_) {
      throw ValidationError("merge: accumulators for class " + std::to_string(class_id_) + "/D=" +
                            std::to_string(dim_) + " and class " + std::to_string(other.class_id_) +
                            "/D=" + std::to_string(other.dim_));
    }
    if (other.count_ == 0) return;
    if (count_ == 0) {
      *this = other;
      return;
    }
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(other.count_);
    const double n = na + nb;
    std::vector<double> delta(dim_);
    for (std::size_t d = 0; d < dim_; ++d) delta[d] = other.mean_[d] - mean_[d];
    const double f = na * nb / n;
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t j = 0; j < dim_; ++j) {
        comoment_[i * dim_ + j] += other.comoment_[i * dim_ + j] + delta[i] * delta[j] * f;
      }
    }
    for (std::size_t d = 0; d < dim_; ++d) mean_[d] = (na * mean_[d] + nb * other.mean_[d]) / n;
    count_ += other.count_;
  }

  /// Two-pass statistics of the listed pixels (exact batch mean, then centered
  /// scatter over the lower triangle, mirrored so M is exactly symmetric).
  ClassAccumulator batch(const FeatureMap& features, std::span<const std::size_t> pixels) const {
    ClassAccumulator b(class_id_, dim_);
    if (pixels.empty()) return b;
    b.count_ = pixels.size();
    for (std::size_t p : pixels) {
      const auto z = features.pixel(p);
      for (std::size_t d = 0; d < dim_; ++d) b.mean_[d] += z[d];
    }
    const double n = static_cast<double>(pixels.size());
    for (double& m : b.mean_) m /= n;
    std::vector<double> c(dim_);
    for (std::size_t p : pixels) {
      const auto z = features.pixel(p);
      for (std::size_t d = 0; d < dim_; ++d) c[d] = z[d] - b.mean_[d];
      for (std::size_t i = 0; i < dim_; ++i) {
        double* row = b.comoment_.data() + i * dim_;
        const double ci = c[i];
        for (std::size_t j = 0; j <= i; ++j) row[j] += ci * c[j];
      }
    }
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t j = 0; j < i; ++j) b.comoment_[j * dim_ + i] = b.comoment_[i * dim_ + j];
    }
    return b;
  }

 private:
  void check_dim(std::size_t d) const {
    if (d != dim_) {
      throw ValidationError("feature dim " + std::to_string(d) + " != accumulator dim " + std::to_string(dim_));
    }
  }

  std::int32_t class_id_ = 0;
  std::size_t dim_ = 0;
  std::uint64_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> comoment_;
};

inline ClassAccumulator merge(ClassAccumulator a, const ClassAccumulator& b) {
  a.merge_in(b);
  return a;
}

inline ClassAccumulator accumulate(ClassAccumulator acc, const FeatureMap& features, const LabelMap& labels) {
  acc.accumulate(features, labels);
  return acc;
}

/// One accumulator per class id in [0, K).
class AccumulatorSet {
 public:
  AccumulatorSet() = default;
  AccumulatorSet(std::size_t num_classes, std::size_t dim) : dim_(dim) {
    classes_.reserve(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) classes_.emplace_back(static_cast<std::int32_t>(c), dim);
  }

  std::size_t num_classes() const noexcept { return classes_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const ClassAccumulator& operator[](std::size_t c) const { return classes_[c]; }
  const std::vector<ClassAccumulator>& classes() const noexcept { return classes_; }

  void accumulate(const FeatureMap& features, const LabelMap& labels) {
    require_same_shape(features.height, features.width, labels.height, labels.width, "accumulate");
    if (features.dim != dim_) {
      throw ValidationError("feature dim " + std::to_string(features.dim) + " != model dim " + std::to_string(dim_));
    }
    labels.validate(classes_.size());
    std::vector<std::vector<std::size_t>> by_class(classes_.size());
    for (std::size_t p = 0; p < labels.pixels(); ++p) {
      if (!labels.ignored(p)) by_class[static_cast<std::size_t>(labels[p])].push_back(p);
    }
    for (std::size_t c = 0; c < classes_.size(); ++c) {
      if (!by_class[c].empty()) classes_[c].merge_in(classes_[c].batch(features, by_class[c]));
    }
  }

  void merge_in(const AccumulatorSet& other) {
    if (other.classes_.size() != classes_.size() || other.dim_ != dim_) {
      throw ValidationError("merge: accumulator sets differ in K or D");
    }
    for (std::size_t c = 0; c < classes_.size(); ++c) classes_[c].merge_in(other.classes_[c]);
  }

 private:
  std::size_t dim_ = 0;
  std::vector<ClassAccumulator> classes_;
};

}  // namespace ddu
