#pragma once

// Dense row-major helpers for the small symmetric matrices of the GDA fit.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace ddu::linalg {

/// In-place lower Cholesky factor of a symmetric D×D matrix (row-major).
/// Only the lower triangle is read; the upper triangle is zeroed on success.
/// Returns false when a pivot is not strictly positive and finite.
inline bool cholesky_lower(std::span<double> a, std::size_t dim) {
  for (std::size_t j = 0; j < dim; ++j) {
    double* row_j = a.data() + j * dim;
    double diag = row_j[j];
    for (std::size_t k = 0; k < j; ++k) diag -= row_j[k] * row_j[k];
    if (!(diag > 0.0) || !std::isfinite(diag)) return false;
    const double l_jj = std::sqrt(diag);
    row_j[j] = l_jj;
    for (std::size_t i = j + 1; i < dim; ++i) {
      double* row_i = a.data() + i * dim;
      double s = row_i[j];
      for (std::size_t k = 0; k < j; ++k) s -= row_i[k] * row_j[k];
      row_i[j] = s / l_jj;
    }
  }
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = i + 1; j < dim; ++j) a[i * dim + j] = 0.0;
  }
  return true;
}

/// Solves L·y = b for lower-triangular L, overwriting b with y.
inline void forward_substitute(std::span<const double> lower, std::size_t dim, std::span<double> b) {
  for (std::size_t i = 0; i < dim; ++i) {
    const double* row = lower.data() + i * dim;
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= row[k] * b[k];
    b[i] = s / row[i];
  }
}

/// log det(L·Lᵀ) = 2 Σ log L_ii.
inline double log_det_from_cholesky(std::span<const double> lower, std::size_t dim) {
  double s = 0.0;
  for (std::size_t i = 0; i < dim; ++i) s += std::log(lower[i * dim + i]);
  return 2.0 * s;
}

/// y = L·x for lower-triangular L.
inline void lower_multiply(std::span<const double> lower, std::size_t dim, std::span<const double> x,
                           std::span<double> y) {
  for (std::size_t i = 0; i < dim; ++i) {
    const double* row = lower.data() + i * dim;
    double s = 0.0;
    for (std::size_t k = 0; k <= i; ++k) s += row[k] * x[k];
    y[i] = s;
  }
}

/// Σ = L·Lᵀ.
inline std::vector<double> gram_from_lower(std::span<const double> lower, std::size_t dim) {
  std::vector<double> out(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k <= j; ++k) s += lower[i * dim + k] * lower[j * dim + k];
      out[i * dim + j] = s;
      out[j * dim + i] = s;
    }
  }
  return out;
}

inline double mean_diagonal(std::span<const double> a, std::size_t dim) {
  double s = 0.0;
  for (std::size_t i = 0; i < dim; ++i) s += a[i * dim + i];
  return dim ? s / static_cast<double>(dim) : 0.0;
}

inline constexpr double log_two_pi = 1.8378770664093454835606594728112;  // log(2π)

}  // namespace ddu::linalg
