#pragma once

// Test-only reference encoder: a literal double-loop transcription of the
// normalized-gradient definitions with an unguarded soft assignment. Kept
// independent of the library's streaming implementation on purpose.

#include "nesti/fv.hpp"
#include "nesti/gmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace nesti_test {

inline double oracle_density(const nesti::Vec3& p, const nesti::Vec3& mu, double sigma) {
  const double var = sigma * sigma;
  return std::pow(2.0 * std::numbers::pi * var, -1.5) *
         std::exp(-(p - mu).squaredNorm() / (2.0 * var));
}

inline std::vector<double> oracle_terms(const nesti::GaussianGrid& grid,
                                        const nesti::Vec3& p, int k) {
  double denom = 0.0;
  for (int j = 0; j < grid.component_count; ++j)
    denom += grid.weight *
             oracle_density(p, grid.centers[static_cast<std::size_t>(j)], grid.sigma);
  const double gamma =
      grid.weight * oracle_density(p, grid.centers[static_cast<std::size_t>(k)], grid.sigma) /
      denom;

  const nesti::Vec3& mu = grid.centers[static_cast<std::size_t>(k)];
  std::vector<double> out(7);
  out[0] = (gamma - grid.weight) / std::sqrt(grid.weight);
  for (int axis = 0; axis < 3; ++axis) {
    const double d = (p[axis] - mu[axis]) / grid.sigma;
    out[static_cast<std::size_t>(1 + axis)] = gamma * d / std::sqrt(grid.weight);
    out[static_cast<std::size_t>(4 + axis)] =
        gamma * (d * d - 1.0) / std::sqrt(2.0 * grid.weight);
  }
  return out;
}

// Unguarded soft assignment of one point against every component.
inline std::vector<double> oracle_gamma(const nesti::GaussianGrid& grid,
                                        const nesti::Vec3& p) {
  std::vector<double> gamma(static_cast<std::size_t>(grid.component_count));
  double denom = 0.0;
  for (int k = 0; k < grid.component_count; ++k) {
    gamma[static_cast<std::size_t>(k)] =
        grid.weight *
        oracle_density(p, grid.centers[static_cast<std::size_t>(k)], grid.sigma);
    denom += gamma[static_cast<std::size_t>(k)];
  }
  for (double& g : gamma) g /= denom;
  return gamma;
}

inline nesti::Dmfv oracle_3dmfv(const nesti::GaussianGrid& grid,
                                const std::vector<nesti::Vec3>& points,
                                bool normalize_extrema = false) {
  using nesti::Dmfv;
  Dmfv out(grid.m);
  const int k_count = grid.component_count;
  const int t_count = static_cast<int>(points.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> sums(static_cast<std::size_t>(k_count) * 7, 0.0);
  std::vector<double> maxs(static_cast<std::size_t>(k_count) * 7, -inf);
  std::vector<double> mins(static_cast<std::size_t>(k_count) * 7, inf);

  for (int t = 0; t < t_count; ++t) {
    const nesti::Vec3& p = points[static_cast<std::size_t>(t)];
    const std::vector<double> gamma = oracle_gamma(grid, p);
    for (int k = 0; k < k_count; ++k) {
      const nesti::Vec3& mu = grid.centers[static_cast<std::size_t>(k)];
      double terms[7];
      terms[0] = (gamma[static_cast<std::size_t>(k)] - grid.weight) / std::sqrt(grid.weight);
      for (int axis = 0; axis < 3; ++axis) {
        const double d = (p[axis] - mu[axis]) / grid.sigma;
        terms[1 + axis] = gamma[static_cast<std::size_t>(k)] * d / std::sqrt(grid.weight);
        terms[4 + axis] = gamma[static_cast<std::size_t>(k)] * (d * d - 1.0) /
                          std::sqrt(2.0 * grid.weight);
      }
      for (int c = 0; c < 7; ++c) {
        const std::size_t idx = static_cast<std::size_t>(k) * 7 + static_cast<std::size_t>(c);
        sums[idx] += terms[c];
        maxs[idx] = std::max(maxs[idx], terms[c]);
        mins[idx] = std::min(mins[idx], terms[c]);
      }
    }
  }

  for (int k = 0; k < k_count; ++k)
    for (int c = 0; c < 7; ++c) {
      const std::size_t idx = static_cast<std::size_t>(k) * 7 + static_cast<std::size_t>(c);
      out.at(c, k) = sums[idx] / t_count;
      out.at(7 + c, k) = normalize_extrema ? maxs[idx] / t_count : maxs[idx];
      if (c >= 1) out.at(13 + c, k) = normalize_extrema ? mins[idx] / t_count : mins[idx];
    }
  return out;
}

inline double max_abs_diff(const nesti::Dmfv& a, const nesti::Dmfv& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  return worst;
}

}  // namespace nesti_test
