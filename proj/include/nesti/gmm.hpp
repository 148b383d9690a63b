#pragma once

#include "nesti/common.hpp"

#include <Eigen/Core>

#include <vector>

namespace nesti {

// Uniform isotropic Gaussian mixture on an m x m x m lattice inside
// [-1, 1]^3. Centers sit at cell midpoints, the shared standard deviation is
// 1/m and every weight is 1/K with K = m^3. Component k maps to lattice cell
// (ix, iy, iz) via k = (ix * m + iy) * m + iz.
struct GaussianGrid {
  int m = 0;
  int component_count = 0;
  std::vector<Vec3> centers;
  double sigma = 0.0;
  double weight = 0.0;
};

GaussianGrid build_grid(int m);

// Soft assignments for a batch of points: gamma is T x K and row-stochastic,
// point_likelihood holds the full mixture density of each point.
struct Assignment {
  Eigen::MatrixXd gamma;
  Eigen::VectorXd point_likelihood;
};

// Numerically guarded evaluation: per-point max log density is subtracted
// before exponentiation.
Assignment soft_assign(const GaussianGrid& grid, const std::vector<Vec3>& points);

}  // namespace nesti
