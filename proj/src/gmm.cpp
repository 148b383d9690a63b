#include "nesti/gmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace nesti {

GaussianGrid build_grid(int m) {
  if (m < 1) throw DataError("grid resolution m must be >= 1");
  GaussianGrid grid;
  grid.m = m;
  grid.component_count = m * m * m;
  grid.sigma = 1.0 / m;
  grid.weight = 1.0 / grid.component_count;
  grid.centers.reserve(static_cast<std::size_t>(grid.component_count));
  // Per-axis coordinates are the midpoints of m equal subdivisions of [-1, 1].
  auto coord = [m](int i) { return -1.0 + (2.0 * i + 1.0) / m; };
  for (int ix = 0; ix < m; ++ix)
    for (int iy = 0; iy < m; ++iy)
      for (int iz = 0; iz < m; ++iz)
        grid.centers.emplace_back(coord(ix), coord(iy), coord(iz));
  return grid;
}

Assignment soft_assign(const GaussianGrid& grid, const std::vector<Vec3>& points) {
  if (grid.m < 1) throw DataError("soft_assign: invalid grid");
  if (points.empty()) throw DataError("soft_assign: empty point set");

  const int k_count = grid.component_count;
  const int t_count = static_cast<int>(points.size());
  const double sigma_sq = grid.sigma * grid.sigma;
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma_sq);
  // log(w_k u_k(p)) = log_norm - |p - mu_k|^2 / (2 sigma^2), shared across k.
  const double log_norm =
      std::log(grid.weight) - 1.5 * std::log(2.0 * std::numbers::pi * sigma_sq);

  Assignment out;
  out.gamma.resize(t_count, k_count);
  out.point_likelihood.resize(t_count);

  std::vector<double> log_terms(static_cast<std::size_t>(k_count));
  for (int t = 0; t < t_count; ++t) {
    const Vec3& p = points[static_cast<std::size_t>(t)];
    if (!p.allFinite()) throw NumericError("soft_assign: non-finite point coordinate");
    double max_log = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < k_count; ++k) {
      const double d2 = (p - grid.centers[static_cast<std::size_t>(k)]).squaredNorm();
      const double l = log_norm - d2 * inv_two_sigma_sq;
      log_terms[static_cast<std::size_t>(k)] = l;
      if (l > max_log) max_log = l;
    }
    double sum = 0.0;
    for (int k = 0; k < k_count; ++k) {
      const double e = std::exp(log_terms[static_cast<std::size_t>(k)] - max_log);
      out.gamma(t, k) = e;
      sum += e;
    }
    out.gamma.row(t) /= sum;
    out.point_likelihood(t) = std::exp(max_log + std::log(sum));
  }
  return out;
}

}  // namespace nesti
