#include "nesti/geom.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace nesti {

namespace {

Vec3 fix_sign(Vec3 n) {
  if (n.z() < 0.0) return -n;
  if (n.z() == 0.0) {
    if (n.y() < 0.0) return -n;
    if (n.y() == 0.0 && n.x() < 0.0) return -n;
  }
  return n;
}

constexpr double kEigenGap = 1e-12;
constexpr double kMaxCondition = 1e12;

}  // namespace

void BaselineConfig::validate() const {
  const int min_k = method == Method::jet ? 6 : 3;
  if (k_neighbors < min_k)
    throw DataError("baseline k_neighbors below minimum for method");
}

NormalEstimate pca_normal(const SpatialIndex& index, int query, int k) {
  if (k < 3) throw DataError("pca_normal: k must be >= 3");
  const PointCloud& cloud = index.cloud();
  if (query < 0 || static_cast<std::size_t>(query) >= cloud.size())
    throw DataError("pca_normal: query index out of range");
  if (static_cast<std::size_t>(k) > cloud.size())
    throw DataError("pca_normal: cloud smaller than k");

  const std::vector<int> neighbors = index.knn(cloud.points[static_cast<std::size_t>(query)], k);
  Vec3 centroid = Vec3::Zero();
  for (int idx : neighbors) centroid += cloud.points[static_cast<std::size_t>(idx)];
  centroid /= static_cast<double>(neighbors.size());

  Mat3 cov = Mat3::Zero();
  for (int idx : neighbors) {
    const Vec3 d = cloud.points[static_cast<std::size_t>(idx)] - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(neighbors.size());

  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  NormalEstimate est;
  est.normal = fix_sign(solver.eigenvectors().col(0).normalized());
  est.ambiguous = solver.eigenvalues()(1) - solver.eigenvalues()(0) <= kEigenGap;
  return est;
}

NormalEstimate jet_normal(const SpatialIndex& index, int query, int k) {
  if (k < 6) throw DataError("jet_normal: k must be >= 6");
  const NormalEstimate base = pca_normal(index, query, k);

  // Orthonormal tangent frame (u, v, w) with w along the PCA normal.
  const Vec3 w = base.normal;
  const Vec3 seed = std::abs(w.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 u = seed.cross(w).normalized();
  const Vec3 v = w.cross(u);

  const PointCloud& cloud = index.cloud();
  const Vec3 origin = cloud.points[static_cast<std::size_t>(query)];
  const std::vector<int> neighbors = index.knn(origin, k);

  Eigen::MatrixXd design(static_cast<Eigen::Index>(neighbors.size()), 6);
  Eigen::VectorXd height(static_cast<Eigen::Index>(neighbors.size()));
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    const Vec3 d = cloud.points[static_cast<std::size_t>(neighbors[i])] - origin;
    const double x = d.dot(u);
    const double y = d.dot(v);
    const Eigen::Index row = static_cast<Eigen::Index>(i);
    design(row, 0) = 1.0;
    design(row, 1) = x;
    design(row, 2) = y;
    design(row, 3) = x * x;
    design(row, 4) = x * y;
    design(row, 5) = y * y;
    height(row) = d.dot(w);
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smallest = svd.singularValues()(svd.singularValues().size() - 1);
  const double condition = smallest > 0.0
                               ? svd.singularValues()(0) / smallest
                               : std::numeric_limits<double>::infinity();
  if (condition > kMaxCondition) {
    NormalEstimate est = base;
    est.fallback = true;
    return est;
  }

  const Eigen::VectorXd beta = svd.solve(height);
  const Vec3 in_frame(-beta(1), -beta(2), 1.0);
  NormalEstimate est;
  est.normal = fix_sign((in_frame.x() * u + in_frame.y() * v + in_frame.z() * w).normalized());
  est.ambiguous = base.ambiguous;
  return est;
}

NormalEstimate estimate_baseline(const SpatialIndex& index, int query,
                                 const BaselineConfig& config) {
  config.validate();
  return config.method == BaselineConfig::Method::pca
             ? pca_normal(index, query, config.k_neighbors)
             : jet_normal(index, query, config.k_neighbors);
}

}  // namespace nesti
