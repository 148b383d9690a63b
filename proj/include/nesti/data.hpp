#pragma once

#include "nesti/cloud.hpp"
#include "nesti/common.hpp"
#include "nesti/rng.hpp"

#include <string>
#include <vector>

namespace nesti {

// Synthetic surface sampler with analytic ground-truth normals. Shapes are
// generated in a canonical pose; use transform_cloud for arbitrary poses.
struct ShapeSpec {
  enum class Kind { plane, sphere, cylinder, box, wedge };
  Kind kind = Kind::plane;
  int count = 1000;
  // plane: {half_side}; sphere: {radius}; cylinder: {radius, height};
  // box: {hx, hy, hz}; wedge: {face_extent}.
  std::vector<double> extents = {1.0};
  double wedge_angle_deg = 90.0;  // dihedral angle between the two faces
  std::uint64_t seed = 0;

  void validate() const;
};

PointCloud generate(const ShapeSpec& spec);

// Distance from a canonical-pose wedge point to the crease line (the y axis).
double wedge_crease_distance(const Vec3& p);

struct CorruptionSpec {
  enum class Kind { gaussian_noise, density_gradient, density_stripes };
  Kind kind = Kind::gaussian_noise;
  double sigma_fraction = 0.0;   // gaussian_noise: stddev as fraction of bbox diag
  int axis = 2;                  // density corruptions: 0=x, 1=y, 2=z
  double min_keep = 0.3;         // density_gradient: keep probability at the far end
  double period_fraction = 0.1;  // density_stripes: period as fraction of bbox diag
  double duty = 0.5;             // density_stripes: kept fraction of each period
  std::uint64_t seed = 0;

  void validate() const;
};

// Applies one corruption. Noise perturbs positions only; ground-truth normals
// stay those of the clean surface. Density corruptions return a coordinate-
// identical subset; kept_indices (when non-null) receives the surviving
// original indices in order.
PointCloud corrupt(const PointCloud& cloud, const CorruptionSpec& spec,
                   std::vector<int>* kept_indices = nullptr);

// PCPNet-format ingestion: <name>.xyz (3 ASCII floats per line),
// <name>.normals (aligned, unit-normalized on load), <name>.pidx (optional
// query subset, one index per line).
struct LoadedShape {
  PointCloud cloud;
  std::vector<int> queries;  // empty when no .pidx file exists
};

LoadedShape load_pcpnet(const std::string& directory, const std::string& shape_name);

// Writes <prefix>.xyz, <prefix>.normals when present, <prefix>.pidx when
// queries is non-null.
void save_pcpnet(const std::string& prefix, const PointCloud& cloud,
                 const std::vector<int>* queries = nullptr);

// Rigid (or reflecting) transform applied to points and normals alike.
PointCloud transform_cloud(const PointCloud& cloud, const Mat3& rotation,
                           const Vec3& translation);

// Uniformly distributed rotation matrix.
Mat3 random_rotation(Rng& rng);

}  // namespace nesti
