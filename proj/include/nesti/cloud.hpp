#pragma once

#include "nesti/common.hpp"
#include "nesti/rng.hpp"

#include <vector>

namespace nesti {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty, or unit vectors aligned with points
  Vec3 bbox_min = Vec3::Zero();
  Vec3 bbox_max = Vec3::Zero();
  double diag = 0.0;  // bounding-box diagonal length

  std::size_t size() const { return points.size(); }
  bool has_normals() const { return !normals.empty(); }

  // Recomputes bbox_min/bbox_max/diag from the current points.
  void recompute_bounds();
};

// Neighborhood radius as a fraction of the bounding-box diagonal, plus the
// cap on how many neighbors a patch may keep.
struct ScaleSpec {
  double radius_fraction = 0.05;
  int t_max = 512;

  void validate() const;
};

// A query neighborhood mapped into the unit ball: translated by -p_query and
// scaled by 1/r, so the query point sits at the origin. The query point is a
// member of its own patch.
struct Patch {
  int query_index = -1;
  std::vector<Vec3> points;
  int raw_count = 0;  // ball population before the t_max cap
};

// Balanced kd-tree over a cloud's points. Immutable after construction;
// concurrent read-only queries are safe.
class SpatialIndex {
 public:
  explicit SpatialIndex(const PointCloud& cloud);

  const PointCloud& cloud() const { return *cloud_; }

  // Every index t with |p_t - q| <= r, in ascending index order.
  std::vector<int> radius_query(const Vec3& query, double radius) const;

  // The k nearest points ordered by (distance, index). k must not exceed the
  // cloud size.
  std::vector<int> knn(const Vec3& query, int k) const;

 private:
  void build(int lo, int hi, int depth);
  void radius_recurse(int lo, int hi, int depth, const Vec3& query, double radius,
                      double radius_sq, std::vector<int>& out) const;

  const PointCloud* cloud_;
  std::vector<int> order_;  // implicit balanced tree: node = midpoint of [lo, hi)
};

SpatialIndex build_index(const PointCloud& cloud);

// Gathers the in-ball neighborhood of `query` at the given scale, subsamples
// to t_max with `rng` when needed, and normalizes into the unit ball.
// Subsampling depends only on the candidate point multiset and the rng state,
// not on cloud ordering: candidates are canonically ordered by coordinates
// before the seeded draw.
Patch extract_patch(const SpatialIndex& index, int query, const ScaleSpec& scale,
                    Rng& rng);

}  // namespace nesti
