#include "nesti/cloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

namespace nesti {

DegeneratePatchError::DegeneratePatchError(int raw_count_in, int scale_index_in)
    : NumericError("degenerate patch: " + std::to_string(raw_count_in) +
                   " point(s) in ball" +
                   (scale_index_in >= 0 ? " at scale " + std::to_string(scale_index_in) : "")),
      raw_count(raw_count_in),
      scale_index(scale_index_in) {}

void PointCloud::recompute_bounds() {
  if (points.empty()) {
    bbox_min = bbox_max = Vec3::Zero();
    diag = 0.0;
    return;
  }
  bbox_min = bbox_max = points[0];
  for (const Vec3& p : points) {
    bbox_min = bbox_min.cwiseMin(p);
    bbox_max = bbox_max.cwiseMax(p);
  }
  diag = (bbox_max - bbox_min).norm();
}

void ScaleSpec::validate() const {
  if (!(radius_fraction > 0.0) || radius_fraction > 1.0)
    throw DataError("scale radius_fraction must lie in (0, 1]");
  if (t_max < 1) throw DataError("scale t_max must be >= 1");
}

SpatialIndex::SpatialIndex(const PointCloud& cloud) : cloud_(&cloud) {
  if (cloud.points.empty()) throw DataError("empty cloud");
  order_.resize(cloud.points.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  build(0, static_cast<int>(order_.size()), 0);
}

void SpatialIndex::build(int lo, int hi, int depth) {
  if (hi - lo <= 1) return;
  const int axis = depth % 3;
  const int mid = lo + (hi - lo) / 2;
  const auto& pts = cloud_->points;
  std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                   [&pts, axis](int a, int b) {
                     const double ca = pts[a][axis], cb = pts[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  build(lo, mid, depth + 1);
  build(mid + 1, hi, depth + 1);
}

std::vector<int> SpatialIndex::radius_query(const Vec3& query, double radius) const {
  std::vector<int> out;
  if (radius < 0.0) return out;
  radius_recurse(0, static_cast<int>(order_.size()), 0, query, radius, radius * radius, out);
  std::sort(out.begin(), out.end());
  return out;
}

void SpatialIndex::radius_recurse(int lo, int hi, int depth, const Vec3& query,
                                  double radius, double radius_sq,
                                  std::vector<int>& out) const {
  if (lo >= hi) return;
  const int axis = depth % 3;
  const int mid = lo + (hi - lo) / 2;
  const int idx = order_[mid];
  const Vec3& p = cloud_->points[idx];
  if ((p - query).squaredNorm() <= radius_sq) out.push_back(idx);
  const double delta = query[axis] - p[axis];
  if (delta - radius <= 0.0) radius_recurse(lo, mid, depth + 1, query, radius, radius_sq, out);
  if (delta + radius >= 0.0) radius_recurse(mid + 1, hi, depth + 1, query, radius, radius_sq, out);
}

namespace {

// Heap entries ordered worst-first by (distance^2, index) so the retained k
// nearest set is unique regardless of traversal order.
struct HeapEntry {
  double dist_sq;
  int index;
  bool operator<(const HeapEntry& other) const {
    if (dist_sq != other.dist_sq) return dist_sq < other.dist_sq;
    return index < other.index;
  }
};

void knn_recurse(const std::vector<Vec3>& pts, const std::vector<int>& order, int lo,
                 int hi, int depth, const Vec3& query, std::size_t k,
                 std::priority_queue<HeapEntry>& heap) {
  if (lo >= hi) return;
  const int axis = depth % 3;
  const int mid = lo + (hi - lo) / 2;
  const int idx = order[mid];
  const double d2 = (pts[idx] - query).squaredNorm();
  HeapEntry candidate{d2, idx};
  if (heap.size() < k) {
    heap.push(candidate);
  } else if (candidate < heap.top()) {
    heap.pop();
    heap.push(candidate);
  }
  const double delta = query[axis] - pts[idx][axis];
  const int near_lo = delta <= 0.0 ? lo : mid + 1;
  const int near_hi = delta <= 0.0 ? mid : hi;
  const int far_lo = delta <= 0.0 ? mid + 1 : lo;
  const int far_hi = delta <= 0.0 ? hi : mid;
  knn_recurse(pts, order, near_lo, near_hi, depth + 1, query, k, heap);
  // A tie on the splitting distance can still swap in a lower index, so only
  // a strictly larger plane distance prunes the far side.
  if (heap.size() < k || delta * delta <= heap.top().dist_sq)
    knn_recurse(pts, order, far_lo, far_hi, depth + 1, query, k, heap);
}

}  // namespace

std::vector<int> SpatialIndex::knn(const Vec3& query, int k) const {
  if (k < 1) throw DataError("knn: k must be >= 1");
  if (static_cast<std::size_t>(k) > order_.size())
    throw DataError("knn: k exceeds cloud size");
  std::priority_queue<HeapEntry> heap;
  knn_recurse(cloud_->points, order_, 0, static_cast<int>(order_.size()), 0, query,
              static_cast<std::size_t>(k), heap);
  std::vector<HeapEntry> entries;
  entries.reserve(heap.size());
  while (!heap.empty()) {
    entries.push_back(heap.top());
    heap.pop();
  }
  std::sort(entries.begin(), entries.end());
  std::vector<int> out(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) out[i] = entries[i].index;
  return out;
}

SpatialIndex build_index(const PointCloud& cloud) { return SpatialIndex(cloud); }

Patch extract_patch(const SpatialIndex& index, int query, const ScaleSpec& scale,
                    Rng& rng) {
  scale.validate();
  const PointCloud& cloud = index.cloud();
  if (query < 0 || static_cast<std::size_t>(query) >= cloud.size())
    throw DataError("extract_patch: query index out of range");
  const double radius = scale.radius_fraction * cloud.diag;
  if (!(radius > 0.0))
    throw NumericError("extract_patch: cloud has no spatial extent");

  std::vector<int> candidates = index.radius_query(cloud.points[query], radius);
  Patch patch;
  patch.query_index = query;
  patch.raw_count = static_cast<int>(candidates.size());
  if (patch.raw_count < 3) throw DegeneratePatchError(patch.raw_count);

  // Canonical coordinate order: the seeded subsample then depends only on the
  // candidate multiset, so permuting cloud storage cannot change a patch.
  const auto& pts = cloud.points;
  std::sort(candidates.begin(), candidates.end(), [&pts](int a, int b) {
    const Vec3 &pa = pts[a], &pb = pts[b];
    if (pa.x() != pb.x()) return pa.x() < pb.x();
    if (pa.y() != pb.y()) return pa.y() < pb.y();
    if (pa.z() != pb.z()) return pa.z() < pb.z();
    return a < b;
  });

  if (patch.raw_count > scale.t_max) {
    const std::vector<int> picks =
        sample_without_replacement(patch.raw_count, scale.t_max, rng);
    std::vector<int> sampled;
    sampled.reserve(picks.size());
    for (int s : picks) sampled.push_back(candidates[static_cast<std::size_t>(s)]);
    candidates.swap(sampled);
  }

  const Vec3 origin = cloud.points[query];
  patch.points.reserve(candidates.size());
  for (int idx : candidates) patch.points.push_back((pts[idx] - origin) / radius);
  return patch;
}

}  // namespace nesti
