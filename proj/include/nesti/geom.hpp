#pragma once

#include "nesti/cloud.hpp"
#include "nesti/common.hpp"

namespace nesti {

// Classic neighborhood presets: 18 / 112 / 450 nearest neighbors.
inline constexpr int kSmallNeighborhood = 18;
inline constexpr int kMediumNeighborhood = 112;
inline constexpr int kLargeNeighborhood = 450;

struct NormalEstimate {
  Vec3 normal = Vec3::UnitZ();
  bool ambiguous = false;  // PCA smallest eigenspace was not unique
  bool fallback = false;   // jet fit was ill-conditioned, PCA result returned
};

// Tangent-plane normal: the smallest-eigenvalue eigenvector of the k-NN
// covariance. Unoriented output with a deterministic sign (positive z, then
// y, then x component).
NormalEstimate pca_normal(const SpatialIndex& index, int query, int k);

// Order-2 height-function fit h(x, y) over the PCA tangent frame; the normal
// is the fitted surface gradient at the query. Requires k >= 6.
NormalEstimate jet_normal(const SpatialIndex& index, int query, int k);

struct BaselineConfig {
  enum class Method { pca, jet };
  Method method = Method::pca;
  int k_neighbors = kSmallNeighborhood;

  void validate() const;
};

NormalEstimate estimate_baseline(const SpatialIndex& index, int query,
                                 const BaselineConfig& config);

}  // namespace nesti
