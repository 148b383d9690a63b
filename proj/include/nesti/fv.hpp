#pragma once

#include "nesti/cloud.hpp"
#include "nesti/common.hpp"
#include "nesti/gmm.hpp"
#include "nesti/rng.hpp"

#include <string>
#include <vector>

namespace nesti {

// Per-Gaussian channel layout of a 3DmFV tensor. Channels 0-6 are the
// point-averaged gradient sums (weight, center xyz, sigma xyz), 7-13 the
// per-channel maxima in the same order, 14-19 the minima of the center and
// sigma channels. The weight channel has no minimum.
enum DmfvChannel : int {
  kSumAlpha = 0,
  kSumMuX = 1,
  kSumMuY = 2,
  kSumMuZ = 3,
  kSumSigX = 4,
  kSumSigY = 5,
  kSumSigZ = 6,
  kMaxAlpha = 7,
  kMaxMuX = 8,
  kMaxMuY = 9,
  kMaxMuZ = 10,
  kMaxSigX = 11,
  kMaxSigY = 12,
  kMaxSigZ = 13,
  kMinMuX = 14,
  kMinMuY = 15,
  kMinMuZ = 16,
  kMinSigX = 17,
  kMinSigY = 18,
  kMinSigZ = 19,
};

inline constexpr int kDmfvChannels = 20;

// 3DmFV tensor of one patch: 20 channels x m^3 Gaussians, stored
// channel-major (data[c * K + k]) so it views directly as a 20 x m x m x m
// voxel tensor with the grid's k = (ix * m + iy) * m + iz convention.
struct Dmfv {
  int m = 0;
  std::vector<double> data;

  Dmfv() = default;
  explicit Dmfv(int m_res)
      : m(m_res), data(static_cast<std::size_t>(kDmfvChannels) * m_res * m_res * m_res, 0.0) {}

  int component_count() const { return m * m * m; }
  double& at(int channel, int k) {
    return data[static_cast<std::size_t>(channel) * component_count() + k];
  }
  double at(int channel, int k) const {
    return data[static_cast<std::size_t>(channel) * component_count() + k];
  }
};

// Raw per-point, per-Gaussian normalized gradient contributions before any
// aggregation: 7 values in [alpha, mu xyz, sigma xyz] order.
struct PerPointTerms {
  int t_count = 0;
  int k_count = 0;
  std::vector<double> data;  // (t * K + k) * 7 + c

  double at(int t, int k, int c) const {
    return data[(static_cast<std::size_t>(t) * k_count + k) * 7 + c];
  }
};

PerPointTerms per_point_terms(const GaussianGrid& grid, const std::vector<Vec3>& points);

// Aggregates the per-point terms into a 3DmFV tensor. Sum channels are
// divided by the point count; extrema are left as-is unless
// normalize_extrema is set (extrema are already sample-size independent).
Dmfv compute_3dmfv(const GaussianGrid& grid, const std::vector<Vec3>& points,
                   bool normalize_extrema = false);

// Multi-scale encoding of one query point: one 3DmFV per scale, ordered by
// ascending radius.
struct MupsFeature {
  std::vector<Dmfv> scales;
  std::vector<ScaleSpec> scale_specs;  // empty after loading from a dump file

  int scale_count() const { return static_cast<int>(scales.size()); }
  int m() const { return scales.empty() ? 0 : scales[0].m; }

  // Scale-major concatenation [(s * 20 + c) * K + k]; this is the network
  // input layout with n * 20 voxel channels.
  std::vector<double> flat() const;
};

// Extracts one patch per scale around `query` and encodes each. Scales must
// be strictly ascending in radius. A degenerate ball is reported with the
// offending scale index.
MupsFeature compute_mups(const SpatialIndex& index, const GaussianGrid& grid, int query,
                         const std::vector<ScaleSpec>& scales, Rng& rng,
                         bool normalize_extrema = false);

// Binary feature dump: "MUPS" magic, u32 version, u32 n, u32 m, u64 count,
// then count records of n * 20 * m^3 little-endian 32-bit floats.
void save_mups(const std::string& path, const std::vector<MupsFeature>& features);
std::vector<MupsFeature> load_mups(const std::string& path);

// Long-format debug export: record,scale,channel,ix,iy,iz,value.
void export_mups_csv(const std::string& path, const std::vector<MupsFeature>& features);

}  // namespace nesti
