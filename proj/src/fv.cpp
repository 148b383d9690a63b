#include "nesti/fv.hpp"

#include "nesti/binio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace nesti {

namespace {

// The seven normalized gradient contributions of one point against one
// Gaussian: d(log-likelihood) w.r.t. the mixture weight (via its logit), the
// center, and the standard deviation, each scaled by the closed-form inverse
// Fisher information of the uniform mixture.
inline void gradient_terms(double gamma, const Vec3& p, const Vec3& mu, double sigma,
                           double weight, double inv_sqrt_w, double inv_sqrt_2w,
                           double* out) {
  out[0] = (gamma - weight) * inv_sqrt_w;
  const double dx = (p.x() - mu.x()) / sigma;
  const double dy = (p.y() - mu.y()) / sigma;
  const double dz = (p.z() - mu.z()) / sigma;
  out[1] = gamma * dx * inv_sqrt_w;
  out[2] = gamma * dy * inv_sqrt_w;
  out[3] = gamma * dz * inv_sqrt_w;
  out[4] = gamma * (dx * dx - 1.0) * inv_sqrt_2w;
  out[5] = gamma * (dy * dy - 1.0) * inv_sqrt_2w;
  out[6] = gamma * (dz * dz - 1.0) * inv_sqrt_2w;
}

}  // namespace

PerPointTerms per_point_terms(const GaussianGrid& grid, const std::vector<Vec3>& points) {
  const Assignment assignment = soft_assign(grid, points);
  PerPointTerms terms;
  terms.t_count = static_cast<int>(points.size());
  terms.k_count = grid.component_count;
  terms.data.resize(static_cast<std::size_t>(terms.t_count) * terms.k_count * 7);
  const double inv_sqrt_w = 1.0 / std::sqrt(grid.weight);
  const double inv_sqrt_2w = 1.0 / std::sqrt(2.0 * grid.weight);
  std::size_t pos = 0;
  for (int t = 0; t < terms.t_count; ++t) {
    const Vec3& p = points[static_cast<std::size_t>(t)];
    for (int k = 0; k < terms.k_count; ++k, pos += 7) {
      gradient_terms(assignment.gamma(t, k), p, grid.centers[static_cast<std::size_t>(k)],
                     grid.sigma, grid.weight, inv_sqrt_w, inv_sqrt_2w, &terms.data[pos]);
    }
  }
  return terms;
}

Dmfv compute_3dmfv(const GaussianGrid& grid, const std::vector<Vec3>& points,
                   bool normalize_extrema) {
  const Assignment assignment = soft_assign(grid, points);
  const int t_count = static_cast<int>(points.size());
  const int k_count = grid.component_count;
  const double inv_sqrt_w = 1.0 / std::sqrt(grid.weight);
  const double inv_sqrt_2w = 1.0 / std::sqrt(2.0 * grid.weight);

  Dmfv out(grid.m);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (int c = kMaxAlpha; c <= kMaxSigZ; ++c)
    for (int k = 0; k < k_count; ++k) out.at(c, k) = -kInf;
  for (int c = kMinMuX; c <= kMinSigZ; ++c)
    for (int k = 0; k < k_count; ++k) out.at(c, k) = kInf;

  double terms[7];
  for (int t = 0; t < t_count; ++t) {
    const Vec3& p = points[static_cast<std::size_t>(t)];
    for (int k = 0; k < k_count; ++k) {
      gradient_terms(assignment.gamma(t, k), p, grid.centers[static_cast<std::size_t>(k)],
                     grid.sigma, grid.weight, inv_sqrt_w, inv_sqrt_2w, terms);
      for (int c = 0; c < 7; ++c) {
        out.at(kSumAlpha + c, k) += terms[c];
        double& mx = out.at(kMaxAlpha + c, k);
        if (terms[c] > mx) mx = terms[c];
      }
      for (int c = 1; c < 7; ++c) {
        double& mn = out.at(kMinMuX + c - 1, k);
        if (terms[c] < mn) mn = terms[c];
      }
    }
  }

  const double inv_t = 1.0 / t_count;
  for (int c = kSumAlpha; c <= kSumSigZ; ++c)
    for (int k = 0; k < k_count; ++k) out.at(c, k) *= inv_t;
  if (normalize_extrema) {
    for (int c = kMaxAlpha; c <= kMinSigZ; ++c)
      for (int k = 0; k < k_count; ++k) out.at(c, k) *= inv_t;
  }
  return out;
}

std::vector<double> MupsFeature::flat() const {
  std::vector<double> out;
  out.reserve(scales.size() * (scales.empty() ? 0 : scales[0].data.size()));
  for (const Dmfv& d : scales) out.insert(out.end(), d.data.begin(), d.data.end());
  return out;
}

MupsFeature compute_mups(const SpatialIndex& index, const GaussianGrid& grid, int query,
                         const std::vector<ScaleSpec>& scales, Rng& rng,
                         bool normalize_extrema) {
  if (scales.empty()) throw DataError("compute_mups: at least one scale required");
  for (std::size_t i = 1; i < scales.size(); ++i)
    if (!(scales[i].radius_fraction > scales[i - 1].radius_fraction))
      throw DataError("compute_mups: scales must be strictly ascending by radius");

  MupsFeature feature;
  feature.scale_specs = scales;
  feature.scales.reserve(scales.size());
  for (std::size_t i = 0; i < scales.size(); ++i) {
    try {
      const Patch patch = extract_patch(index, query, scales[i], rng);
      feature.scales.push_back(compute_3dmfv(grid, patch.points, normalize_extrema));
    } catch (const DegeneratePatchError& err) {
      throw DegeneratePatchError(err.raw_count, static_cast<int>(i));
    }
  }
  return feature;
}

namespace {

constexpr char kMupsMagic[4] = {'M', 'U', 'P', 'S'};
constexpr std::uint32_t kMupsVersion = 1;

}  // namespace

void save_mups(const std::string& path, const std::vector<MupsFeature>& features) {
  if (features.empty()) throw DataError("save_mups: no features to write");
  const int n = features[0].scale_count();
  const int m = features[0].m();
  for (const MupsFeature& f : features)
    if (f.scale_count() != n || f.m() != m)
      throw DataError("save_mups: features disagree on scale count or grid resolution");

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("save_mups: cannot open " + path);
  write_magic(os, kMupsMagic);
  write_u32(os, kMupsVersion);
  write_u32(os, static_cast<std::uint32_t>(n));
  write_u32(os, static_cast<std::uint32_t>(m));
  write_u64(os, static_cast<std::uint64_t>(features.size()));
  for (const MupsFeature& f : features)
    for (const Dmfv& d : f.scales)
      for (double v : d.data) write_f32(os, static_cast<float>(v));
  if (!os) throw DataError("save_mups: write failed for " + path);
}

std::vector<MupsFeature> load_mups(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_mups: cannot open " + path);
  expect_magic(is, kMupsMagic, "feature dump");
  const std::uint32_t version = read_u32(is);
  if (version != kMupsVersion)
    throw DataError("load_mups: unsupported version " + std::to_string(version));
  const int n = static_cast<int>(read_u32(is));
  const int m = static_cast<int>(read_u32(is));
  const std::uint64_t count = read_u64(is);
  if (n < 1 || m < 1) throw DataError("load_mups: corrupt header");

  std::vector<MupsFeature> features;
  features.reserve(count);
  const std::size_t per_scale = static_cast<std::size_t>(kDmfvChannels) * m * m * m;
  for (std::uint64_t r = 0; r < count; ++r) {
    MupsFeature f;
    f.scales.reserve(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
      Dmfv d(m);
      for (std::size_t i = 0; i < per_scale; ++i) d.data[i] = read_f32(is);
      f.scales.push_back(std::move(d));
    }
    features.push_back(std::move(f));
  }
  return features;
}

void export_mups_csv(const std::string& path, const std::vector<MupsFeature>& features) {
  std::ofstream os(path);
  if (!os) throw DataError("export_mups_csv: cannot open " + path);
  os << "record,scale,channel,ix,iy,iz,value\n";
  for (std::size_t r = 0; r < features.size(); ++r) {
    const MupsFeature& f = features[r];
    for (int s = 0; s < f.scale_count(); ++s) {
      const Dmfv& d = f.scales[static_cast<std::size_t>(s)];
      const int m = d.m;
      for (int c = 0; c < kDmfvChannels; ++c)
        for (int ix = 0; ix < m; ++ix)
          for (int iy = 0; iy < m; ++iy)
            for (int iz = 0; iz < m; ++iz)
              os << r << ',' << s << ',' << c << ',' << ix << ',' << iy << ',' << iz
                 << ',' << d.at(c, (ix * m + iy) * m + iz) << '\n';
    }
  }
}

}  // namespace nesti
