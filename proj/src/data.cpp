#include "nesti/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <string_view>

namespace nesti {

void ShapeSpec::validate() const {
  if (count < 10) throw DataError("shape count must be >= 10");
  std::size_t needed = 1;
  if (kind == Kind::cylinder) needed = 2;
  if (kind == Kind::box) needed = 3;
  if (extents.size() < needed) throw DataError("shape extents missing for kind");
  for (std::size_t i = 0; i < needed; ++i)
    if (!(extents[i] > 0.0)) throw DataError("shape extents must be positive");
  if (kind == Kind::wedge && !(wedge_angle_deg > 0.0 && wedge_angle_deg < 180.0))
    throw DataError("wedge angle must lie in (0, 180) degrees");
}

namespace {

void finalize(PointCloud& cloud) { cloud.recompute_bounds(); }

void generate_plane(const ShapeSpec& spec, Rng& rng, PointCloud& cloud) {
  const double e = spec.extents[0];
  for (int i = 0; i < spec.count; ++i) {
    cloud.points.emplace_back(rng.uniform(-e, e), rng.uniform(-e, e), 0.0);
    cloud.normals.emplace_back(0.0, 0.0, 1.0);
  }
}

void generate_sphere(const ShapeSpec& spec, Rng& rng, PointCloud& cloud) {
  const double radius = spec.extents[0];
  for (int i = 0; i < spec.count; ++i) {
    Vec3 dir(rng.normal(), rng.normal(), rng.normal());
    while (dir.norm() < 1e-12) dir = Vec3(rng.normal(), rng.normal(), rng.normal());
    dir.normalize();
    cloud.points.push_back(radius * dir);
    cloud.normals.push_back(dir);
  }
}

void generate_cylinder(const ShapeSpec& spec, Rng& rng, PointCloud& cloud) {
  const double radius = spec.extents[0];
  const double height = spec.extents[1];
  const double side_area = 2.0 * std::numbers::pi * radius * height;
  const double cap_area = std::numbers::pi * radius * radius;
  const double total = side_area + 2.0 * cap_area;
  for (int i = 0; i < spec.count; ++i) {
    const double pick = rng.uniform(0.0, total);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    if (pick < side_area) {
      const double z = rng.uniform(-height / 2.0, height / 2.0);
      cloud.points.emplace_back(radius * std::cos(theta), radius * std::sin(theta), z);
      cloud.normals.emplace_back(std::cos(theta), std::sin(theta), 0.0);
    } else {
      const double r = radius * std::sqrt(rng.uniform());
      const double z = pick < side_area + cap_area ? height / 2.0 : -height / 2.0;
      cloud.points.emplace_back(r * std::cos(theta), r * std::sin(theta), z);
      cloud.normals.emplace_back(0.0, 0.0, z > 0.0 ? 1.0 : -1.0);
    }
  }
}

void generate_box(const ShapeSpec& spec, Rng& rng, PointCloud& cloud) {
  const double hx = spec.extents[0], hy = spec.extents[1], hz = spec.extents[2];
  const double areas[3] = {4.0 * hy * hz, 4.0 * hx * hz, 4.0 * hx * hy};
  const double total = 2.0 * (areas[0] + areas[1] + areas[2]);
  const double half[3] = {hx, hy, hz};
  for (int i = 0; i < spec.count; ++i) {
    const double pick = rng.uniform(0.0, total);
    int face = 5;  // faces 0..5 = +x, -x, +y, -y, +z, -z
    double acc = 0.0;
    for (int f = 0; f < 6; ++f) {
      acc += areas[f / 2];
      if (pick < acc) {
        face = f;
        break;
      }
    }
    const int face_axis = face / 2;
    const double face_sign = face % 2 == 0 ? 1.0 : -1.0;
    Vec3 p;
    p[face_axis] = face_sign * half[face_axis];
    const int a = (face_axis + 1) % 3, b = (face_axis + 2) % 3;
    p[a] = rng.uniform(-half[a], half[a]);
    p[b] = rng.uniform(-half[b], half[b]);
    Vec3 n = Vec3::Zero();
    n[face_axis] = face_sign;
    cloud.points.push_back(p);
    cloud.normals.push_back(n);
  }
}

void generate_wedge(const ShapeSpec& spec, Rng& rng, PointCloud& cloud) {
  // Face A lies in z = 0 with x in [0, e]; face B is face A rotated about the
  // crease (the y axis) so the dihedral angle between the faces equals
  // wedge_angle_deg. Both faces span y in [-e, e].
  const double e = spec.extents[0];
  const double phi = (180.0 - spec.wedge_angle_deg) * std::numbers::pi / 180.0;
  const Vec3 dir_b(std::cos(phi), 0.0, std::sin(phi));
  const Vec3 normal_b(std::sin(phi), 0.0, std::cos(phi));
  for (int i = 0; i < spec.count; ++i) {
    const double t = rng.uniform(0.0, e);
    const double y = rng.uniform(-e, e);
    if (rng.uniform() < 0.5) {
      cloud.points.emplace_back(t, y, 0.0);
      cloud.normals.emplace_back(0.0, 0.0, 1.0);
    } else {
      cloud.points.push_back(t * dir_b + Vec3(0.0, y, 0.0));
      cloud.normals.push_back(normal_b);
    }
  }
}

}  // namespace

PointCloud generate(const ShapeSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(spec.count));
  cloud.normals.reserve(static_cast<std::size_t>(spec.count));
  switch (spec.kind) {
    case ShapeSpec::Kind::plane: generate_plane(spec, rng, cloud); break;
    case ShapeSpec::Kind::sphere: generate_sphere(spec, rng, cloud); break;
    case ShapeSpec::Kind::cylinder: generate_cylinder(spec, rng, cloud); break;
    case ShapeSpec::Kind::box: generate_box(spec, rng, cloud); break;
    case ShapeSpec::Kind::wedge: generate_wedge(spec, rng, cloud); break;
  }
  finalize(cloud);
  return cloud;
}

double wedge_crease_distance(const Vec3& p) {
  return std::sqrt(p.x() * p.x() + p.z() * p.z());
}

void CorruptionSpec::validate() const {
  if (axis < 0 || axis > 2) throw DataError("corruption axis must be 0, 1 or 2");
  switch (kind) {
    case Kind::gaussian_noise:
      if (sigma_fraction < 0.0) throw DataError("noise sigma_fraction must be >= 0");
      break;
    case Kind::density_gradient:
      if (!(min_keep > 0.0) || min_keep > 1.0)
        throw DataError("gradient min_keep must lie in (0, 1]");
      break;
    case Kind::density_stripes:
      if (!(period_fraction > 0.0)) throw DataError("stripe period must be positive");
      if (!(duty > 0.0 && duty < 1.0)) throw DataError("stripe duty must lie in (0, 1)");
      break;
  }
}

PointCloud corrupt(const PointCloud& cloud, const CorruptionSpec& spec,
                   std::vector<int>* kept_indices) {
  spec.validate();
  if (kept_indices) kept_indices->clear();
  Rng rng(spec.seed);
  PointCloud out;

  switch (spec.kind) {
    case CorruptionSpec::Kind::gaussian_noise: {
      const double sigma = spec.sigma_fraction * cloud.diag;
      out = cloud;
      for (Vec3& p : out.points)
        p += Vec3(rng.normal() * sigma, rng.normal() * sigma, rng.normal() * sigma);
      if (kept_indices) {
        kept_indices->resize(cloud.size());
        for (std::size_t i = 0; i < cloud.size(); ++i) (*kept_indices)[i] = static_cast<int>(i);
      }
      break;
    }
    case CorruptionSpec::Kind::density_gradient: {
      const double lo = cloud.bbox_min[spec.axis];
      const double span = cloud.bbox_max[spec.axis] - lo;
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double t = span > 0.0 ? (cloud.points[i][spec.axis] - lo) / span : 0.0;
        const double keep_prob = 1.0 - (1.0 - spec.min_keep) * t;
        if (rng.uniform() < keep_prob) {
          out.points.push_back(cloud.points[i]);
          if (cloud.has_normals()) out.normals.push_back(cloud.normals[i]);
          if (kept_indices) kept_indices->push_back(static_cast<int>(i));
        }
      }
      break;
    }
    case CorruptionSpec::Kind::density_stripes: {
      const double lo = cloud.bbox_min[spec.axis];
      const double period = spec.period_fraction * cloud.diag;
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double offset = std::fmod(cloud.points[i][spec.axis] - lo, period);
        if (offset < spec.duty * period) {
          out.points.push_back(cloud.points[i]);
          if (cloud.has_normals()) out.normals.push_back(cloud.normals[i]);
          if (kept_indices) kept_indices->push_back(static_cast<int>(i));
        }
      }
      break;
    }
  }

  if (out.points.empty()) throw DataError("empty result");
  out.recompute_bounds();
  return out;
}

namespace {

double parse_double(std::string_view token, const std::string& file, std::size_t line_no) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size())
    throw DataError(file + ": bad number '" + std::string(token) + "' at line " +
                    std::to_string(line_no));
  return value;
}

std::vector<std::array<double, 3>> read_triplet_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  std::vector<std::array<double, 3>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::size_t pos = 0;
    std::array<double, 3> row{};
    int filled = 0;
    while (pos < line.size() && filled < 3) {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r'))
        ++pos;
      if (pos >= line.size()) break;
      std::size_t end = pos;
      while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r')
        ++end;
      row[static_cast<std::size_t>(filled++)] =
          parse_double(std::string_view(line).substr(pos, end - pos), path, line_no);
      pos = end;
    }
    if (filled == 0) continue;  // blank line
    if (filled != 3)
      throw DataError(path + ": expected 3 values at line " + std::to_string(line_no));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

LoadedShape load_pcpnet(const std::string& directory, const std::string& shape_name) {
  namespace fs = std::filesystem;
  const std::string base = (fs::path(directory) / shape_name).string();
  LoadedShape shape;

  const auto xyz = read_triplet_file(base + ".xyz");
  if (xyz.empty()) throw DataError(base + ".xyz: no points");
  shape.cloud.points.reserve(xyz.size());
  for (const auto& row : xyz) shape.cloud.points.emplace_back(row[0], row[1], row[2]);

  if (fs::exists(base + ".normals")) {
    const auto normals = read_triplet_file(base + ".normals");
    if (normals.size() != xyz.size())
      throw DataError(base + ": .xyz and .normals lengths differ (" +
                      std::to_string(xyz.size()) + " vs " + std::to_string(normals.size()) + ")");
    shape.cloud.normals.reserve(normals.size());
    for (std::size_t i = 0; i < normals.size(); ++i) {
      Vec3 n(normals[i][0], normals[i][1], normals[i][2]);
      const double len = n.norm();
      if (len < 1e-12)
        throw DataError(base + ".normals: zero normal at line " + std::to_string(i + 1));
      shape.cloud.normals.push_back(n / len);
    }
  }
  shape.cloud.recompute_bounds();

  if (fs::exists(base + ".pidx")) {
    std::ifstream is(base + ".pidx");
    if (!is) throw DataError("cannot open " + base + ".pidx");
    long long idx = 0;
    while (is >> idx) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= shape.cloud.size())
        throw DataError(base + ".pidx: index " + std::to_string(idx) + " out of range [0, " +
                        std::to_string(shape.cloud.size()) + ")");
      shape.queries.push_back(static_cast<int>(idx));
    }
  }
  return shape;
}

void save_pcpnet(const std::string& prefix, const PointCloud& cloud,
                 const std::vector<int>* queries) {
  {
    std::ofstream os(prefix + ".xyz");
    if (!os) throw DataError("cannot open " + prefix + ".xyz");
    os.precision(17);
    for (const Vec3& p : cloud.points) os << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  }
  if (cloud.has_normals()) {
    std::ofstream os(prefix + ".normals");
    if (!os) throw DataError("cannot open " + prefix + ".normals");
    os.precision(17);
    for (const Vec3& n : cloud.normals) os << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
  }
  if (queries) {
    std::ofstream os(prefix + ".pidx");
    if (!os) throw DataError("cannot open " + prefix + ".pidx");
    for (int q : *queries) {
      if (q < 0 || static_cast<std::size_t>(q) >= cloud.size())
        throw DataError("save_pcpnet: query index out of range");
      os << q << '\n';
    }
  }
}

PointCloud transform_cloud(const PointCloud& cloud, const Mat3& rotation,
                           const Vec3& translation) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) out.points.push_back(rotation * p + translation);
  if (cloud.has_normals()) {
    out.normals.reserve(cloud.normals.size());
    for (const Vec3& n : cloud.normals) out.normals.push_back((rotation * n).normalized());
  }
  out.recompute_bounds();
  return out;
}

Mat3 random_rotation(Rng& rng) {
  // Random unit quaternion.
  double q[4];
  double norm_sq = 0.0;
  do {
    norm_sq = 0.0;
    for (double& c : q) {
      c = rng.normal();
      norm_sq += c * c;
    }
  } while (norm_sq < 1e-12);
  const double inv = 1.0 / std::sqrt(norm_sq);
  const double w = q[0] * inv, x = q[1] * inv, y = q[2] * inv, z = q[3] * inv;
  Mat3 rot;
  rot << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return rot;
}

}  // namespace nesti
