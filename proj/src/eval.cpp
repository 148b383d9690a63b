#include "nesti/eval.hpp"

#include "nesti/fv.hpp"
#include "nesti/parallel.hpp"

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>

namespace nesti {

double angle_error_unoriented(const Vec3& a, const Vec3& b) {
  const double na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12)
    throw NumericError("angle_error_unoriented: zero vector");
  const Vec3 ua = a / na, ub = b / nb;
  const double cross = ua.cross(ub).norm();
  const double dot = std::abs(ua.dot(ub));
  return std::atan2(cross, dot) * 180.0 / std::numbers::pi;
}

double rms_error(const std::vector<double>& errors_deg) {
  if (errors_deg.empty()) throw DataError("rms_error: empty error list");
  double sum_sq = 0.0;
  for (double e : errors_deg) sum_sq += e * e;
  return std::sqrt(sum_sq / static_cast<double>(errors_deg.size()));
}

double pgp(const std::vector<double>& errors_deg, double alpha_deg) {
  if (errors_deg.empty()) throw DataError("pgp: empty error list");
  if (!(alpha_deg > 0.0)) throw DataError("pgp: alpha must be positive");
  long good = 0;
  for (double e : errors_deg)
    if (e < alpha_deg) ++good;
  return static_cast<double>(good) / static_cast<double>(errors_deg.size());
}

namespace {

struct PointOutcome {
  bool ok = false;
  double error_deg = 0.0;
  double feature_ms = 0.0;
  double estimate_ms = 0.0;
};

}  // namespace

EvalReport run_benchmark(const std::vector<BenchMethod>& methods,
                         const std::vector<BenchDataset>& datasets,
                         const std::vector<BenchAugmentation>& augmentations,
                         const BenchOptions& options) {
  if (methods.empty()) throw DataError("run_benchmark: no methods");
  if (datasets.empty()) throw DataError("run_benchmark: no datasets");
  if (augmentations.empty()) throw DataError("run_benchmark: no augmentations");
  for (const BenchDataset& ds : datasets)
    if (!ds.cloud.has_normals())
      throw DataError("run_benchmark: dataset '" + ds.name + "' lacks ground-truth normals");

  EvalReport report;
  report.workers = options.workers > 0 ? options.workers : default_thread_count();
  report.seed = options.seed;
  report.rows.reserve(methods.size() * augmentations.size());

  for (const BenchAugmentation& aug : augmentations) {
    // Prepare corrupted clouds and surviving query lists once per cell column.
    struct Prepared {
      PointCloud cloud;
      std::vector<int> queries;        // indices into the prepared cloud
      std::vector<Vec3> ground_truth;  // clean-surface normals per query
    };
    std::vector<Prepared> prepared;
    prepared.reserve(datasets.size());
    for (const BenchDataset& ds : datasets) {
      Prepared prep;
      std::vector<int> base_queries = ds.queries;
      if (base_queries.empty()) {
        base_queries.resize(ds.cloud.size());
        for (std::size_t i = 0; i < ds.cloud.size(); ++i)
          base_queries[i] = static_cast<int>(i);
      }
      for (int q : base_queries)
        if (q < 0 || static_cast<std::size_t>(q) >= ds.cloud.size())
          throw DataError("run_benchmark: query index out of range in '" + ds.name + "'");

      if (aug.corruption) {
        std::vector<int> kept;
        prep.cloud = corrupt(ds.cloud, *aug.corruption, &kept);
        std::vector<int> old_to_new(ds.cloud.size(), -1);
        for (std::size_t i = 0; i < kept.size(); ++i)
          old_to_new[static_cast<std::size_t>(kept[i])] = static_cast<int>(i);
        for (int q : base_queries) {
          const int remapped = old_to_new[static_cast<std::size_t>(q)];
          if (remapped >= 0) {
            prep.queries.push_back(remapped);
            prep.ground_truth.push_back(ds.cloud.normals[static_cast<std::size_t>(q)]);
          }
        }
      } else {
        prep.cloud = ds.cloud;
        prep.queries = base_queries;
        for (int q : base_queries)
          prep.ground_truth.push_back(ds.cloud.normals[static_cast<std::size_t>(q)]);
      }
      prepared.push_back(std::move(prep));
    }

    std::vector<SpatialIndex> indices;
    indices.reserve(prepared.size());
    for (const Prepared& prep : prepared) indices.emplace_back(prep.cloud);

    for (const BenchMethod& method : methods) {
      EvalRow row;
      row.method = method.name;
      row.augmentation = aug.label;
      double feature_ms_total = 0.0, estimate_ms_total = 0.0;

      for (std::size_t d = 0; d < prepared.size(); ++d) {
        const Prepared& prep = prepared[d];
        const SpatialIndex& index = indices[d];
        std::vector<PointOutcome> outcomes(prep.queries.size());
        parallel_for(
            prep.queries.size(),
            [&](std::size_t i) {
              PointOutcome& outcome = outcomes[i];
              try {
                const PointEstimate est = method.estimate(index, prep.queries[i]);
                outcome.error_deg = angle_error_unoriented(est.normal, prep.ground_truth[i]);
                outcome.feature_ms = est.feature_ms;
                outcome.estimate_ms = est.estimate_ms;
                outcome.ok = true;
              } catch (const std::exception&) {
                outcome.ok = false;
              }
            },
            options.workers);
        for (const PointOutcome& outcome : outcomes) {
          if (outcome.ok) {
            row.errors_deg.push_back(outcome.error_deg);
            feature_ms_total += outcome.feature_ms;
            estimate_ms_total += outcome.estimate_ms;
          } else {
            ++row.n_failures;
          }
        }
      }

      row.n_points = static_cast<long>(row.errors_deg.size());
      if (row.n_points > 0) {
        row.rms_deg = rms_error(row.errors_deg);
        row.pgp5 = pgp(row.errors_deg, 5.0);
        row.pgp10 = pgp(row.errors_deg, 10.0);
        row.ms_per_point_features = feature_ms_total / static_cast<double>(row.n_points);
        row.ms_per_point_estimate = estimate_ms_total / static_cast<double>(row.n_points);
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream os(path);
  if (!os) throw DataError("write_report_csv: cannot open " + path);
  os << "method,augmentation,rms_deg,pgp5,pgp10,n_points,n_failures,"
        "ms_per_point_features,ms_per_point_estimate\n";
  os.precision(6);
  for (const EvalRow& row : report.rows) {
    os << row.method << ',' << row.augmentation << ',' << row.rms_deg << ',' << row.pgp5
       << ',' << row.pgp10 << ',' << row.n_points << ',' << row.n_failures << ','
       << row.ms_per_point_features << ',' << row.ms_per_point_estimate << '\n';
  }
}

void write_report_json(const std::string& path, const EvalReport& report,
                       const std::string& config_echo) {
  nlohmann::json doc;
  doc["version"] = kVersion;
  doc["config"] = config_echo;
  doc["config_hash"] = std::to_string(std::hash<std::string>{}(config_echo));
  doc["seed"] = report.seed;
  doc["workers"] = report.workers;
  doc["rows"] = nlohmann::json::array();
  for (const EvalRow& row : report.rows) {
    doc["rows"].push_back({{"method", row.method},
                           {"augmentation", row.augmentation},
                           {"rms_deg", row.rms_deg},
                           {"pgp5", row.pgp5},
                           {"pgp10", row.pgp10},
                           {"n_points", row.n_points},
                           {"n_failures", row.n_failures},
                           {"ms_per_point_features", row.ms_per_point_features},
                           {"ms_per_point_estimate", row.ms_per_point_estimate}});
  }
  std::ofstream os(path);
  if (!os) throw DataError("write_report_json: cannot open " + path);
  os << doc.dump(2) << '\n';
}

std::vector<MupsTimingRow> mups_timing_sweep(const PointCloud& cloud,
                                             const std::vector<int>& queries,
                                             const std::vector<int>& grid_sizes,
                                             const std::vector<int>& t_max_values,
                                             double radius_fraction, std::uint64_t seed) {
  if (queries.empty()) throw DataError("mups_timing_sweep: no queries");
  const SpatialIndex index(cloud);
  std::vector<MupsTimingRow> rows;
  using clock = std::chrono::steady_clock;
  for (int m : grid_sizes) {
    const GaussianGrid grid = build_grid(m);
    for (int t_max : t_max_values) {
      const std::vector<ScaleSpec> scales = {{radius_fraction, t_max}};
      // Warm-up pass so allocation and cache effects do not skew the cell.
      {
        Rng rng(Rng::mix(seed, 0xa11));
        compute_mups(index, grid, queries[0], scales, rng);
      }
      const auto start = clock::now();
      for (std::size_t i = 0; i < queries.size(); ++i) {
        Rng rng(Rng::mix(seed, i));
        compute_mups(index, grid, queries[i], scales, rng);
      }
      const double total_ms =
          std::chrono::duration<double, std::milli>(clock::now() - start).count();
      MupsTimingRow row;
      row.m = m;
      row.t_max = t_max;
      row.k_times_t = static_cast<long>(grid.component_count) * t_max;
      row.ms_per_point = total_ms / static_cast<double>(queries.size());
      rows.push_back(row);
    }
  }
  return rows;
}

double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 3)
    throw DataError("linear_fit_r2: need >= 3 aligned samples");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-30) throw NumericError("linear_fit_r2: degenerate x values");
  const double slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fit = intercept + slope * x[i];
    ss_res += (y[i] - fit) * (y[i] - fit);
    ss_tot += (y[i] - mean_y) * (y[i] - mean_y);
  }
  if (ss_tot < 1e-30) return 1.0;
  return 1.0 - ss_res / ss_tot;
}

}  // namespace nesti
