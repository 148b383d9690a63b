#pragma once

#include "nesti/cloud.hpp"
#include "nesti/common.hpp"
#include "nesti/data.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nesti {

// Unoriented angle between two directions in degrees, in [0, 90].
// atan2(|a x b|, |a . b|) keeps conditioning at both ends of the range.
double angle_error_unoriented(const Vec3& a, const Vec3& b);

// sqrt(mean(error^2)) over angle errors in degrees.
double rms_error(const std::vector<double>& errors_deg);

// Fraction of errors strictly below alpha degrees.
double pgp(const std::vector<double>& errors_deg, double alpha_deg);

// One per-point estimation outcome with its phase timings.
struct PointEstimate {
  Vec3 normal = Vec3::UnitZ();
  double feature_ms = 0.0;   // representation/encoding phase
  double estimate_ms = 0.0;  // normal regression phase
};

// Estimators capture their own configuration and seeding policy; they must be
// safe to call concurrently for distinct queries.
using PointEstimator = std::function<PointEstimate(const SpatialIndex&, int query)>;

struct BenchMethod {
  std::string name;
  PointEstimator estimate;
};

struct BenchDataset {
  std::string name;
  PointCloud cloud;          // must carry ground-truth normals
  std::vector<int> queries;  // empty selects every point
};

struct BenchAugmentation {
  std::string label;  // "none" or a corruption description
  std::optional<CorruptionSpec> corruption;
};

struct EvalRow {
  std::string method;
  std::string augmentation;
  double rms_deg = 0.0;
  double pgp5 = 0.0;
  double pgp10 = 0.0;
  long n_points = 0;
  long n_failures = 0;
  double ms_per_point_features = 0.0;
  double ms_per_point_estimate = 0.0;
  std::vector<double> errors_deg;  // per evaluated point, pooled over datasets
};

struct EvalReport {
  std::vector<EvalRow> rows;
  int workers = 1;
  std::uint64_t seed = 0;
};

struct BenchOptions {
  int workers = 0;  // <= 0 selects default_thread_count()
  std::uint64_t seed = 0;
};

// Evaluates every (method, augmentation) cell pooled over datasets. A method
// failure on a point is recorded and excluded from the metrics. Density
// corruptions drop the queries they remove.
EvalReport run_benchmark(const std::vector<BenchMethod>& methods,
                         const std::vector<BenchDataset>& datasets,
                         const std::vector<BenchAugmentation>& augmentations,
                         const BenchOptions& options);

void write_report_csv(const std::string& path, const EvalReport& report);
// JSON manifest: config echo, hash, seeds, rows without per-point errors.
void write_report_json(const std::string& path, const EvalReport& report,
                       const std::string& config_echo);

// Multi-scale encoding timing sweep used by the complexity check and the
// bench subcommand.
struct MupsTimingRow {
  int m = 0;
  int t_max = 0;
  long k_times_t = 0;
  double ms_per_point = 0.0;
};

std::vector<MupsTimingRow> mups_timing_sweep(const PointCloud& cloud,
                                             const std::vector<int>& queries,
                                             const std::vector<int>& grid_sizes,
                                             const std::vector<int>& t_max_values,
                                             double radius_fraction, std::uint64_t seed);

// Least-squares line fit y = a + b x; returns the coefficient of
// determination.
double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace nesti
