#include "nesti/eval.hpp"

#include "nesti/geom.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace nesti;

TEST_SUITE("eval") {

TEST_CASE("unoriented angle basics") {
  CHECK(angle_error_unoriented(Vec3(0, 0, 1), Vec3(0, 0, -1)) == doctest::Approx(0.0));
  CHECK(angle_error_unoriented(Vec3(1, 0, 0), Vec3(0, 1, 0)) == doctest::Approx(90.0));
  CHECK(angle_error_unoriented(Vec3(1, 1, 0).normalized(), Vec3(1, 0, 0)) ==
        doctest::Approx(45.0));
  CHECK_THROWS_AS(angle_error_unoriented(Vec3::Zero(), Vec3(1, 0, 0)), NumericError);
}

TEST_CASE("angle metric symmetries hold exactly") {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const Vec3 a(rng.normal(), rng.normal(), rng.normal());
    const Vec3 b(rng.normal(), rng.normal(), rng.normal());
    if (a.norm() < 1e-6 || b.norm() < 1e-6) continue;
    const double base = angle_error_unoriented(a, b);
    CHECK(angle_error_unoriented(-a, b) == base);
    CHECK(angle_error_unoriented(b, a) == base);
    CHECK(base >= 0.0);
    CHECK(base <= 90.0);
  }
}

TEST_CASE("rms of a two-element list") {
  CHECK(rms_error({30.0, 40.0}) == doctest::Approx(35.35533905932738));
  CHECK(rms_error({0.0, 0.0, 0.0}) == doctest::Approx(0.0));
  CHECK(rms_error({12.5, 12.5, 12.5}) == doctest::Approx(12.5));
  CHECK_THROWS_AS(rms_error({}), DataError);
}

TEST_CASE("pgp boundary is strict") {
  CHECK(pgp({0.0, 0.0}, 10.0) == doctest::Approx(1.0));
  CHECK(pgp({5.0, 15.0}, 10.0) == doctest::Approx(0.5));
  CHECK(pgp({10.0}, 10.0) == doctest::Approx(0.0));
  CHECK_THROWS_AS(pgp({}, 10.0), DataError);
  CHECK_THROWS_AS(pgp({1.0}, 0.0), DataError);
}

TEST_CASE("pgp is monotone in alpha") {
  Rng rng(5);
  std::vector<double> errors;
  for (int i = 0; i < 200; ++i) errors.push_back(rng.uniform(0, 90));
  double last = 0.0;
  for (double alpha : {1.0, 5.0, 10.0, 30.0, 60.0, 90.0}) {
    const double value = pgp(errors, alpha);
    CHECK(value >= last);
    last = value;
  }
}

TEST_CASE("benchmark on a noiseless plane") {
  ShapeSpec spec;
  spec.kind = ShapeSpec::Kind::plane;
  spec.count = 2000;
  spec.extents = {1.0};
  spec.seed = 6;
  BenchDataset dataset{"plane", generate(spec), {}};

  BenchMethod pca{"pca:18", [](const SpatialIndex& index, int query) {
                    PointEstimate out;
                    out.normal = pca_normal(index, query, 18).normal;
                    return out;
                  }};
  BenchOptions options;
  options.workers = 2;
  const EvalReport report =
      run_benchmark({pca}, {dataset}, {{"none", std::nullopt}}, options);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].rms_deg <= 1e-6);
  CHECK(report.rows[0].pgp10 == doctest::Approx(1.0));
  CHECK(report.rows[0].n_points == 2000);
  CHECK(report.rows[0].n_failures == 0);
}

TEST_CASE("failures are counted and excluded") {
  ShapeSpec spec;
  spec.kind = ShapeSpec::Kind::plane;
  spec.count = 100;
  spec.extents = {1.0};
  BenchDataset dataset{"plane", generate(spec), {}};
  int calls = 0;
  BenchMethod flaky{"flaky", [&calls](const SpatialIndex& index, int query) {
                      (void)index;
                      ++calls;
                      if (query % 2 == 0) throw NumericError("synthetic failure");
                      PointEstimate out;
                      out.normal = Vec3(0, 0, 1);
                      return out;
                    }};
  BenchOptions options;
  options.workers = 1;
  const EvalReport report =
      run_benchmark({flaky}, {dataset}, {{"none", std::nullopt}}, options);
  CHECK(report.rows[0].n_failures == 50);
  CHECK(report.rows[0].n_points == 50);
  CHECK(report.rows[0].rms_deg == doctest::Approx(0.0));
}

TEST_CASE("density augmentation drops vanished queries") {
  ShapeSpec spec;
  spec.kind = ShapeSpec::Kind::plane;
  spec.count = 5000;
  spec.extents = {1.0};
  spec.seed = 8;
  BenchDataset dataset{"plane", generate(spec), {}};
  BenchAugmentation stripes;
  stripes.label = "stripes";
  CorruptionSpec corruption;
  corruption.kind = CorruptionSpec::Kind::density_stripes;
  corruption.axis = 0;
  corruption.period_fraction = 0.2;
  corruption.duty = 0.5;
  stripes.corruption = corruption;

  BenchMethod pca{"pca:18", [](const SpatialIndex& index, int query) {
                    PointEstimate out;
                    out.normal = pca_normal(index, query, 18).normal;
                    return out;
                  }};
  BenchOptions options;
  options.workers = 2;
  const EvalReport report = run_benchmark({pca}, {dataset}, {stripes}, options);
  CHECK(report.rows[0].n_points < 5000);
  CHECK(report.rows[0].n_points > 1000);
  CHECK(report.rows[0].rms_deg <= 1e-6);  // plane stays a plane under subsampling
}

TEST_CASE("report files carry the fixed column order") {
  EvalReport report;
  EvalRow row;
  row.method = "pca:18";
  row.augmentation = "none";
  row.rms_deg = 1.25;
  row.pgp5 = 0.5;
  row.pgp10 = 0.75;
  row.n_points = 10;
  report.rows.push_back(row);

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "nesti_eval_test";
  fs::create_directories(dir);
  write_report_csv((dir / "report.csv").string(), report);
  write_report_json((dir / "report.json").string(), report, "{}");

  std::ifstream is(dir / "report.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header ==
        "method,augmentation,rms_deg,pgp5,pgp10,n_points,n_failures,"
        "ms_per_point_features,ms_per_point_estimate");
  std::string line;
  std::getline(is, line);
  CHECK(line.find("pca:18,none,1.25,0.5,0.75,10,0") == 0);
  fs::remove_all(dir);
}

TEST_CASE("linear fit r2 on an exact line") {
  std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> y = {2.5, 4.5, 6.5, 8.5, 10.5};
  CHECK(linear_fit_r2(x, y) == doctest::Approx(1.0));
  std::vector<double> noisy = {2.5, 4.0, 7.5, 8.0, 10.9};
  CHECK(linear_fit_r2(x, noisy) < 1.0);
  CHECK(linear_fit_r2(x, noisy) > 0.9);
}

TEST_CASE("encoding cost per point is about cloud-size independent") {
  auto make_ball = [](int n, std::uint64_t seed) {
    Rng rng(seed);
    PointCloud cloud;
    for (int i = 0; i < n; ++i) {
      Vec3 p(rng.normal(), rng.normal(), rng.normal());
      p.normalize();
      cloud.points.push_back(p * std::cbrt(rng.uniform()));
    }
    cloud.recompute_bounds();
    return cloud;
  };
  const PointCloud small_cloud = make_ball(10000, 1);
  const PointCloud big_cloud = make_ball(100000, 2);
  std::vector<int> queries;
  for (int i = 0; i < 60; ++i) queries.push_back(i * 31);

  // radius saturates t_max on both clouds, so the capped encoding dominates
  const auto rows_small = mups_timing_sweep(small_cloud, queries, {8}, {128}, 0.12, 3);
  const auto rows_big = mups_timing_sweep(big_cloud, queries, {8}, {128}, 0.12, 3);
  const double ratio = rows_big[0].ms_per_point / rows_small[0].ms_per_point;
  CHECK(ratio < 2.0);
  CHECK(ratio > 0.5);
}

}  // TEST_SUITE
