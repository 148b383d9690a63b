#include "nesti/cli.hpp"

#include "nesti/data.hpp"
#include "nesti/fv.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

using namespace nesti;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "nesti_cli_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth writes a loadable dataset with manifest") {
  TempDir dir;
  const int code = run_cli({"synth", "--shape", "sphere", "--count", "500", "--seed", "4",
                            "--queries", "20", "-o", dir / "sphere"});
  REQUIRE(code == 0);
  const LoadedShape shape = load_pcpnet(dir.path.string(), "sphere");
  CHECK(shape.cloud.size() == 500);
  CHECK(shape.cloud.has_normals());
  CHECK(shape.queries.size() == 20);
  CHECK(fs::exists(dir / "sphere.manifest.json"));
}

TEST_CASE("estimate pca on a plane emits constant normals") {
  TempDir dir;
  REQUIRE(run_cli({"synth", "--shape", "plane", "--count", "2000", "--seed", "1",
                   "--queries", "25", "-o", dir / "plane"}) == 0);
  REQUIRE(run_cli({"estimate", "-i", dir / "plane", "--method", "pca", "--k", "18", "-o",
                   dir / "plane.est.normals"}) == 0);
  std::ifstream is(dir / "plane.est.normals");
  REQUIRE(is.good());
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) {
    CHECK(line == "0 0 1");
    ++rows;
  }
  CHECK(rows == 25);
}

TEST_CASE("features honors requested header fields") {
  TempDir dir;
  REQUIRE(run_cli({"synth", "--shape", "sphere", "--count", "20000", "--seed", "2",
                   "--queries", "30", "-o", dir / "ball"}) == 0);
  REQUIRE(run_cli({"features", "-i", dir / "ball", "--m", "4", "--scales",
                   "0.01,0.03,0.05", "--tmax", "64", "--threads", "2", "-o",
                   dir / "ball.mups"}) == 0);
  const auto features = load_mups(dir / "ball.mups");
  REQUIRE(!features.empty());
  CHECK(features[0].scale_count() == 3);
  CHECK(features[0].m() == 4);
}

TEST_CASE("bench emits the timing table") {
  TempDir dir;
  REQUIRE(run_cli({"bench", "--m", "2,4", "--tmax", "32,64", "--points", "3000",
                   "--queries", "20", "-o", dir / "bench.csv"}) == 0);
  std::ifstream is(dir / "bench.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == "m,k,t_max,k_times_t,ms_per_point");
  int rows = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("eval produces the report pair") {
  TempDir dir;
  REQUIRE(run_cli({"synth", "--shape", "plane", "--count", "3000", "--seed", "3",
                   "--queries", "40", "-o", dir / "plane"}) == 0);
  REQUIRE(run_cli({"eval", "-i", dir / "plane", "--methods", "pca:18,jet:18", "--aug",
                   "none,noise:0.006", "--threads", "2", "-o", dir / "report"}) == 0);
  CHECK(fs::exists(dir / "report.csv"));
  CHECK(fs::exists(dir / "report.json"));
  std::ifstream is(dir / "report.csv");
  std::string line;
  int rows = 0;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 1 + 4);  // header + 2 methods x 2 augmentations
}

TEST_CASE("train on a small corpus saves a usable checkpoint") {
  TempDir dir;
  REQUIRE(run_cli({"train", "--patches", "60", "--epochs", "1", "--seed", "5", "-o",
                   dir / "model", "--loss-log", dir / "loss.csv"}) == 0);
  CHECK(fs::exists(dir / "model.json"));
  CHECK(fs::exists(dir / "model.gate.nstn"));
  CHECK(fs::exists(dir / "model.expert0.nstn"));
  CHECK(fs::exists(dir / "loss.csv"));

  // the checkpoint drives the moe estimator end to end
  REQUIRE(run_cli({"synth", "--shape", "sphere", "--count", "60000", "--seed", "6",
                   "--queries", "10", "-o", dir / "ball"}) == 0);
  CHECK(run_cli({"estimate", "-i", dir / "ball", "--method", "moe", "--model",
                 dir / "model", "-o", dir / "ball.moe.normals"}) == 0);
}

TEST_CASE("exit codes distinguish failure classes") {
  TempDir dir;
  CHECK(run_cli({"estimate", "--bogus-flag"}) == 1);
  CHECK(run_cli({}) == 1);
  CHECK(run_cli({"estimate", "-i", dir / "missing", "--method", "pca", "-o",
                 dir / "out.normals"}) == 2);
  // numeric failure: degenerate patches at the smallest scale on a sparse cloud
  REQUIRE(run_cli({"synth", "--shape", "plane", "--count", "200", "--seed", "9",
                   "--queries", "5", "-o", dir / "sparse"}) == 0);
  CHECK(run_cli({"train", "--preset", "nope", "-o", dir / "x"}) == 2);
}

}  // TEST_SUITE
