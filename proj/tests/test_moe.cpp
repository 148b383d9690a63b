#include "nesti/moe.hpp"

#include "nesti/eval.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace nesti;

namespace {

MupsFeature random_feature(const MoeConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  MupsFeature feature;
  for (int s = 0; s < config.n_scales(); ++s) {
    Dmfv d(config.m);
    for (double& v : d.data) v = rng.uniform(-1, 1);
    feature.scales.push_back(std::move(d));
  }
  return feature;
}

// Zeroes every parameter and plants the output in the final dense bias, so
// the network emits a constant regardless of input.
void force_constant_output(Network& net, const std::vector<double>& output) {
  auto params = net.parameters();
  for (Tensor* p : params) std::fill(p->values.begin(), p->values.end(), 0.0);
  Tensor* bias = params.back();
  REQUIRE(bias->size() == output.size());
  for (std::size_t i = 0; i < output.size(); ++i) bias->values[i] = output[i];
}

MoeConfig one_expert_config() {
  MoeConfig config;
  config.scales = {{0.05, 64}};
  config.m = 2;
  config.expert_scales = {{0}};
  config.gate_arch = "tiny";
  config.expert_arch = "tiny";
  config.seed = 3;
  return config;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("moe") {

TEST_CASE("config presets validate and size correctly") {
  CHECK_NOTHROW(MoeConfig::desk().validate());
  CHECK_NOTHROW(MoeConfig::tiny().validate());
  CHECK_NOTHROW(MoeConfig::paper().validate());
  CHECK(MoeConfig::desk().n_experts() == 3);
  CHECK(MoeConfig::paper().n_experts() == 7);
  CHECK(MoeConfig::paper().m == 8);
  // production-scale preset composes without allocating it
  const MoeConfig paper = MoeConfig::paper();
  CHECK(propagate_shapes({kDmfvChannels * paper.n_scales(), 8, 8, 8},
                         gate_preset("full", paper.n_experts())) ==
        std::vector<int>{7});
  CHECK(propagate_shapes({kDmfvChannels, 8, 8, 8}, expert_preset("full")) ==
        std::vector<int>{3});
}

TEST_CASE("config validation rejects bad wiring") {
  MoeConfig config = MoeConfig::tiny();
  config.expert_scales = {{0}, {5}};
  CHECK_THROWS_AS(config.validate(), DataError);
  config.expert_scales = {{0}, {}};
  CHECK_THROWS_AS(config.validate(), DataError);
  config.expert_scales = {{0}};  // scale 1 feeds nobody
  CHECK_THROWS_AS(config.validate(), DataError);
  config = MoeConfig::tiny();
  config.scales = {{0.05, 64}, {0.02, 64}};
  CHECK_THROWS_AS(config.validate(), DataError);
}

TEST_CASE("config json round trip") {
  MoeConfig config = MoeConfig::desk();
  config.seed = 1234;
  config.normalize_extrema = true;
  const MoeConfig back = MoeConfig::from_json_string(config.to_json_string());
  CHECK(back.m == config.m);
  CHECK(back.seed == config.seed);
  CHECK(back.normalize_extrema == config.normalize_extrema);
  CHECK(back.expert_scales == config.expert_scales);
  CHECK(back.scales.size() == config.scales.size());
  for (std::size_t i = 0; i < back.scales.size(); ++i) {
    CHECK(back.scales[i].radius_fraction == config.scales[i].radius_fraction);
    CHECK(back.scales[i].t_max == config.scales[i].t_max);
  }
  CHECK_THROWS_AS(MoeConfig::from_json_string("not json"), DataError);
}

TEST_CASE("expert inputs slice the wired scales") {
  MoeConfig config = MoeConfig::tiny();
  MoeModel model = MoeModel::build(config);
  MupsFeature feature;
  for (int s = 0; s < 2; ++s) {
    Dmfv d(config.m);
    std::fill(d.data.begin(), d.data.end(), static_cast<double>(s + 1));
    feature.scales.push_back(std::move(d));
  }
  const Tensor both = model.gate_input(feature);
  const std::size_t half = both.values.size() / 2;
  for (std::size_t i = 0; i < both.values.size(); ++i)
    CHECK(both.values[i] == (i < half ? 1.0 : 2.0));

  const Tensor second_only = model.expert_input(feature, 1);  // wired to scale 1
  for (double v : second_only.values) CHECK(v == 2.0);
  const Tensor all = model.expert_input(feature, 2);  // wired to both scales
  CHECK(all.values == both.values);
}

TEST_CASE("aligned and antiparallel experts cost nothing under a sure gate") {
  MoeModel model = MoeModel::build(one_expert_config());
  const MupsFeature feature = random_feature(model.config(), 5);
  const Vec3 target(0, 0, 1);

  force_constant_output(model.experts()[0], {0.0, 0.0, 2.0});
  MoeLossResult aligned = moe_loss(model, feature, target);
  CHECK(aligned.q[0] == 1.0);  // softmax over one logit is exactly one
  CHECK(aligned.loss == 0.0);

  force_constant_output(model.experts()[0], {0.0, 0.0, -3.0});
  CHECK(moe_loss(model, feature, target).loss == 0.0);
}

TEST_CASE("orthogonal experts cost exactly one") {
  MoeModel model = MoeModel::build(one_expert_config());
  const MupsFeature feature = random_feature(model.config(), 6);
  force_constant_output(model.experts()[0], {1.0, 0.0, 0.0});
  CHECK(moe_loss(model, feature, Vec3(0, 0, 1)).loss == 1.0);

  // any gate distribution: three orthogonal experts still sum to the gate mass
  MoeModel trio = MoeModel::build(MoeConfig::tiny());
  const MupsFeature f3 = random_feature(trio.config(), 7);
  for (Network& expert : trio.experts()) force_constant_output(expert, {1.0, 0.0, 0.0});
  const MoeLossResult result = moe_loss(trio, f3, Vec3(0, 1, 0));
  const double q_mass = (result.q[0] * 1.0 + result.q[1] * 1.0) + result.q[2] * 1.0;
  CHECK(result.loss == q_mass);
  CHECK(std::abs(result.loss - 1.0) <= 1e-12);
  for (double d : result.expert_sin) CHECK(d == 1.0);
}

TEST_CASE("loss stays inside the unit interval") {
  MoeModel model = MoeModel::build(MoeConfig::tiny());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MupsFeature feature = random_feature(model.config(), 100 + seed);
    Rng rng(seed);
    Vec3 target(rng.normal(), rng.normal(), rng.normal());
    target.normalize();
    const double loss = moe_loss(model, feature, target).loss;
    CHECK(loss >= 0.0);
    CHECK(loss <= 1.0);
  }
}

TEST_CASE("loss ignores target orientation exactly") {
  MoeModel model = MoeModel::build(MoeConfig::tiny());
  const MupsFeature feature = random_feature(model.config(), 8);
  const Vec3 target = Vec3(0.3, -0.5, 0.9).normalized();
  CHECK(moe_loss(model, feature, target).loss == moe_loss(model, feature, -target).loss);
}

TEST_CASE("collapsed expert output is an error") {
  MoeModel model = MoeModel::build(one_expert_config());
  force_constant_output(model.experts()[0], {0.0, 0.0, 0.0});
  const MupsFeature feature = random_feature(model.config(), 9);
  CHECK_THROWS_AS(moe_loss(model, feature, Vec3(0, 0, 1)), NumericError);
}

TEST_CASE("forced gate routes to the chosen expert only") {
  MoeModel model = MoeModel::build(MoeConfig::tiny());
  force_constant_output(model.gate(), {0.0, 50.0, 0.0});
  // keep softmax exact: logits (0, 50, 0) make q1 ~ 1
  force_constant_output(model.experts()[1], {0.0, 0.0, 2.0});
  const MupsFeature feature = random_feature(model.config(), 10);

  model.reset_eval_counts();
  const MoePrediction prediction = predict_normal(model, feature);
  CHECK(prediction.expert_index == 1);
  CHECK(prediction.normal == Vec3(0, 0, 1));
  CHECK(model.total_expert_evals() == 1);
  CHECK(model.expert_eval_count(1) == 1);
  CHECK(model.expert_eval_count(0) == 0);
  CHECK(model.expert_eval_count(2) == 0);
}

TEST_CASE("gate ties resolve to the lowest index") {
  MoeModel model = MoeModel::build(MoeConfig::tiny());
  force_constant_output(model.gate(), {0.0, 0.0, 0.0});
  for (Network& expert : model.experts()) force_constant_output(expert, {1.0, 0.0, 0.0});
  const MupsFeature feature = random_feature(model.config(), 11);
  const MoePrediction prediction = predict_normal(model, feature);
  CHECK(prediction.expert_index == 0);
}

TEST_CASE("expert stats aggregate routed errors") {
  MoeModel model = MoeModel::build(one_expert_config());
  force_constant_output(model.experts()[0], {0.0, 0.0, 1.0});
  std::vector<MupsFeature> features;
  std::vector<Vec3> targets;
  for (int i = 0; i < 6; ++i) {
    features.push_back(random_feature(model.config(), 20 + static_cast<std::uint64_t>(i)));
    targets.push_back(i % 2 == 0 ? Vec3(0, 0, 1) : Vec3(1, 0, 0));
  }
  const auto stats = expert_stats(model, features, targets);
  REQUIRE(stats.size() == 1);
  CHECK(stats[0].count == 6);
  CHECK(stats[0].mean_error_deg == doctest::Approx(45.0));
  CHECK_THROWS_AS(expert_stats(model, {}, {}), DataError);
}

TEST_CASE("gradients of the full mixture pass finite differences") {
  MoeModel model = MoeModel::build(MoeConfig::tiny());
  const MupsFeature feature = random_feature(model.config(), 12);
  const Vec3 target = Vec3(0.2, 0.7, -0.4).normalized();
  CHECK(moe_grad_check(model, feature, target) < 1e-4);
}

TEST_CASE("zero learning rate freezes the model") {
  MoeModel model = MoeModel::build(MoeConfig::tiny());
  const MupsFeature feature = random_feature(model.config(), 13);
  TrainBatch batch;
  batch.features = {&feature};
  batch.targets = {Vec3(0, 0, 1)};
  std::vector<Real> before;
  for (Tensor* p : model.gate().parameters())
    before.insert(before.end(), p->values.begin(), p->values.end());
  for (Network& e : model.experts())
    for (Tensor* p : e.parameters()) before.insert(before.end(), p->values.begin(), p->values.end());

  AdamConfig adam_config;
  adam_config.learning_rate = 0.0;
  Adam adam(adam_config);
  Rng rng(1);
  train_step(model, batch, adam, rng);

  std::vector<Real> after;
  for (Tensor* p : model.gate().parameters())
    after.insert(after.end(), p->values.begin(), p->values.end());
  for (Network& e : model.experts())
    for (Tensor* p : e.parameters()) after.insert(after.end(), p->values.begin(), p->values.end());
  CHECK(before == after);
}

TEST_CASE("a single repeated sample is overfit monotonically") {
  MoeModel model = MoeModel::build(MoeConfig::tiny());
  const MupsFeature feature = random_feature(model.config(), 14);
  TrainBatch batch;
  batch.features = {&feature};
  batch.targets = {Vec3(0.6, 0.0, 0.8)};

  // small step keeps the descent inside the smooth regime for all 50 steps
  AdamConfig config;
  config.learning_rate = 3e-5;
  Adam adam(config);
  Rng rng(2);
  std::vector<double> losses;
  for (int step = 0; step < 50; ++step) losses.push_back(train_step(model, batch, adam, rng));
  for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1] + 1e-9);
  CHECK(losses.back() < losses.front());
}

TEST_CASE("training trajectories are seeded-deterministic") {
  auto run = [] {
    MoeModel model = MoeModel::build(MoeConfig::tiny());
    std::vector<MupsFeature> features;
    std::vector<Vec3> targets;
    for (int i = 0; i < 12; ++i) {
      features.push_back(random_feature(model.config(), 40 + static_cast<std::uint64_t>(i)));
      Rng rng(50 + static_cast<std::uint64_t>(i));
      Vec3 t(rng.normal(), rng.normal(), rng.normal());
      targets.push_back(t.normalized());
    }
    TrainConfig config;
    config.epochs = 3;
    config.batch_size = 4;
    config.seed = 99;
    const auto log = train_moe(model, features, targets, config);
    std::vector<double> losses;
    for (const auto& entry : log) losses.push_back(entry.mean_loss);
    return losses;
  };
  CHECK(run() == run());
}

TEST_CASE("batch validation") {
  TrainBatch batch;
  CHECK_THROWS_AS(batch.validate(), DataError);
  const MoeConfig config = MoeConfig::tiny();
  const MupsFeature feature = random_feature(config, 15);
  batch.features = {&feature};
  batch.targets = {Vec3(0, 0, 2)};  // not unit
  CHECK_THROWS_AS(batch.validate(), DataError);
}

TEST_CASE("checkpoint round trip preserves behavior and bytes") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "nesti_moe_test";
  fs::create_directories(dir);
  MoeModel model = MoeModel::build(MoeConfig::tiny());
  const std::string prefix_a = (dir / "model_a").string();
  const std::string prefix_b = (dir / "model_b").string();
  model.save(prefix_a);
  MoeModel loaded = MoeModel::load(prefix_a);
  loaded.save(prefix_b);
  CHECK(read_file(prefix_a + ".gate.nstn") == read_file(prefix_b + ".gate.nstn"));
  for (int e = 0; e < 3; ++e)
    CHECK(read_file(prefix_a + ".expert" + std::to_string(e) + ".nstn") ==
          read_file(prefix_b + ".expert" + std::to_string(e) + ".nstn"));

  const MupsFeature feature = random_feature(model.config(), 16);
  const MoePrediction original = predict_normal(model, feature);
  const MoePrediction reloaded = predict_normal(loaded, feature);
  CHECK(reloaded.expert_index == original.expert_index);
  CHECK((reloaded.normal - original.normal).norm() <= 1e-6);
  fs::remove_all(dir);
}

TEST_CASE("feature shape mismatches are rejected") {
  MoeModel model = MoeModel::build(MoeConfig::tiny());
  MoeConfig other = MoeConfig::tiny();
  other.m = 4;
  const MupsFeature wrong_m = random_feature(other, 17);
  CHECK_THROWS_AS(model.gate_input(wrong_m), DataError);
  MupsFeature wrong_n = random_feature(MoeConfig::tiny(), 18);
  wrong_n.scales.pop_back();
  CHECK_THROWS_AS(model.gate_input(wrong_n), DataError);
}

}  // TEST_SUITE
