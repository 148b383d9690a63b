#include "nesti/moe.hpp"

#include "nesti/data.hpp"
#include "nesti/eval.hpp"

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>

namespace nesti {

std::vector<LayerSpec> gate_preset(const std::string& name, int n_experts) {
  if (n_experts < 1) throw DataError("gate_preset: need >= 1 expert");
  if (name == "tiny") {
    return {LayerSpec::Inception3d(1, 3, 4), LayerSpec::Relu(), LayerSpec::Dense(8),
            LayerSpec::Relu(), LayerSpec::Dense(n_experts), LayerSpec::Softmax()};
  }
  if (name == "desk") {
    return {LayerSpec::Conv3d(8, 3),  LayerSpec::Relu(), LayerSpec::MaxPool3d(2),
            LayerSpec::Dense(64),     LayerSpec::Relu(), LayerSpec::Dense(32),
            LayerSpec::Relu(),        LayerSpec::Dense(n_experts), LayerSpec::Softmax()};
  }
  if (name == "full") {
    return {LayerSpec::Inception3d(3, 5, 128), LayerSpec::Relu(),
            LayerSpec::Inception3d(3, 5, 256), LayerSpec::Relu(),
            LayerSpec::Inception3d(3, 5, 256), LayerSpec::Relu(),
            LayerSpec::MaxPool3d(2),
            LayerSpec::Inception3d(3, 5, 512), LayerSpec::Relu(),
            LayerSpec::Inception3d(3, 5, 512), LayerSpec::Relu(),
            LayerSpec::MaxPool3d(2),
            LayerSpec::Dense(1024), LayerSpec::Relu(),
            LayerSpec::Dense(256),  LayerSpec::Relu(),
            LayerSpec::Dense(128),  LayerSpec::Relu(),
            LayerSpec::Dense(n_experts), LayerSpec::Softmax()};
  }
  throw DataError("unknown gate preset '" + name + "'");
}

std::vector<LayerSpec> expert_preset(const std::string& name) {
  if (name == "tiny") {
    return {LayerSpec::Conv3d(4, 3), LayerSpec::Relu(), LayerSpec::MaxPool3d(2),
            LayerSpec::Dense(8),     LayerSpec::Relu(), LayerSpec::Dense(3)};
  }
  if (name == "desk") {
    return {LayerSpec::Conv3d(8, 3), LayerSpec::Relu(), LayerSpec::MaxPool3d(2),
            LayerSpec::Dense(64),    LayerSpec::Relu(), LayerSpec::Dense(32),
            LayerSpec::Relu(),       LayerSpec::Dense(3)};
  }
  if (name == "full") {
    return {LayerSpec::Inception3d(3, 5, 128), LayerSpec::Relu(),
            LayerSpec::Inception3d(3, 5, 256), LayerSpec::Relu(),
            LayerSpec::Inception3d(3, 5, 256), LayerSpec::Relu(),
            LayerSpec::MaxPool3d(2),
            LayerSpec::Inception3d(3, 5, 512), LayerSpec::Relu(),
            LayerSpec::Inception3d(3, 5, 512), LayerSpec::Relu(),
            LayerSpec::MaxPool3d(2),
            LayerSpec::Dense(1024), LayerSpec::Relu(),
            LayerSpec::Dense(256),  LayerSpec::Relu(),
            LayerSpec::Dense(128),  LayerSpec::Relu(),
            LayerSpec::Dense(3)};
  }
  throw DataError("unknown expert preset '" + name + "'");
}

void MoeConfig::validate() const {
  if (scales.empty()) throw DataError("MoeConfig: at least one scale required");
  for (const ScaleSpec& s : scales) s.validate();
  for (std::size_t i = 1; i < scales.size(); ++i)
    if (!(scales[i].radius_fraction > scales[i - 1].radius_fraction))
      throw DataError("MoeConfig: scales must be strictly ascending");
  if (expert_scales.empty()) throw DataError("MoeConfig: at least one expert required");
  std::vector<bool> fed(scales.size(), false);
  for (const auto& wiring : expert_scales) {
    if (wiring.empty()) throw DataError("MoeConfig: expert with empty scale wiring");
    for (int s : wiring) {
      if (s < 0 || s >= n_scales())
        throw DataError("MoeConfig: wiring references scale " + std::to_string(s));
      fed[static_cast<std::size_t>(s)] = true;
    }
  }
  for (std::size_t s = 0; s < fed.size(); ++s)
    if (!fed[s]) throw DataError("MoeConfig: scale " + std::to_string(s) + " feeds no expert");
  if (m < 1) throw DataError("MoeConfig: m must be >= 1");
}

MoeConfig MoeConfig::desk() {
  MoeConfig config;
  config.scales = {{0.01, 128}, {0.03, 128}, {0.05, 128}};
  config.m = 4;
  config.expert_scales = {{0}, {1}, {2}};
  config.gate_arch = "desk";
  config.expert_arch = "desk";
  return config;
}

MoeConfig MoeConfig::paper() {
  MoeConfig config;
  config.scales = {{0.01, 512}, {0.03, 512}, {0.05, 512}};
  config.m = 8;
  config.expert_scales = {{0}, {0}, {1}, {1}, {2}, {2}, {0, 1, 2}};
  config.gate_arch = "full";
  config.expert_arch = "full";
  return config;
}

MoeConfig MoeConfig::tiny() {
  MoeConfig config;
  config.scales = {{0.02, 64}, {0.05, 64}};
  config.m = 2;
  config.expert_scales = {{0}, {1}, {0, 1}};
  config.gate_arch = "tiny";
  config.expert_arch = "tiny";
  return config;
}

std::string MoeConfig::to_json_string() const {
  nlohmann::json doc;
  doc["m"] = m;
  doc["gate_arch"] = gate_arch;
  doc["expert_arch"] = expert_arch;
  doc["normalize_extrema"] = normalize_extrema;
  doc["seed"] = seed;
  doc["scales"] = nlohmann::json::array();
  for (const ScaleSpec& s : scales)
    doc["scales"].push_back({{"radius_fraction", s.radius_fraction}, {"t_max", s.t_max}});
  doc["expert_scales"] = expert_scales;
  return doc.dump(2);
}

MoeConfig MoeConfig::from_json_string(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& err) {
    throw DataError(std::string("MoeConfig: bad JSON: ") + err.what());
  }
  MoeConfig config;
  try {
    config.m = doc.at("m").get<int>();
    config.gate_arch = doc.at("gate_arch").get<std::string>();
    config.expert_arch = doc.at("expert_arch").get<std::string>();
    config.normalize_extrema = doc.at("normalize_extrema").get<bool>();
    config.seed = doc.at("seed").get<std::uint64_t>();
    config.scales.clear();
    for (const auto& s : doc.at("scales"))
      config.scales.push_back(
          {s.at("radius_fraction").get<double>(), s.at("t_max").get<int>()});
    config.expert_scales = doc.at("expert_scales").get<std::vector<std::vector<int>>>();
  } catch (const nlohmann::json::exception& err) {
    throw DataError(std::string("MoeConfig: missing field: ") + err.what());
  }
  config.validate();
  return config;
}

// ---------------------------------------------------------------------------
// MoeModel

MoeModel MoeModel::build(const MoeConfig& config) {
  config.validate();
  MoeModel model;
  model.config_ = config;
  Rng rng(config.seed);
  const int m = config.m;

  const std::vector<int> gate_shape = {kDmfvChannels * config.n_scales(), m, m, m};
  const auto gate_specs = gate_preset(config.gate_arch, config.n_experts());
  if (gate_specs.back().kind != LayerSpec::Kind::softmax)
    throw DataError("MoeModel: gate preset must end with softmax");
  model.gate_ = Network::build(gate_shape, gate_specs, rng);
  if (model.gate_.output_shape() != std::vector<int>{config.n_experts()})
    throw DataError("MoeModel: gate output size must equal the expert count");

  model.experts_.reserve(static_cast<std::size_t>(config.n_experts()));
  for (int e = 0; e < config.n_experts(); ++e) {
    const int slice_channels =
        kDmfvChannels * static_cast<int>(config.expert_scales[static_cast<std::size_t>(e)].size());
    Network expert =
        Network::build({slice_channels, m, m, m}, expert_preset(config.expert_arch), rng);
    if (expert.output_shape() != std::vector<int>{3})
      throw DataError("MoeModel: expert output must be a 3-vector");
    model.experts_.push_back(std::move(expert));
  }
  model.eval_counts_ =
      std::vector<std::atomic<long>>(static_cast<std::size_t>(config.n_experts()));
  return model;
}

Tensor MoeModel::gate_input(const MupsFeature& feature) const {
  if (feature.scale_count() != config_.n_scales() || feature.m() != config_.m)
    throw DataError("MoeModel: feature scale count or grid resolution mismatch");
  Tensor input({kDmfvChannels * config_.n_scales(), config_.m, config_.m, config_.m});
  const std::vector<double> flat = feature.flat();
  std::copy(flat.begin(), flat.end(), input.values.begin());
  return input;
}

Tensor MoeModel::expert_input(const MupsFeature& feature, int expert) const {
  if (expert < 0 || expert >= config_.n_experts())
    throw DataError("MoeModel: expert index out of range");
  if (feature.scale_count() != config_.n_scales() || feature.m() != config_.m)
    throw DataError("MoeModel: feature scale count or grid resolution mismatch");
  const auto& wiring = config_.expert_scales[static_cast<std::size_t>(expert)];
  Tensor input({kDmfvChannels * static_cast<int>(wiring.size()), config_.m, config_.m,
                config_.m});
  std::size_t offset = 0;
  for (int s : wiring) {
    const auto& data = feature.scales[static_cast<std::size_t>(s)].data;
    std::copy(data.begin(), data.end(),
              input.values.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += data.size();
  }
  return input;
}

Tensor MoeModel::eval_expert(int expert, const Tensor& input) {
  ++eval_counts_[static_cast<std::size_t>(expert)];
  return experts_[static_cast<std::size_t>(expert)].forward_const(input);
}

long MoeModel::total_expert_evals() const {
  long total = 0;
  for (const auto& c : eval_counts_) total += c.load();
  return total;
}

void MoeModel::reset_eval_counts() {
  for (auto& c : eval_counts_) c.store(0);
}

void MoeModel::save(const std::string& prefix) const {
  gate_.save(prefix + ".gate.nstn");
  for (std::size_t e = 0; e < experts_.size(); ++e)
    experts_[e].save(prefix + ".expert" + std::to_string(e) + ".nstn");
  std::ofstream os(prefix + ".json");
  if (!os) throw DataError("MoeModel::save: cannot open " + prefix + ".json");
  os << config_.to_json_string() << '\n';
}

MoeModel MoeModel::load(const std::string& prefix) {
  std::ifstream is(prefix + ".json");
  if (!is) throw DataError("MoeModel::load: cannot open " + prefix + ".json");
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const MoeConfig config = MoeConfig::from_json_string(text);

  MoeModel model;
  model.config_ = config;
  model.gate_ = Network::load(prefix + ".gate.nstn");
  for (int e = 0; e < config.n_experts(); ++e)
    model.experts_.push_back(Network::load(prefix + ".expert" + std::to_string(e) + ".nstn"));
  model.eval_counts_ =
      std::vector<std::atomic<long>>(static_cast<std::size_t>(config.n_experts()));
  return model;
}

// ---------------------------------------------------------------------------
// Loss

namespace {

double sin_distance(const Vec3& estimate, const Vec3& target) {
  const double norm_product = estimate.norm() * target.norm();
  return estimate.cross(target).norm() / norm_product;
}

// d(sin theta)/d(estimate). Zero at the (non-differentiable) aligned minimum.
Vec3 sin_distance_gradient(const Vec3& n, const Vec3& g) {
  const Vec3 cross = n.cross(g);
  const double s = cross.norm();
  if (s < 1e-12) return Vec3::Zero();
  const double nn = n.norm();
  const double gg = g.norm();
  const Vec3 grad_s = (n * (gg * gg) - g * g.dot(n)) / s;
  return grad_s / (nn * gg) - (s / (gg * nn * nn * nn)) * n;
}

Vec3 output_vec3(const Tensor& t) { return Vec3(t.values[0], t.values[1], t.values[2]); }

// Forward pass over gate and all experts; when accumulate_weight > 0 also
// backpropagates that fraction of the loss into the parameter gradients.
MoeLossResult run_sample(MoeModel& model, const MupsFeature& feature, const Vec3& target,
                         double accumulate_weight) {
  const int n_experts = model.config().n_experts();
  Network& gate = model.gate();
  const bool with_grad = accumulate_weight > 0.0;

  const Tensor gate_in = model.gate_input(feature);
  const Tensor q_out = with_grad ? gate.forward(gate_in) : gate.forward_const(gate_in);

  MoeLossResult result;
  result.q.assign(q_out.values.begin(), q_out.values.end());
  result.expert_sin.resize(static_cast<std::size_t>(n_experts));

  std::vector<Tensor> expert_outs(static_cast<std::size_t>(n_experts));
  std::vector<Vec3> estimates(static_cast<std::size_t>(n_experts));
  for (int e = 0; e < n_experts; ++e) {
    const Tensor input = model.expert_input(feature, e);
    expert_outs[static_cast<std::size_t>(e)] =
        with_grad ? model.experts()[static_cast<std::size_t>(e)].forward(input)
                  : model.eval_expert(e, input);
    estimates[static_cast<std::size_t>(e)] = output_vec3(expert_outs[static_cast<std::size_t>(e)]);
    if (estimates[static_cast<std::size_t>(e)].norm() < 1e-12)
      throw NumericError("collapsed expert output");
    result.expert_sin[static_cast<std::size_t>(e)] =
        sin_distance(estimates[static_cast<std::size_t>(e)], target);
    result.loss += result.q[static_cast<std::size_t>(e)] *
                   result.expert_sin[static_cast<std::size_t>(e)];
  }

  if (with_grad) {
    Tensor gate_grad(q_out.shape);
    for (int e = 0; e < n_experts; ++e)
      gate_grad.values[static_cast<std::size_t>(e)] =
          accumulate_weight * result.expert_sin[static_cast<std::size_t>(e)];
    gate.backward(gate_grad);
    for (int e = 0; e < n_experts; ++e) {
      const Vec3 gradient = accumulate_weight * result.q[static_cast<std::size_t>(e)] *
                            sin_distance_gradient(estimates[static_cast<std::size_t>(e)], target);
      Tensor expert_grad(expert_outs[static_cast<std::size_t>(e)].shape);
      expert_grad.values = {gradient.x(), gradient.y(), gradient.z()};
      model.experts()[static_cast<std::size_t>(e)].backward(expert_grad);
    }
  }
  return result;
}

std::vector<Tensor*> all_parameters(MoeModel& model) {
  std::vector<Tensor*> params = model.gate().parameters();
  for (Network& expert : model.experts())
    for (Tensor* p : expert.parameters()) params.push_back(p);
  return params;
}

void zero_all_grads(MoeModel& model) {
  model.gate().zero_grad();
  for (Network& expert : model.experts()) expert.zero_grad();
}

}  // namespace

MoeLossResult moe_loss(MoeModel& model, const MupsFeature& feature, const Vec3& target) {
  return run_sample(model, feature, target, 0.0);
}

void TrainBatch::validate() const {
  if (features.empty()) throw DataError("TrainBatch: empty batch");
  if (features.size() != targets.size())
    throw DataError("TrainBatch: features and targets misaligned");
  for (const Vec3& t : targets)
    if (std::abs(t.norm() - 1.0) > 1e-6)
      throw DataError("TrainBatch: targets must be unit vectors");
}

namespace {

// Zeroes gradients, runs the whole batch forward/backward and leaves the mean
// gradients in place. Returns the mean loss.
double accumulate_batch(MoeModel& model, const TrainBatch& batch) {
  batch.validate();
  zero_all_grads(model);
  const double weight = 1.0 / static_cast<double>(batch.features.size());
  double total = 0.0;
  for (std::size_t s = 0; s < batch.features.size(); ++s) {
    double loss = 0.0;
    try {
      loss = run_sample(model, *batch.features[s], batch.targets[s], weight).loss;
    } catch (const NumericError& err) {
      throw NumericError(std::string(err.what()) + " at sample index " + std::to_string(s));
    }
    if (!std::isfinite(loss))
      throw NumericError("non-finite loss at sample index " + std::to_string(s));
    total += loss;
  }
  return total * weight;
}

}  // namespace

double train_step(MoeModel& model, const TrainBatch& batch, Adam& optimizer, Rng& rng) {
  (void)rng;
  const double mean_loss = accumulate_batch(model, batch);
  optimizer.step(all_parameters(model));
  return mean_loss;
}

std::vector<TrainLogEntry> train_moe(MoeModel& model,
                                     const std::vector<MupsFeature>& features,
                                     const std::vector<Vec3>& targets,
                                     const TrainConfig& config) {
  if (features.empty() || features.size() != targets.size())
    throw DataError("train_moe: empty or misaligned training set");
  if (config.epochs < 1 || config.batch_size < 1)
    throw DataError("train_moe: epochs and batch_size must be positive");
  if (!(config.gate_lr_scale > 0.0))
    throw DataError("train_moe: gate_lr_scale must be positive");

  AdamConfig gate_adam = config.adam;
  gate_adam.learning_rate *= config.gate_lr_scale;
  Adam gate_optimizer(gate_adam);
  Adam expert_optimizer(config.adam);
  std::vector<Tensor*> expert_params;
  for (Network& expert : model.experts())
    for (Tensor* p : expert.parameters()) expert_params.push_back(p);

  Rng rng(config.seed);
  std::vector<int> order(features.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<TrainLogEntry> log;
  log.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with the epoch stream
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = rng.bounded(i);
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      TrainBatch batch;
      for (std::size_t i = start; i < stop; ++i) {
        batch.features.push_back(&features[static_cast<std::size_t>(order[i])]);
        batch.targets.push_back(targets[static_cast<std::size_t>(order[i])]);
      }
      const double mean_loss = accumulate_batch(model, batch);
      gate_optimizer.step(model.gate().parameters());
      expert_optimizer.step(expert_params);
      epoch_loss += mean_loss * static_cast<double>(stop - start);
      seen += stop - start;
    }
    log.push_back({epoch, epoch_loss / static_cast<double>(seen)});
  }
  return log;
}

MoePrediction predict_normal(MoeModel& model, const MupsFeature& feature) {
  const Tensor q_out = model.gate().forward_const(model.gate_input(feature));
  MoePrediction prediction;
  prediction.q.assign(q_out.values.begin(), q_out.values.end());
  int best = 0;
  for (std::size_t i = 1; i < prediction.q.size(); ++i)
    if (prediction.q[i] > prediction.q[static_cast<std::size_t>(best)])
      best = static_cast<int>(i);
  prediction.expert_index = best;

  const Tensor out = model.eval_expert(best, model.expert_input(feature, best));
  const Vec3 estimate = output_vec3(out);
  const double norm = estimate.norm();
  if (norm < 1e-12) throw NumericError("collapsed expert output");
  prediction.normal = estimate / norm;
  return prediction;
}

std::vector<ExpertStat> expert_stats(MoeModel& model,
                                     const std::vector<MupsFeature>& features,
                                     const std::vector<Vec3>& targets) {
  if (features.empty()) throw DataError("expert_stats: empty dataset");
  if (features.size() != targets.size())
    throw DataError("expert_stats: features and targets misaligned");
  std::vector<ExpertStat> stats(static_cast<std::size_t>(model.config().n_experts()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const MoePrediction prediction = predict_normal(model, features[i]);
    ExpertStat& stat = stats[static_cast<std::size_t>(prediction.expert_index)];
    const double err = angle_error_unoriented(prediction.normal, targets[i]);
    stat.mean_error_deg += err;
    ++stat.count;
  }
  for (ExpertStat& stat : stats)
    if (stat.count > 0) stat.mean_error_deg /= static_cast<double>(stat.count);
  return stats;
}

double moe_grad_check(MoeModel& model, const MupsFeature& feature, const Vec3& target,
                      double step) {
  zero_all_grads(model);
  run_sample(model, feature, target, 1.0);

  const std::vector<Tensor*> params = all_parameters(model);
  std::vector<std::vector<Real>> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params) analytic.push_back(p->grad);

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    for (std::size_t j = 0; j < p.values.size(); ++j) {
      const Real saved = p.values[j];
      p.values[j] = saved + static_cast<Real>(step);
      const double plus = moe_loss(model, feature, target).loss;
      p.values[j] = saved - static_cast<Real>(step);
      const double minus = moe_loss(model, feature, target).loss;
      p.values[j] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[pi][j];
      const double scale = std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a - numeric) / scale);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Specialization corpus

namespace {

struct QueryPools {
  std::vector<int> primary;    // plane inner region / wedge near-crease
  std::vector<int> secondary;  // wedge off-crease
};

void collect_samples(const SpatialIndex& index, const std::vector<int>& pool, int want,
                     const MoeConfig& config, const GaussianGrid& grid, Rng& rng,
                     SampleKind kind, SpecializationCorpus& corpus) {
  if (pool.empty()) throw DataError("specialization corpus: empty query pool");
  const PointCloud& cloud = index.cloud();
  int collected = 0;
  int attempts = 0;
  const int max_attempts = want * 50 + 1000;
  while (collected < want && attempts < max_attempts) {
    ++attempts;
    const int query = pool[static_cast<std::size_t>(rng.bounded(pool.size()))];
    try {
      MupsFeature feature = compute_mups(index, grid, query, config.scales, rng,
                                         config.normalize_extrema);
      corpus.features.push_back(std::move(feature));
      corpus.targets.push_back(cloud.normals[static_cast<std::size_t>(query)]);
      corpus.kinds.push_back(kind);
      ++collected;
    } catch (const DegeneratePatchError&) {
      // thin neighborhood, try another query
    }
  }
  if (collected < want)
    throw NumericError("specialization corpus: could not collect enough patches");
}

std::vector<int> split_counts(int total, int buckets) {
  std::vector<int> counts(static_cast<std::size_t>(buckets), total / buckets);
  for (int i = 0; i < total % buckets; ++i) ++counts[static_cast<std::size_t>(i)];
  return counts;
}

}  // namespace

SpecializationCorpus make_specialization_corpus(const MoeConfig& config,
                                                const CorpusOptions& options,
                                                std::uint64_t seed) {
  config.validate();
  if (options.total_patches < 2) throw DataError("corpus: total_patches too small");
  if (options.clouds_per_family < 1) throw DataError("corpus: need >= 1 cloud per family");
  const GaussianGrid grid = build_grid(config.m);

  SpecializationCorpus corpus;
  corpus.features.reserve(static_cast<std::size_t>(options.total_patches));

  const int plane_total =
      static_cast<int>(std::lround(options.total_patches * options.plane_fraction));
  const int wedge_total = options.total_patches - plane_total;
  const std::vector<int> plane_counts = split_counts(plane_total, options.clouds_per_family);
  const std::vector<int> wedge_counts = split_counts(wedge_total, options.clouds_per_family);

  // Noisy planes: random orientation, positions perturbed, clean targets.
  for (int c = 0; c < options.clouds_per_family; ++c) {
    if (plane_counts[static_cast<std::size_t>(c)] == 0) continue;
    Rng rng(Rng::mix(seed, 0x9100 + static_cast<std::uint64_t>(c)));
    ShapeSpec shape;
    shape.kind = ShapeSpec::Kind::plane;
    shape.count = options.plane_points;
    shape.extents = {1.0};
    shape.seed = Rng::mix(seed, 0x9200 + static_cast<std::uint64_t>(c));
    const PointCloud canonical = generate(shape);

    QueryPools pools;
    for (std::size_t i = 0; i < canonical.size(); ++i) {
      const Vec3& p = canonical.points[i];
      if (std::abs(p.x()) <= 0.8 && std::abs(p.y()) <= 0.8)
        pools.primary.push_back(static_cast<int>(i));
    }

    const PointCloud rotated = transform_cloud(canonical, random_rotation(rng), Vec3::Zero());
    CorruptionSpec noise;
    noise.kind = CorruptionSpec::Kind::gaussian_noise;
    noise.sigma_fraction = options.noise_sigma;
    noise.seed = Rng::mix(seed, 0x9300 + static_cast<std::uint64_t>(c));
    const PointCloud noisy = corrupt(rotated, noise);

    const SpatialIndex index(noisy);
    collect_samples(index, pools.primary, plane_counts[static_cast<std::size_t>(c)], config,
                    grid, rng, SampleKind::noisy_plane, corpus);
  }

  // Clean right-angle wedges: near-crease and interior-face queries.
  for (int c = 0; c < options.clouds_per_family; ++c) {
    const int want = wedge_counts[static_cast<std::size_t>(c)];
    if (want == 0) continue;
    Rng rng(Rng::mix(seed, 0xa100 + static_cast<std::uint64_t>(c)));
    ShapeSpec shape;
    shape.kind = ShapeSpec::Kind::wedge;
    shape.count = options.wedge_points;
    shape.extents = {1.0};
    shape.wedge_angle_deg = 90.0;
    shape.seed = Rng::mix(seed, 0xa200 + static_cast<std::uint64_t>(c));
    const PointCloud canonical = generate(shape);

    // Thresholds relative to the smallest patch radius: near-crease patches
    // straddle the edge at the 1% scale, face patches stay planar at 5%.
    const double small_radius = config.scales.front().radius_fraction * canonical.diag;
    const double large_radius = config.scales.back().radius_fraction * canonical.diag;
    QueryPools pools;
    for (std::size_t i = 0; i < canonical.size(); ++i) {
      const Vec3& p = canonical.points[i];
      const double crease_dist = wedge_crease_distance(p);
      if (std::abs(p.y()) > 0.8 || crease_dist > 0.8) continue;
      if (crease_dist <= options.crease_band * small_radius)
        pools.primary.push_back(static_cast<int>(i));
      else if (crease_dist >= large_radius + 2.0 * small_radius)
        pools.secondary.push_back(static_cast<int>(i));
    }

    const PointCloud rotated = transform_cloud(canonical, random_rotation(rng), Vec3::Zero());
    const SpatialIndex index(rotated);
    const int crease_want = static_cast<int>(std::lround(want * options.crease_fraction));
    collect_samples(index, pools.primary, crease_want, config, grid, rng,
                    SampleKind::wedge_crease, corpus);
    collect_samples(index, pools.secondary, want - crease_want, config, grid, rng,
                    SampleKind::wedge_face, corpus);
  }
  return corpus;
}

}  // namespace nesti
