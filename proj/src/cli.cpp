#include "nesti/cli.hpp"

#include "nesti/cloud.hpp"
#include "nesti/data.hpp"
#include "nesti/eval.hpp"
#include "nesti/fv.hpp"
#include "nesti/geom.hpp"
#include "nesti/moe.hpp"
#include "nesti/parallel.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

namespace nesti {

namespace {

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw DataError("bad numeric list entry '" + item + "'");
    }
  }
  if (out.empty()) throw DataError("empty numeric list");
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_double_list(text)) out.push_back(static_cast<int>(v));
  return out;
}

void write_manifest(const std::string& output_path, const std::string& subcommand,
                    const nlohmann::json& resolved, std::uint64_t seed, int threads) {
  nlohmann::json doc;
  doc["version"] = kVersion;
  doc["subcommand"] = subcommand;
  doc["config"] = resolved;
  doc["config_hash"] = std::to_string(std::hash<std::string>{}(resolved.dump()));
  doc["seed"] = seed;
  doc["threads"] = threads;
  std::ofstream os(output_path + ".manifest.json");
  if (!os) throw DataError("cannot write manifest next to " + output_path);
  os << doc.dump(2) << '\n';
}

void write_normals_file(const std::string& path, const std::vector<Vec3>& normals) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path);
  os.precision(17);
  for (const Vec3& n : normals) os << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
}

std::vector<ScaleSpec> make_scales(const std::vector<double>& radii, int t_max) {
  std::vector<ScaleSpec> scales;
  for (double r : radii) scales.push_back({r, t_max});
  return scales;
}

std::vector<int> resolve_queries(const LoadedShape& shape) {
  if (!shape.queries.empty()) return shape.queries;
  std::vector<int> all(shape.cloud.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return all;
}

// ---------------------------------------------------------------------------
// Benchmark method factories

BenchMethod make_geom_method(const std::string& name, BaselineConfig::Method method, int k) {
  BaselineConfig config{method, k};
  config.validate();
  return {name, [config](const SpatialIndex& index, int query) {
            const auto start = std::chrono::steady_clock::now();
            const NormalEstimate est = estimate_baseline(index, query, config);
            PointEstimate out;
            out.normal = est.normal;
            out.estimate_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                    .count();
            return out;
          }};
}

BenchMethod make_moe_method(const std::string& name, std::shared_ptr<MoeModel> model,
                            std::uint64_t seed) {
  auto grid = std::make_shared<GaussianGrid>(build_grid(model->config().m));
  return {name, [model, grid, seed](const SpatialIndex& index, int query) {
            using clock = std::chrono::steady_clock;
            const auto t0 = clock::now();
            Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(query)));
            const MupsFeature feature =
                compute_mups(index, *grid, query, model->config().scales, rng,
                             model->config().normalize_extrema);
            const auto t1 = clock::now();
            const MoePrediction prediction = predict_normal(*model, feature);
            const auto t2 = clock::now();
            PointEstimate out;
            out.normal = prediction.normal;
            out.feature_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            out.estimate_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
            return out;
          }};
}

// method tokens: pca:18, jet:112, moe:<checkpoint prefix>
std::vector<BenchMethod> parse_methods(const std::string& text, std::uint64_t seed) {
  std::vector<BenchMethod> methods;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    const std::size_t colon = token.find(':');
    const std::string kind = token.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : token.substr(colon + 1);
    if (kind == "pca" || kind == "jet") {
      if (arg.empty()) throw DataError("method '" + kind + "' needs :k");
      const int k = std::stoi(arg);
      methods.push_back(make_geom_method(
          token, kind == "pca" ? BaselineConfig::Method::pca : BaselineConfig::Method::jet, k));
    } else if (kind == "moe") {
      if (arg.empty()) throw DataError("method 'moe' needs :checkpoint-prefix");
      auto model = std::make_shared<MoeModel>(MoeModel::load(arg));
      methods.push_back(make_moe_method("moe", model, seed));
    } else {
      throw DataError("unknown method '" + kind + "'");
    }
  }
  if (methods.empty()) throw DataError("no methods given");
  return methods;
}

// augmentation tokens: none, noise:0.012, gradient:<axis>:<min_keep>,
// stripes:<axis>:<period>:<duty>
std::vector<BenchAugmentation> parse_augmentations(const std::string& text,
                                                   std::uint64_t seed) {
  std::vector<BenchAugmentation> augs;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    std::vector<std::string> parts;
    std::stringstream ts(token);
    std::string part;
    while (std::getline(ts, part, ':')) parts.push_back(part);
    BenchAugmentation aug;
    aug.label = token;
    if (parts[0] == "none") {
      augs.push_back(aug);
      continue;
    }
    CorruptionSpec spec;
    spec.seed = Rng::mix(seed, augs.size());
    if (parts[0] == "noise" && parts.size() == 2) {
      spec.kind = CorruptionSpec::Kind::gaussian_noise;
      spec.sigma_fraction = std::stod(parts[1]);
    } else if (parts[0] == "gradient" && parts.size() == 3) {
      spec.kind = CorruptionSpec::Kind::density_gradient;
      spec.axis = std::stoi(parts[1]);
      spec.min_keep = std::stod(parts[2]);
    } else if (parts[0] == "stripes" && parts.size() == 4) {
      spec.kind = CorruptionSpec::Kind::density_stripes;
      spec.axis = std::stoi(parts[1]);
      spec.period_fraction = std::stod(parts[2]);
      spec.duty = std::stod(parts[3]);
    } else {
      throw DataError("unknown augmentation '" + token + "'");
    }
    spec.validate();
    aug.corruption = spec;
    augs.push_back(aug);
  }
  if (augs.empty()) throw DataError("no augmentations given");
  return augs;
}

// ---------------------------------------------------------------------------
// Subcommands

struct SynthArgs {
  std::string shape = "plane";
  int count = 10000;
  std::string extents = "1.0";
  double angle = 90.0;
  std::uint64_t seed = 0;
  bool rotate = false;
  double noise = -1.0;
  std::string gradient;  // axis,min_keep
  std::string stripes;   // axis,period,duty
  int queries = 0;
  std::string output;
};

int run_synth(const SynthArgs& args) {
  ShapeSpec spec;
  if (args.shape == "plane") spec.kind = ShapeSpec::Kind::plane;
  else if (args.shape == "sphere") spec.kind = ShapeSpec::Kind::sphere;
  else if (args.shape == "cylinder") spec.kind = ShapeSpec::Kind::cylinder;
  else if (args.shape == "box") spec.kind = ShapeSpec::Kind::box;
  else if (args.shape == "wedge") spec.kind = ShapeSpec::Kind::wedge;
  else throw DataError("unknown shape '" + args.shape + "'");
  spec.count = args.count;
  spec.extents = parse_double_list(args.extents);
  spec.wedge_angle_deg = args.angle;
  spec.seed = args.seed;

  PointCloud cloud = generate(spec);
  Rng rng(Rng::mix(args.seed, 0x5f));
  if (args.rotate) cloud = transform_cloud(cloud, random_rotation(rng), Vec3::Zero());

  if (args.noise >= 0.0) {
    CorruptionSpec noise;
    noise.kind = CorruptionSpec::Kind::gaussian_noise;
    noise.sigma_fraction = args.noise;
    noise.seed = Rng::mix(args.seed, 0x60);
    cloud = corrupt(cloud, noise);
  }
  if (!args.gradient.empty()) {
    const auto parts = parse_double_list(args.gradient);
    if (parts.size() != 2) throw DataError("--density-gradient needs axis,min_keep");
    CorruptionSpec spec2;
    spec2.kind = CorruptionSpec::Kind::density_gradient;
    spec2.axis = static_cast<int>(parts[0]);
    spec2.min_keep = parts[1];
    spec2.seed = Rng::mix(args.seed, 0x61);
    cloud = corrupt(cloud, spec2);
  }
  if (!args.stripes.empty()) {
    const auto parts = parse_double_list(args.stripes);
    if (parts.size() != 3) throw DataError("--density-stripes needs axis,period,duty");
    CorruptionSpec spec3;
    spec3.kind = CorruptionSpec::Kind::density_stripes;
    spec3.axis = static_cast<int>(parts[0]);
    spec3.period_fraction = parts[1];
    spec3.duty = parts[2];
    spec3.seed = Rng::mix(args.seed, 0x62);
    cloud = corrupt(cloud, spec3);
  }

  std::vector<int> queries;
  if (args.queries > 0) {
    const int q = std::min<int>(args.queries, static_cast<int>(cloud.size()));
    queries = sample_without_replacement(static_cast<int>(cloud.size()), q, rng);
    std::sort(queries.begin(), queries.end());
  }
  save_pcpnet(args.output, cloud, queries.empty() ? nullptr : &queries);

  nlohmann::json resolved{{"shape", args.shape},      {"count", args.count},
                          {"extents", args.extents},  {"angle_deg", args.angle},
                          {"rotate", args.rotate},    {"noise", args.noise},
                          {"gradient", args.gradient},{"stripes", args.stripes},
                          {"queries", args.queries},  {"output", args.output}};
  write_manifest(args.output, "synth", resolved, args.seed, 1);
  std::cout << "synth: wrote " << cloud.size() << " points to " << args.output
            << ".xyz\n";
  return 0;
}

struct FeatureArgs {
  std::string input;
  int m = 8;
  std::string scales = "0.01,0.03,0.05";
  int t_max = 512;
  std::uint64_t seed = 0;
  int threads = 0;
  bool normalize_extrema = false;
  std::string output;
  std::string csv;
};

int run_features(const FeatureArgs& args) {
  namespace fs = std::filesystem;
  const fs::path input(args.input);
  const LoadedShape shape = load_pcpnet(input.parent_path().string(), input.filename().string());
  const std::vector<int> queries = resolve_queries(shape);
  const SpatialIndex index(shape.cloud);
  const GaussianGrid grid = build_grid(args.m);
  const std::vector<ScaleSpec> scales = make_scales(parse_double_list(args.scales), args.t_max);

  // Queries whose smallest ball is degenerate are dropped, not fatal.
  std::vector<MupsFeature> slots(queries.size());
  std::vector<char> ok(queries.size(), 0);
  const int threads = args.threads > 0 ? args.threads : default_thread_count();
  parallel_for(
      queries.size(),
      [&](std::size_t i) {
        Rng rng(Rng::mix(args.seed, static_cast<std::uint64_t>(queries[i])));
        try {
          slots[i] = compute_mups(index, grid, queries[i], scales, rng,
                                  args.normalize_extrema);
          ok[i] = 1;
        } catch (const DegeneratePatchError&) {
          ok[i] = 0;
        }
      },
      threads);

  std::vector<MupsFeature> features;
  features.reserve(queries.size());
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (ok[i])
      features.push_back(std::move(slots[i]));
    else
      ++dropped;
  }
  if (features.empty()) throw NumericError("features: every query was degenerate");
  if (dropped > 0)
    std::cout << "features: dropped " << dropped << " degenerate quer"
              << (dropped == 1 ? "y" : "ies") << '\n';

  save_mups(args.output, features);
  if (!args.csv.empty()) export_mups_csv(args.csv, features);

  nlohmann::json resolved{{"input", args.input}, {"m", args.m},
                          {"scales", args.scales}, {"t_max", args.t_max},
                          {"normalize_extrema", args.normalize_extrema},
                          {"output", args.output}};
  write_manifest(args.output, "features", resolved, args.seed, threads);
  std::cout << "features: encoded " << features.size() << " queries to " << args.output
            << '\n';
  return 0;
}

struct EstimateArgs {
  std::string input;
  std::string method = "pca";
  int k = kSmallNeighborhood;
  std::string model;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string output;
};

int run_estimate(const EstimateArgs& args) {
  namespace fs = std::filesystem;
  const fs::path input(args.input);
  const LoadedShape shape = load_pcpnet(input.parent_path().string(), input.filename().string());
  const std::vector<int> queries = resolve_queries(shape);
  const SpatialIndex index(shape.cloud);
  const int threads = args.threads > 0 ? args.threads : default_thread_count();

  std::vector<Vec3> normals(queries.size());
  if (args.method == "pca" || args.method == "jet") {
    BaselineConfig config{args.method == "pca" ? BaselineConfig::Method::pca
                                               : BaselineConfig::Method::jet,
                          args.k};
    config.validate();
    parallel_for(
        queries.size(),
        [&](std::size_t i) { normals[i] = estimate_baseline(index, queries[i], config).normal; },
        threads);
  } else if (args.method == "moe") {
    if (args.model.empty()) throw DataError("--model required for method moe");
    MoeModel model = MoeModel::load(args.model);
    const GaussianGrid grid = build_grid(model.config().m);
    parallel_for(
        queries.size(),
        [&](std::size_t i) {
          Rng rng(Rng::mix(args.seed, static_cast<std::uint64_t>(queries[i])));
          const MupsFeature feature =
              compute_mups(index, grid, queries[i], model.config().scales, rng,
                           model.config().normalize_extrema);
          normals[i] = predict_normal(model, feature).normal;
        },
        threads);
  } else {
    throw DataError("unknown method '" + args.method + "'");
  }

  write_normals_file(args.output, normals);
  nlohmann::json resolved{{"input", args.input}, {"method", args.method},
                          {"k", args.k},         {"model", args.model},
                          {"output", args.output}};
  write_manifest(args.output, "estimate", resolved, args.seed, threads);
  std::cout << "estimate: wrote " << normals.size() << " normals to " << args.output << '\n';
  return 0;
}

struct TrainArgs {
  std::string preset = "desk";
  int patches = 2000;
  int epochs = 30;
  int batch = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 7;
  std::string output;
  std::string loss_log;
};

int run_train(const TrainArgs& args) {
  if (args.preset != "desk") throw DataError("train: only the 'desk' preset is runnable here");
  MoeConfig config = MoeConfig::desk();
  config.seed = args.seed;

  CorpusOptions corpus_options;
  corpus_options.total_patches = args.patches;
  std::cout << "train: building corpus of " << args.patches << " patches\n";
  const SpecializationCorpus corpus =
      make_specialization_corpus(config, corpus_options, Rng::mix(args.seed, 0xc0));

  MoeModel model = MoeModel::build(config);
  TrainConfig train_config;
  train_config.epochs = args.epochs;
  train_config.batch_size = args.batch;
  train_config.adam.learning_rate = args.learning_rate;
  train_config.seed = Rng::mix(args.seed, 0xc1);

  std::cout << "train: " << args.epochs << " epochs over " << corpus.features.size()
            << " samples\n";
  const auto log = train_moe(model, corpus.features, corpus.targets, train_config);
  for (const TrainLogEntry& entry : log)
    if (entry.epoch % 5 == 0 || entry.epoch + 1 == static_cast<int>(log.size()))
      std::cout << "  epoch " << entry.epoch << " mean loss " << entry.mean_loss << '\n';

  model.save(args.output);
  if (!args.loss_log.empty()) {
    std::ofstream os(args.loss_log);
    if (!os) throw DataError("cannot open " + args.loss_log);
    os << "epoch,mean_loss\n";
    for (const TrainLogEntry& entry : log) os << entry.epoch << ',' << entry.mean_loss << '\n';
  }

  nlohmann::json resolved{{"preset", args.preset}, {"patches", args.patches},
                          {"epochs", args.epochs}, {"batch", args.batch},
                          {"learning_rate", args.learning_rate},
                          {"output", args.output}};
  write_manifest(args.output, "train", resolved, args.seed, 1);
  std::cout << "train: checkpoint saved to " << args.output << ".*\n";
  return 0;
}

struct EvalArgs {
  std::string inputs;
  std::string methods = "pca:18,pca:112,pca:450";
  std::string augmentations = "none";
  std::uint64_t seed = 0;
  int threads = 0;
  std::string output;
};

int run_eval(const EvalArgs& args) {
  namespace fs = std::filesystem;
  std::vector<BenchDataset> datasets;
  std::stringstream ss(args.inputs);
  std::string prefix;
  while (std::getline(ss, prefix, ',')) {
    if (prefix.empty()) continue;
    const fs::path input(prefix);
    LoadedShape shape = load_pcpnet(input.parent_path().string(), input.filename().string());
    if (!shape.cloud.has_normals())
      throw DataError("eval: dataset " + prefix + " lacks .normals ground truth");
    datasets.push_back({input.filename().string(), std::move(shape.cloud), std::move(shape.queries)});
  }
  if (datasets.empty()) throw DataError("eval: no datasets given");

  const std::vector<BenchMethod> methods = parse_methods(args.methods, args.seed);
  const std::vector<BenchAugmentation> augs = parse_augmentations(args.augmentations, args.seed);

  BenchOptions options;
  options.workers = args.threads;
  options.seed = args.seed;
  const EvalReport report = run_benchmark(methods, datasets, augs, options);

  nlohmann::json resolved{{"inputs", args.inputs}, {"methods", args.methods},
                          {"augmentations", args.augmentations}};
  write_report_csv(args.output + ".csv", report);
  write_report_json(args.output + ".json", report, resolved.dump());
  write_manifest(args.output, "eval", resolved, args.seed, report.workers);

  for (const EvalRow& row : report.rows)
    std::cout << row.method << " / " << row.augmentation << ": rms " << row.rms_deg
              << " deg, pgp10 " << row.pgp10 << ", failures " << row.n_failures << '\n';
  return 0;
}

struct BenchCliArgs {
  std::string grid_sizes = "2,4,8";
  std::string t_max_values = "128,256,512";
  int points = 20000;
  int queries = 200;
  double radius = 0.12;
  std::uint64_t seed = 0;
  std::string output;
};

int run_bench(const BenchCliArgs& args) {
  ShapeSpec spec;
  spec.kind = ShapeSpec::Kind::sphere;
  spec.count = args.points;
  spec.extents = {1.0};
  spec.seed = Rng::mix(args.seed, 0xb0);
  PointCloud cloud = generate(spec);
  // Fill the ball so patches reach t_max everywhere.
  Rng rng(Rng::mix(args.seed, 0xb1));
  for (Vec3& p : cloud.points) p *= std::cbrt(rng.uniform());
  cloud.recompute_bounds();

  std::vector<int> queries(static_cast<std::size_t>(std::min(args.queries, args.points)));
  const std::vector<int> picks = sample_without_replacement(
      args.points, static_cast<int>(queries.size()), rng);
  std::copy(picks.begin(), picks.end(), queries.begin());

  const std::vector<MupsTimingRow> rows =
      mups_timing_sweep(cloud, queries, parse_int_list(args.grid_sizes),
                        parse_int_list(args.t_max_values), args.radius, args.seed);

  std::ofstream os(args.output);
  if (!os) throw DataError("cannot open " + args.output);
  os << "m,k,t_max,k_times_t,ms_per_point\n";
  std::vector<double> x, y;
  for (const MupsTimingRow& row : rows) {
    os << row.m << ',' << row.m * row.m * row.m << ',' << row.t_max << ',' << row.k_times_t
       << ',' << row.ms_per_point << '\n';
    x.push_back(static_cast<double>(row.k_times_t));
    y.push_back(row.ms_per_point);
  }
  const double r2 = linear_fit_r2(x, y);
  std::cout << "bench: linear fit in K*T_max R^2 = " << r2 << '\n';

  nlohmann::json resolved{{"grid_sizes", args.grid_sizes}, {"t_max", args.t_max_values},
                          {"points", args.points},         {"queries", args.queries},
                          {"radius", args.radius},         {"r_squared", r2}};
  write_manifest(args.output, "bench", resolved, args.seed, 1);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Point-cloud normal estimation toolkit: multi-scale Fisher-vector "
               "features, mixture-of-experts estimator, geometric baselines"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic shape");
  synth_cmd->add_option("--shape", synth.shape, "plane|sphere|cylinder|box|wedge");
  synth_cmd->add_option("--count", synth.count, "surface sample count");
  synth_cmd->add_option("--extent", synth.extents, "comma list of extent parameters");
  synth_cmd->add_option("--angle", synth.angle, "wedge dihedral angle in degrees");
  synth_cmd->add_option("--seed", synth.seed, "random seed");
  synth_cmd->add_flag("--rotate", synth.rotate, "apply a seeded random rotation");
  synth_cmd->add_option("--noise", synth.noise, "gaussian sigma as bbox-diagonal fraction");
  synth_cmd->add_option("--density-gradient", synth.gradient, "axis,min_keep");
  synth_cmd->add_option("--density-stripes", synth.stripes, "axis,period_fraction,duty");
  synth_cmd->add_option("--queries", synth.queries, "emit a .pidx subset of this size");
  synth_cmd->add_option("-o,--output", synth.output, "output prefix")->required();

  FeatureArgs features;
  CLI::App* features_cmd = app.add_subcommand("features", "Encode multi-scale features");
  features_cmd->add_option("-i,--input", features.input, "dataset prefix")->required();
  features_cmd->add_option("--m", features.m, "Gaussian grid resolution");
  features_cmd->add_option("--scales", features.scales, "comma list of radius fractions");
  features_cmd->add_option("--tmax", features.t_max, "per-scale point cap");
  features_cmd->add_option("--seed", features.seed, "sampling seed");
  features_cmd->add_option("--threads", features.threads, "worker count");
  features_cmd->add_flag("--normalize-extrema", features.normalize_extrema,
                         "divide min/max channels by the point count too");
  features_cmd->add_option("-o,--output", features.output, "feature dump path")->required();
  features_cmd->add_option("--csv", features.csv, "also export a debug CSV");

  EstimateArgs estimate;
  CLI::App* estimate_cmd = app.add_subcommand("estimate", "Estimate normals");
  estimate_cmd->add_option("-i,--input", estimate.input, "dataset prefix")->required();
  estimate_cmd->add_option("--method", estimate.method, "pca|jet|moe");
  estimate_cmd->add_option("--k", estimate.k, "neighborhood size for pca/jet");
  estimate_cmd->add_option("--model", estimate.model, "checkpoint prefix for moe");
  estimate_cmd->add_option("--seed", estimate.seed, "sampling seed");
  estimate_cmd->add_option("--threads", estimate.threads, "worker count");
  estimate_cmd->add_option("-o,--output", estimate.output, ".normals output path")->required();

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the desk-scale estimator");
  train_cmd->add_option("--preset", train.preset, "configuration preset");
  train_cmd->add_option("--patches", train.patches, "corpus size");
  train_cmd->add_option("--epochs", train.epochs, "training epochs");
  train_cmd->add_option("--batch", train.batch, "batch size");
  train_cmd->add_option("--lr", train.learning_rate, "Adam learning rate");
  train_cmd->add_option("--seed", train.seed, "training seed");
  train_cmd->add_option("-o,--output", train.output, "checkpoint prefix")->required();
  train_cmd->add_option("--loss-log", train.loss_log, "per-epoch loss CSV");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Benchmark methods");
  eval_cmd->add_option("-i,--input", eval_args.inputs, "comma list of dataset prefixes")
      ->required();
  eval_cmd->add_option("--methods", eval_args.methods, "pca:k,jet:k,moe:prefix tokens");
  eval_cmd->add_option("--aug", eval_args.augmentations,
                       "none,noise:s,gradient:a:k,stripes:a:p:d tokens");
  eval_cmd->add_option("--seed", eval_args.seed, "seed");
  eval_cmd->add_option("--threads", eval_args.threads, "worker count");
  eval_cmd->add_option("-o,--output", eval_args.output, "report prefix")->required();

  BenchCliArgs bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Encoding-cost sweep over K and T_max");
  bench_cmd->add_option("--m", bench.grid_sizes, "comma list of grid resolutions");
  bench_cmd->add_option("--tmax", bench.t_max_values, "comma list of point caps");
  bench_cmd->add_option("--points", bench.points, "benchmark cloud size");
  bench_cmd->add_option("--queries", bench.queries, "timed query count");
  bench_cmd->add_option("--radius", bench.radius, "patch radius fraction");
  bench_cmd->add_option("--seed", bench.seed, "seed");
  bench_cmd->add_option("-o,--output", bench.output, "timing CSV path")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& help) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return 1;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (features_cmd->parsed()) return run_features(features);
    if (estimate_cmd->parsed()) return run_estimate(estimate);
    if (train_cmd->parsed()) return run_train(train);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (bench_cmd->parsed()) return run_bench(bench);
    std::cerr << "usage error: no subcommand\n";
    return 1;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return 2;
  } catch (const NumericError& err) {
    std::cerr << "numeric error: " << err.what() << '\n';
    return 3;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 3;
  }
}

}  // namespace nesti
