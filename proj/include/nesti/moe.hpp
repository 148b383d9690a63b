#pragma once

#include "nesti/cloud.hpp"
#include "nesti/common.hpp"
#include "nesti/fv.hpp"
#include "nesti/tensor.hpp"

#include <atomic>
#include <string>
#include <vector>

namespace nesti {

// Network architecture presets, keyed by name:
//   "tiny" - dense/conv heads for gradient-check sized models
//   "desk" - laptop-scale conv + dense stacks (the trained configuration)
//   "full" - inception stacks with four dense layers, the production-scale
//            configuration; encoded for completeness, not trained here
std::vector<LayerSpec> gate_preset(const std::string& name, int n_experts);
std::vector<LayerSpec> expert_preset(const std::string& name);

struct MoeConfig {
  std::vector<ScaleSpec> scales;               // ascending radii
  int m = 4;                                   // Gaussian grid resolution
  std::vector<std::vector<int>> expert_scales; // wiring: expert -> scale subset
  std::string gate_arch = "desk";
  std::string expert_arch = "desk";
  bool normalize_extrema = false;
  std::uint64_t seed = 1;

  int n_scales() const { return static_cast<int>(scales.size()); }
  int n_experts() const { return static_cast<int>(expert_scales.size()); }
  void validate() const;

  // 3 experts, one per scale {1%, 3%, 5%}, m = 4, t_max 128.
  static MoeConfig desk();
  // 7 experts: two per scale plus one over all scales, m = 8, t_max 512.
  static MoeConfig paper();
  // Gradient-check scale: 2 scales, 3 experts ({0}, {1}, {0,1}), m = 2.
  static MoeConfig tiny();

  std::string to_json_string() const;
  static MoeConfig from_json_string(const std::string& text);
};

// Gate plus expert networks over a shared tensor engine. Inference-side
// expert evaluations are counted so the one-expert-per-query contract is
// checkable.
class MoeModel {
 public:
  static MoeModel build(const MoeConfig& config);

  const MoeConfig& config() const { return config_; }
  Network& gate() { return gate_; }
  std::vector<Network>& experts() { return experts_; }

  Tensor gate_input(const MupsFeature& feature) const;
  Tensor expert_input(const MupsFeature& feature, int expert) const;

  // Runs one expert forward (stateless pass), counting the evaluation.
  // Safe to call concurrently.
  Tensor eval_expert(int expert, const Tensor& input);

  long expert_eval_count(int expert) const {
    return eval_counts_[static_cast<std::size_t>(expert)].load();
  }
  long total_expert_evals() const;
  void reset_eval_counts();

  // Checkpointing: <prefix>.gate.nstn, <prefix>.expert<k>.nstn and a
  // <prefix>.json sidecar carrying the config.
  void save(const std::string& prefix) const;
  static MoeModel load(const std::string& prefix);

 private:
  MoeConfig config_;
  Network gate_;
  std::vector<Network> experts_;
  std::vector<std::atomic<long>> eval_counts_;
};

// Eq.-style specialization objective: every expert predicts, the gate weighs
// the per-expert sine errors. sin(theta) is computed as the cross-product
// magnitude over the norms, so the loss ignores normal orientation.
struct MoeLossResult {
  double loss = 0.0;
  std::vector<double> expert_sin;  // D per expert
  std::vector<double> q;           // gate distribution
};

MoeLossResult moe_loss(MoeModel& model, const MupsFeature& feature, const Vec3& target);

struct TrainBatch {
  std::vector<const MupsFeature*> features;
  std::vector<Vec3> targets;

  void validate() const;
};

// One optimizer step on the mean specialization loss over the batch; gate and
// experts update jointly. Returns the mean loss. The rng parameter is
// reserved for stochastic regularizers; the step itself is deterministic.
double train_step(MoeModel& model, const TrainBatch& batch, Adam& optimizer, Rng& rng);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  AdamConfig adam;
  // Gate learning rate relative to the experts'. A slow router lets the
  // experts differentiate on merit before routing hardens.
  double gate_lr_scale = 1.0;
  std::uint64_t seed = 7;
};

struct TrainLogEntry {
  int epoch = 0;
  double mean_loss = 0.0;
};

// Epoch loop with seeded shuffling over the sample pool.
std::vector<TrainLogEntry> train_moe(MoeModel& model,
                                     const std::vector<MupsFeature>& features,
                                     const std::vector<Vec3>& targets,
                                     const TrainConfig& config);

struct MoePrediction {
  Vec3 normal = Vec3::UnitZ();
  int expert_index = 0;
  std::vector<double> q;
};

// Argmax-gated inference: exactly one expert runs. Gate ties break toward the
// lowest expert index.
MoePrediction predict_normal(MoeModel& model, const MupsFeature& feature);

struct ExpertStat {
  long count = 0;
  double mean_error_deg = 0.0;
};

// Routes every sample through the argmax gate and aggregates unoriented
// angle errors per expert.
std::vector<ExpertStat> expert_stats(MoeModel& model,
                                     const std::vector<MupsFeature>& features,
                                     const std::vector<Vec3>& targets);

// Finite-difference check of the full gate + experts loss on one sample.
double moe_grad_check(MoeModel& model, const MupsFeature& feature, const Vec3& target,
                      double step = 1e-5);

// Mixed specialization corpus: noisy planes plus clean right-angle wedges,
// with per-sample category labels.
enum class SampleKind : int { noisy_plane = 0, wedge_crease = 1, wedge_face = 2 };

struct SpecializationCorpus {
  std::vector<MupsFeature> features;
  std::vector<Vec3> targets;
  std::vector<SampleKind> kinds;
};

struct CorpusOptions {
  int total_patches = 2000;
  double plane_fraction = 0.5;
  double crease_fraction = 0.7;  // of wedge queries, taken near the crease
  double noise_sigma = 0.012;    // plane noise, fraction of bbox diagonal
  int plane_points = 20000;
  int wedge_points = 120000;  // dense enough that the 1% scale stays informative
  double crease_band = 1.0;   // near-crease half-width, in smallest-radius units
  int clouds_per_family = 8;
};

SpecializationCorpus make_specialization_corpus(const MoeConfig& config,
                                                const CorpusOptions& options,
                                                std::uint64_t seed);

}  // namespace nesti
