#pragma once

#include "nesti/common.hpp"
#include "nesti/rng.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace nesti {

// Computation happens in Real precision; checkpoint blobs are 32-bit floats.
using Real = double;

struct Tensor {
  std::vector<int> shape;
  std::vector<Real> values;
  std::vector<Real> grad;  // empty until alloc_grad()

  Tensor() = default;
  explicit Tensor(std::vector<int> shape_in, Real fill = 0.0);

  std::size_t size() const { return values.size(); }
  void alloc_grad();
  void zero_grad();
};

std::size_t shape_volume(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

// Declarative layer description. Convolutions use stride 1 and same-padding;
// pooling stride equals its window. An inception block runs two same-padded
// conv branches (kernel and kernel2, each with half the output channels) and
// concatenates them channel-wise.
struct LayerSpec {
  enum class Kind { conv3d, inception3d, maxpool3d, dense, relu, softmax };
  Kind kind = Kind::relu;
  int out_channels = 0;  // conv3d, inception3d
  int kernel = 0;        // conv3d, inception3d branch 1
  int kernel2 = 0;       // inception3d branch 2
  int window = 0;        // maxpool3d
  int units = 0;         // dense

  static LayerSpec Conv3d(int out_channels, int kernel);
  static LayerSpec Inception3d(int kernel1, int kernel2, int out_channels);
  static LayerSpec MaxPool3d(int window);
  static LayerSpec Dense(int units);
  static LayerSpec Relu();
  static LayerSpec Softmax();

  const char* kind_name() const;
};

class Layer;

// A feed-forward stack over 3D voxel tensors (channels, d, h, w) or flat
// vectors. Single-writer during training; forward-only use of an immutable
// instance is safe concurrently via forward_const.
class Network {
 public:
  Network();
  ~Network();
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  // Validates that the specs compose over input_shape, allocates parameters
  // and initializes them uniformly in +-sqrt(6 / (fan_in + fan_out)).
  static Network build(const std::vector<int>& input_shape,
                       const std::vector<LayerSpec>& specs, Rng& rng);

  Tensor forward(const Tensor& input);
  // Gradient of the loss w.r.t. the input; accumulates parameter gradients.
  // Must follow a forward call.
  Tensor backward(const Tensor& loss_gradient);
  // Stateless forward pass that keeps no activations; usable concurrently on
  // an immutable network.
  Tensor forward_const(const Tensor& input) const;

  std::vector<Tensor*> parameters();
  std::size_t parameter_count() const;
  void zero_grad();

  const std::vector<int>& input_shape() const;
  const std::vector<int>& output_shape() const;
  std::vector<LayerSpec> specs() const;

  // "NSTN" checkpoint: header, per-layer spec, then f32 parameter blobs.
  // save(load(path)) reproduces the file byte for byte.
  void save(const std::string& path) const;
  static Network load(const std::string& path);

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<int> input_shape_;
  std::vector<int> output_shape_;
  bool forward_done_ = false;
};

// Shape propagation without parameter allocation, for validating large
// presets cheaply. Throws naming the offending layer.
std::vector<int> propagate_shapes(const std::vector<int>& input_shape,
                                  const std::vector<LayerSpec>& specs);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // One in-place update from the gradients currently held by the parameters.
  // The parameter list must be the same on every call. Throws NumericError on
  // any non-finite gradient.
  void step(const std::vector<Tensor*>& params);
  void step(Network& net);

  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<std::vector<Real>> m_;
  std::vector<std::vector<Real>> v_;
};

// Loss head for gradient checking: maps the network output to a scalar and
// the gradient w.r.t. that output.
struct LossEval {
  double value = 0.0;
  Tensor gradient;
};
using LossFn = std::function<LossEval(const Tensor& output)>;

// Central finite differences over every parameter; returns the worst
// relative disagreement with the analytic gradients.
double grad_check(Network& net, const Tensor& input, const LossFn& loss,
                  double step = 1e-5);

}  // namespace nesti
