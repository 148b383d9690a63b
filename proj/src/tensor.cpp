#include "nesti/tensor.hpp"

#include "nesti/binio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace nesti {

Tensor::Tensor(std::vector<int> shape_in, Real fill)
    : shape(std::move(shape_in)), values(shape_volume(shape), fill) {}

void Tensor::alloc_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

std::size_t shape_volume(const std::vector<int>& shape) {
  std::size_t volume = 1;
  for (int d : shape) {
    if (d <= 0) throw DataError("tensor shape dimensions must be positive");
    volume *= static_cast<std::size_t>(d);
  }
  return volume;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

LayerSpec LayerSpec::Conv3d(int out_channels, int kernel) {
  LayerSpec s;
  s.kind = Kind::conv3d;
  s.out_channels = out_channels;
  s.kernel = kernel;
  return s;
}
LayerSpec LayerSpec::Inception3d(int kernel1, int kernel2, int out_channels) {
  LayerSpec s;
  s.kind = Kind::inception3d;
  s.kernel = kernel1;
  s.kernel2 = kernel2;
  s.out_channels = out_channels;
  return s;
}
LayerSpec LayerSpec::MaxPool3d(int window) {
  LayerSpec s;
  s.kind = Kind::maxpool3d;
  s.window = window;
  return s;
}
LayerSpec LayerSpec::Dense(int units) {
  LayerSpec s;
  s.kind = Kind::dense;
  s.units = units;
  return s;
}
LayerSpec LayerSpec::Relu() {
  LayerSpec s;
  s.kind = Kind::relu;
  return s;
}
LayerSpec LayerSpec::Softmax() {
  LayerSpec s;
  s.kind = Kind::softmax;
  return s;
}

const char* LayerSpec::kind_name() const {
  switch (kind) {
    case Kind::conv3d: return "conv3d";
    case Kind::inception3d: return "inception3d";
    case Kind::maxpool3d: return "maxpool3d";
    case Kind::dense: return "dense";
    case Kind::relu: return "relu";
    case Kind::softmax: return "softmax";
  }
  return "?";
}

namespace {

[[noreturn]] void layer_error(int layer_index, const LayerSpec& spec, const std::string& msg) {
  throw DataError("layer " + std::to_string(layer_index) + " (" + spec.kind_name() + "): " + msg);
}

double glorot_bound(int fan_in, int fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void init_uniform(Tensor& t, double bound, Rng& rng) {
  for (Real& v : t.values) v = static_cast<Real>(rng.uniform(-bound, bound));
}

bool is_voxel_shape(const std::vector<int>& shape) { return shape.size() == 4; }

}  // namespace

// ---------------------------------------------------------------------------
// Layers

class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(spec) {}
  virtual ~Layer() = default;

  const LayerSpec& spec() const { return spec_; }
  const std::vector<int>& in_shape() const { return in_shape_; }
  const std::vector<int>& out_shape() const { return out_shape_; }

  virtual void forward(const Tensor& in, Tensor& out, bool keep_state) = 0;
  virtual void backward(const Tensor& grad_out, Tensor& grad_in) = 0;
  virtual std::vector<Tensor*> params() { return {}; }
  virtual void init(Rng&) {}

 protected:
  LayerSpec spec_;
  std::vector<int> in_shape_;
  std::vector<int> out_shape_;

  friend class Network;
};

namespace {

class Conv3dLayer : public Layer {
 public:
  Conv3dLayer(const LayerSpec& spec, const std::vector<int>& in_shape, int layer_index)
      : Layer(spec) {
    if (!is_voxel_shape(in_shape))
      layer_error(layer_index, spec, "needs a (channels,d,h,w) input, got " +
                                         shape_to_string(in_shape));
    if (spec.out_channels < 1 || spec.kernel < 1)
      layer_error(layer_index, spec, "out_channels and kernel must be positive");
    in_shape_ = in_shape;
    out_shape_ = {spec.out_channels, in_shape[1], in_shape[2], in_shape[3]};
    weight_ = Tensor({spec.out_channels, in_shape[0], spec.kernel, spec.kernel, spec.kernel});
    bias_ = Tensor({spec.out_channels});
    weight_.alloc_grad();
    bias_.alloc_grad();
  }

  void init(Rng& rng) override {
    const int k3 = spec_.kernel * spec_.kernel * spec_.kernel;
    init_uniform(weight_, glorot_bound(in_shape_[0] * k3, spec_.out_channels * k3), rng);
  }

  void forward(const Tensor& in, Tensor& out, bool keep_state) override {
    if (keep_state) input_ = in;
    out = Tensor(out_shape_);
    const int ci = in_shape_[0], d = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    const int co = spec_.out_channels, k = spec_.kernel;
    const int pad = (k - 1) / 2;  // TF-style same padding, asymmetric for even k
    const Real* x = in.values.data();
    const Real* wt = weight_.values.data();
    Real* y = out.values.data();
    for (int oc = 0; oc < co; ++oc) {
      const Real b = bias_.values[static_cast<std::size_t>(oc)];
      for (int z = 0; z < d; ++z)
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx) {
            Real acc = b;
            for (int ic = 0; ic < ci; ++ic)
              for (int kz = 0; kz < k; ++kz) {
                const int iz = z + kz - pad;
                if (iz < 0 || iz >= d) continue;
                for (int ky = 0; ky < k; ++ky) {
                  const int iy = yy + ky - pad;
                  if (iy < 0 || iy >= h) continue;
                  for (int kx = 0; kx < k; ++kx) {
                    const int ix = xx + kx - pad;
                    if (ix < 0 || ix >= w) continue;
                    acc += wt[(((static_cast<std::size_t>(oc) * ci + ic) * k + kz) * k + ky) * k + kx] *
                           x[((static_cast<std::size_t>(ic) * d + iz) * h + iy) * w + ix];
                  }
                }
              }
            y[((static_cast<std::size_t>(oc) * d + z) * h + yy) * w + xx] = acc;
          }
    }
  }

  void backward(const Tensor& grad_out, Tensor& grad_in) override {
    grad_in = Tensor(in_shape_);
    const int ci = in_shape_[0], d = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    const int co = spec_.out_channels, k = spec_.kernel;
    const int pad = (k - 1) / 2;
    const Real* x = input_.values.data();
    const Real* wt = weight_.values.data();
    const Real* gy = grad_out.values.data();
    Real* gx = grad_in.values.data();
    Real* gw = weight_.grad.data();
    Real* gb = bias_.grad.data();
    for (int oc = 0; oc < co; ++oc) {
      for (int z = 0; z < d; ++z)
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx) {
            const Real g = gy[((static_cast<std::size_t>(oc) * d + z) * h + yy) * w + xx];
            if (g == 0.0) continue;
            gb[oc] += g;
            for (int ic = 0; ic < ci; ++ic)
              for (int kz = 0; kz < k; ++kz) {
                const int iz = z + kz - pad;
                if (iz < 0 || iz >= d) continue;
                for (int ky = 0; ky < k; ++ky) {
                  const int iy = yy + ky - pad;
                  if (iy < 0 || iy >= h) continue;
                  for (int kx = 0; kx < k; ++kx) {
                    const int ix = xx + kx - pad;
                    if (ix < 0 || ix >= w) continue;
                    const std::size_t wi =
                        (((static_cast<std::size_t>(oc) * ci + ic) * k + kz) * k + ky) * k + kx;
                    const std::size_t xi =
                        ((static_cast<std::size_t>(ic) * d + iz) * h + iy) * w + ix;
                    gw[wi] += g * x[xi];
                    gx[xi] += g * wt[wi];
                  }
                }
              }
          }
    }
  }

  std::vector<Tensor*> params() override { return {&weight_, &bias_}; }

  Tensor weight_;
  Tensor bias_;

 private:
  Tensor input_;
};

class Inception3dLayer : public Layer {
 public:
  Inception3dLayer(const LayerSpec& spec, const std::vector<int>& in_shape, int layer_index)
      : Layer(spec) {
    if (!is_voxel_shape(in_shape))
      layer_error(layer_index, spec, "needs a (channels,d,h,w) input, got " +
                                         shape_to_string(in_shape));
    if (spec.out_channels < 2 || spec.kernel < 1 || spec.kernel2 < 1)
      layer_error(layer_index, spec, "needs two kernels and >= 2 output channels");
    in_shape_ = in_shape;
    out_shape_ = {spec.out_channels, in_shape[1], in_shape[2], in_shape[3]};
    const int c1 = spec.out_channels / 2;
    const int c2 = spec.out_channels - c1;
    branch1_ = std::make_unique<Conv3dLayer>(LayerSpec::Conv3d(c1, spec.kernel), in_shape,
                                             layer_index);
    branch2_ = std::make_unique<Conv3dLayer>(LayerSpec::Conv3d(c2, spec.kernel2), in_shape,
                                             layer_index);
  }

  void init(Rng& rng) override {
    branch1_->init(rng);
    branch2_->init(rng);
  }

  void forward(const Tensor& in, Tensor& out, bool keep_state) override {
    Tensor out1, out2;
    branch1_->forward(in, out1, keep_state);
    branch2_->forward(in, out2, keep_state);
    out = Tensor(out_shape_);
    std::copy(out1.values.begin(), out1.values.end(), out.values.begin());
    std::copy(out2.values.begin(), out2.values.end(),
              out.values.begin() + static_cast<std::ptrdiff_t>(out1.values.size()));
  }

  void backward(const Tensor& grad_out, Tensor& grad_in) override {
    Tensor g1(branch1_->out_shape());
    Tensor g2(branch2_->out_shape());
    std::copy(grad_out.values.begin(),
              grad_out.values.begin() + static_cast<std::ptrdiff_t>(g1.values.size()),
              g1.values.begin());
    std::copy(grad_out.values.begin() + static_cast<std::ptrdiff_t>(g1.values.size()),
              grad_out.values.end(), g2.values.begin());
    Tensor gx1, gx2;
    branch1_->backward(g1, gx1);
    branch2_->backward(g2, gx2);
    grad_in = Tensor(in_shape_);
    for (std::size_t i = 0; i < grad_in.values.size(); ++i)
      grad_in.values[i] = gx1.values[i] + gx2.values[i];
  }

  std::vector<Tensor*> params() override {
    return {&branch1_->weight_, &branch1_->bias_, &branch2_->weight_, &branch2_->bias_};
  }

 private:
  std::unique_ptr<Conv3dLayer> branch1_;
  std::unique_ptr<Conv3dLayer> branch2_;
};

class MaxPool3dLayer : public Layer {
 public:
  MaxPool3dLayer(const LayerSpec& spec, const std::vector<int>& in_shape, int layer_index)
      : Layer(spec) {
    if (!is_voxel_shape(in_shape))
      layer_error(layer_index, spec, "needs a (channels,d,h,w) input, got " +
                                         shape_to_string(in_shape));
    if (spec.window < 1) layer_error(layer_index, spec, "window must be positive");
    for (int axis = 1; axis <= 3; ++axis)
      if (in_shape[static_cast<std::size_t>(axis)] % spec.window != 0)
        layer_error(layer_index, spec,
                    "spatial dims " + shape_to_string(in_shape) + " not divisible by window " +
                        std::to_string(spec.window));
    in_shape_ = in_shape;
    out_shape_ = {in_shape[0], in_shape[1] / spec.window, in_shape[2] / spec.window,
                  in_shape[3] / spec.window};
  }

  void forward(const Tensor& in, Tensor& out, bool keep_state) override {
    out = Tensor(out_shape_);
    if (keep_state) argmax_.assign(out.values.size(), 0);
    const int c = in_shape_[0], d = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    const int wd = spec_.window;
    const int od = out_shape_[1], oh = out_shape_[2], ow = out_shape_[3];
    for (int ch = 0; ch < c; ++ch)
      for (int z = 0; z < od; ++z)
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x) {
            Real best = -std::numeric_limits<Real>::infinity();
            std::size_t best_idx = 0;
            for (int kz = 0; kz < wd; ++kz)
              for (int ky = 0; ky < wd; ++ky)
                for (int kx = 0; kx < wd; ++kx) {
                  const std::size_t idx =
                      ((static_cast<std::size_t>(ch) * d + (z * wd + kz)) * h + (y * wd + ky)) * w +
                      (x * wd + kx);
                  if (in.values[idx] > best) {  // first maximum wins ties
                    best = in.values[idx];
                    best_idx = idx;
                  }
                }
            const std::size_t out_idx =
                ((static_cast<std::size_t>(ch) * od + z) * oh + y) * ow + x;
            out.values[out_idx] = best;
            if (keep_state) argmax_[out_idx] = best_idx;
          }
  }

  void backward(const Tensor& grad_out, Tensor& grad_in) override {
    grad_in = Tensor(in_shape_);
    for (std::size_t i = 0; i < grad_out.values.size(); ++i)
      grad_in.values[argmax_[i]] += grad_out.values[i];
  }

 private:
  std::vector<std::size_t> argmax_;
};

class DenseLayer : public Layer {
 public:
  DenseLayer(const LayerSpec& spec, const std::vector<int>& in_shape, int layer_index)
      : Layer(spec) {
    if (spec.units < 1) layer_error(layer_index, spec, "units must be positive");
    in_shape_ = in_shape;
    in_size_ = static_cast<int>(shape_volume(in_shape));
    out_shape_ = {spec.units};
    weight_ = Tensor({spec.units, in_size_});
    bias_ = Tensor({spec.units});
    weight_.alloc_grad();
    bias_.alloc_grad();
  }

  void init(Rng& rng) override {
    init_uniform(weight_, glorot_bound(in_size_, spec_.units), rng);
  }

  void forward(const Tensor& in, Tensor& out, bool keep_state) override {
    if (keep_state) input_ = in;
    out = Tensor(out_shape_);
    const Real* x = in.values.data();
    for (int o = 0; o < spec_.units; ++o) {
      const Real* row = weight_.values.data() + static_cast<std::size_t>(o) * in_size_;
      Real acc = bias_.values[static_cast<std::size_t>(o)];
      for (int i = 0; i < in_size_; ++i) acc += row[i] * x[i];
      out.values[static_cast<std::size_t>(o)] = acc;
    }
  }

  void backward(const Tensor& grad_out, Tensor& grad_in) override {
    grad_in = Tensor(in_shape_);
    const Real* x = input_.values.data();
    Real* gx = grad_in.values.data();
    for (int o = 0; o < spec_.units; ++o) {
      const Real g = grad_out.values[static_cast<std::size_t>(o)];
      bias_.grad[static_cast<std::size_t>(o)] += g;
      const Real* row = weight_.values.data() + static_cast<std::size_t>(o) * in_size_;
      Real* grow = weight_.grad.data() + static_cast<std::size_t>(o) * in_size_;
      for (int i = 0; i < in_size_; ++i) {
        grow[i] += g * x[i];
        gx[i] += g * row[i];
      }
    }
  }

  std::vector<Tensor*> params() override { return {&weight_, &bias_}; }

 private:
  int in_size_ = 0;
  Tensor weight_;
  Tensor bias_;
  Tensor input_;
};

class ReluLayer : public Layer {
 public:
  ReluLayer(const LayerSpec& spec, const std::vector<int>& in_shape) : Layer(spec) {
    in_shape_ = in_shape;
    out_shape_ = in_shape;
  }

  void forward(const Tensor& in, Tensor& out, bool keep_state) override {
    out = in;
    for (Real& v : out.values) v = v > 0.0 ? v : 0.0;
    if (keep_state) {
      mask_.assign(in.values.size(), 0);
      for (std::size_t i = 0; i < in.values.size(); ++i) mask_[i] = in.values[i] > 0.0;
    }
  }

  void backward(const Tensor& grad_out, Tensor& grad_in) override {
    grad_in = grad_out;
    for (std::size_t i = 0; i < grad_in.values.size(); ++i)
      if (!mask_[i]) grad_in.values[i] = 0.0;
  }

 private:
  std::vector<char> mask_;
};

class SoftmaxLayer : public Layer {
 public:
  SoftmaxLayer(const LayerSpec& spec, const std::vector<int>& in_shape) : Layer(spec) {
    in_shape_ = in_shape;
    out_shape_ = in_shape;
  }

  void forward(const Tensor& in, Tensor& out, bool keep_state) override {
    out = in;
    Real max_v = -std::numeric_limits<Real>::infinity();
    for (Real v : in.values) max_v = std::max(max_v, v);
    Real sum = 0.0;
    for (Real& v : out.values) {
      v = std::exp(v - max_v);
      sum += v;
    }
    for (Real& v : out.values) v /= sum;
    if (keep_state) output_ = out;
  }

  void backward(const Tensor& grad_out, Tensor& grad_in) override {
    grad_in = Tensor(in_shape_);
    Real dot = 0.0;
    for (std::size_t i = 0; i < output_.values.size(); ++i)
      dot += grad_out.values[i] * output_.values[i];
    for (std::size_t i = 0; i < output_.values.size(); ++i)
      grad_in.values[i] = output_.values[i] * (grad_out.values[i] - dot);
  }

 private:
  Tensor output_;
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const std::vector<int>& in_shape,
                                  int layer_index) {
  switch (spec.kind) {
    case LayerSpec::Kind::conv3d:
      return std::make_unique<Conv3dLayer>(spec, in_shape, layer_index);
    case LayerSpec::Kind::inception3d:
      return std::make_unique<Inception3dLayer>(spec, in_shape, layer_index);
    case LayerSpec::Kind::maxpool3d:
      return std::make_unique<MaxPool3dLayer>(spec, in_shape, layer_index);
    case LayerSpec::Kind::dense:
      return std::make_unique<DenseLayer>(spec, in_shape, layer_index);
    case LayerSpec::Kind::relu:
      return std::make_unique<ReluLayer>(spec, in_shape);
    case LayerSpec::Kind::softmax:
      return std::make_unique<SoftmaxLayer>(spec, in_shape);
  }
  throw DataError("unknown layer kind");
}

}  // namespace

// ---------------------------------------------------------------------------
// Network

Network::Network() = default;
Network::~Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;

Network Network::build(const std::vector<int>& input_shape,
                       const std::vector<LayerSpec>& specs, Rng& rng) {
  if (specs.empty()) throw DataError("Network::build: no layers");
  shape_volume(input_shape);  // validates positivity
  Network net;
  net.input_shape_ = input_shape;
  std::vector<int> shape = input_shape;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto layer = make_layer(specs[i], shape, static_cast<int>(i));
    layer->init(rng);
    shape = layer->out_shape();
    net.layers_.push_back(std::move(layer));
  }
  net.output_shape_ = shape;
  return net;
}

std::vector<int> propagate_shapes(const std::vector<int>& input_shape,
                                  const std::vector<LayerSpec>& specs) {
  std::vector<int> shape = input_shape;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    switch (specs[i].kind) {
      case LayerSpec::Kind::conv3d:
      case LayerSpec::Kind::inception3d: {
        if (shape.size() != 4)
          layer_error(static_cast<int>(i), specs[i],
                      "needs a (channels,d,h,w) input, got " + shape_to_string(shape));
        if (specs[i].out_channels < 1)
          layer_error(static_cast<int>(i), specs[i], "out_channels must be positive");
        shape = {specs[i].out_channels, shape[1], shape[2], shape[3]};
        break;
      }
      case LayerSpec::Kind::maxpool3d: {
        if (shape.size() != 4)
          layer_error(static_cast<int>(i), specs[i],
                      "needs a (channels,d,h,w) input, got " + shape_to_string(shape));
        if (specs[i].window < 1)
          layer_error(static_cast<int>(i), specs[i], "window must be positive");
        for (int axis = 1; axis <= 3; ++axis)
          if (shape[static_cast<std::size_t>(axis)] % specs[i].window != 0)
            layer_error(static_cast<int>(i), specs[i],
                        "spatial dims " + shape_to_string(shape) + " not divisible by window " +
                            std::to_string(specs[i].window));
        shape = {shape[0], shape[1] / specs[i].window, shape[2] / specs[i].window,
                 shape[3] / specs[i].window};
        break;
      }
      case LayerSpec::Kind::dense:
        if (specs[i].units < 1)
          layer_error(static_cast<int>(i), specs[i], "units must be positive");
        shape = {specs[i].units};
        break;
      case LayerSpec::Kind::relu:
      case LayerSpec::Kind::softmax:
        break;
    }
  }
  return shape;
}

Tensor Network::forward(const Tensor& input) {
  if (input.shape != input_shape_)
    throw DataError("Network::forward: input shape " + shape_to_string(input.shape) +
                    " does not match network input " + shape_to_string(input_shape_));
  Tensor current = input;
  for (auto& layer : layers_) {
    Tensor next;
    layer->forward(current, next, /*keep_state=*/true);
    current = std::move(next);
  }
  forward_done_ = true;
  return current;
}

Tensor Network::forward_const(const Tensor& input) const {
  if (input.shape != input_shape_)
    throw DataError("Network::forward_const: input shape " + shape_to_string(input.shape) +
                    " does not match network input " + shape_to_string(input_shape_));
  Tensor current = input;
  for (const auto& layer : layers_) {
    Tensor next;
    const_cast<Layer*>(layer.get())->forward(current, next, /*keep_state=*/false);
    current = std::move(next);
  }
  return current;
}

Tensor Network::backward(const Tensor& loss_gradient) {
  if (!forward_done_)
    throw NumericError("Network::backward called before forward");
  if (loss_gradient.shape != output_shape_)
    throw DataError("Network::backward: gradient shape " +
                    shape_to_string(loss_gradient.shape) + " does not match output " +
                    shape_to_string(output_shape_));
  Tensor current = loss_gradient;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    Tensor next;
    (*it)->backward(current, next);
    current = std::move(next);
  }
  return current;
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_)
    for (Tensor* p : layer->params()) out.push_back(p);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers_)
    for (Tensor* p : const_cast<Layer*>(layer.get())->params()) count += p->size();
  return count;
}

void Network::zero_grad() {
  for (Tensor* p : parameters()) {
    p->alloc_grad();
    p->zero_grad();
  }
}

const std::vector<int>& Network::input_shape() const { return input_shape_; }
const std::vector<int>& Network::output_shape() const { return output_shape_; }

std::vector<LayerSpec> Network::specs() const {
  std::vector<LayerSpec> out;
  out.reserve(layers_.size());
  for (const auto& layer : layers_) out.push_back(layer->spec());
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCheckpointMagic[4] = {'N', 'S', 'T', 'N'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_spec(std::ostream& os, const LayerSpec& spec) {
  write_u32(os, static_cast<std::uint32_t>(spec.kind));
  write_u32(os, static_cast<std::uint32_t>(spec.out_channels));
  write_u32(os, static_cast<std::uint32_t>(spec.kernel));
  write_u32(os, static_cast<std::uint32_t>(spec.kernel2));
  write_u32(os, static_cast<std::uint32_t>(spec.window));
  write_u32(os, static_cast<std::uint32_t>(spec.units));
}

LayerSpec read_spec(std::istream& is) {
  LayerSpec spec;
  const std::uint32_t kind = read_u32(is);
  if (kind > static_cast<std::uint32_t>(LayerSpec::Kind::softmax))
    throw DataError("checkpoint: unknown layer kind");
  spec.kind = static_cast<LayerSpec::Kind>(kind);
  spec.out_channels = static_cast<int>(read_u32(is));
  spec.kernel = static_cast<int>(read_u32(is));
  spec.kernel2 = static_cast<int>(read_u32(is));
  spec.window = static_cast<int>(read_u32(is));
  spec.units = static_cast<int>(read_u32(is));
  return spec;
}

}  // namespace

void Network::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("Network::save: cannot open " + path);
  write_magic(os, kCheckpointMagic);
  write_u32(os, kCheckpointVersion);
  write_u32(os, static_cast<std::uint32_t>(layers_.size()));
  write_u32(os, static_cast<std::uint32_t>(input_shape_.size()));
  for (int d : input_shape_) write_u32(os, static_cast<std::uint32_t>(d));
  for (const auto& layer : layers_) {
    write_spec(os, layer->spec());
    for (Tensor* p : const_cast<Layer*>(layer.get())->params())
      for (Real v : p->values) write_f32(os, static_cast<float>(v));
  }
  if (!os) throw DataError("Network::save: write failed for " + path);
}

Network Network::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("Network::load: cannot open " + path);
  expect_magic(is, kCheckpointMagic, "checkpoint");
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    throw DataError("Network::load: unsupported version " + std::to_string(version));
  const std::uint32_t layer_count = read_u32(is);
  const std::uint32_t rank = read_u32(is);
  if (rank == 0 || rank > 8) throw DataError("Network::load: corrupt input shape");
  std::vector<int> input_shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) input_shape[i] = static_cast<int>(read_u32(is));

  Network net;
  net.input_shape_ = input_shape;
  std::vector<int> shape = input_shape;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const LayerSpec spec = read_spec(is);
    auto layer = make_layer(spec, shape, static_cast<int>(i));
    for (Tensor* p : layer->params())
      for (Real& v : p->values) v = static_cast<Real>(read_f32(is));
    shape = layer->out_shape();
    net.layers_.push_back(std::move(layer));
  }
  net.output_shape_ = shape;
  return net;
}

// ---------------------------------------------------------------------------
// Optimizer

void Adam::step(Network& net) {
  const std::vector<Tensor*> params = net.parameters();
  step(params);
}

void Adam::step(const std::vector<Tensor*>& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i]->size(), 0.0);
      v_[i].assign(params[i]->size(), 0.0);
    }
  }
  if (m_.size() != params.size())
    throw DataError("Adam::step: optimizer bound to a different network");

  for (const Tensor* p : params) {
    if (p->grad.size() != p->values.size())
      throw DataError("Adam::step: missing gradients; run backward first");
    for (Real g : p->grad)
      if (!std::isfinite(g)) throw NumericError("non-finite gradient");
  }

  ++t_;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    for (std::size_t j = 0; j < p.values.size(); ++j) {
      const double g = p.grad[j];
      m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g;
      v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m_[i][j] / bias1;
      const double v_hat = v_[i][j] / bias2;
      p.values[j] -= static_cast<Real>(config_.learning_rate * m_hat /
                                       (std::sqrt(v_hat) + config_.epsilon));
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient checking

double grad_check(Network& net, const Tensor& input, const LossFn& loss, double step) {
  net.zero_grad();
  const Tensor output = net.forward(input);
  const LossEval eval = loss(output);
  net.backward(eval.gradient);

  std::vector<Tensor*> params = net.parameters();
  std::vector<std::vector<Real>> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params) analytic.push_back(p->grad);

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    for (std::size_t j = 0; j < p.values.size(); ++j) {
      const Real saved = p.values[j];
      p.values[j] = saved + static_cast<Real>(step);
      const double plus = loss(net.forward_const(input)).value;
      p.values[j] = saved - static_cast<Real>(step);
      const double minus = loss(net.forward_const(input)).value;
      p.values[j] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[pi][j];
      const double scale = std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a - numeric) / scale);
    }
  }
  return worst;
}

}  // namespace nesti
