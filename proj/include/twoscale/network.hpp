#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "twoscale/error.hpp"
#include "twoscale/layers.hpp"
#include "twoscale/rng.hpp"
#include "twoscale/tensor.hpp"

namespace twoscale {

enum class Activation { ReLU, Abs };

// Layer descriptions. Input extents are inferred when the network is built,
// so a spec only pins what the layer adds: output width for fully connected
// layers, kernel geometry for convolutions, the window for pooling.
struct FullyConnected {
  std::size_t out = 0;
  bool bias = false;
};
struct Convolution {
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  bool bias = false;
};
struct MaxPool {
  std::size_t window = 0;
};
struct Activate {
  Activation kind = Activation::ReLU;
};
using LayerSpec = std::variant<FullyConnected, Convolution, MaxPool, Activate>;

struct NetworkSpec {
  std::vector<std::size_t> input_shape;
  std::vector<LayerSpec> layers;
};

// Numerically stable softmax. Throws on non-finite inputs or fewer than two
// classes; the output is a strictly positive probability vector.
inline std::vector<double> softmax(std::span<const double> z) {
  if (z.size() < 2) throw InvalidInput("softmax: need at least two classes");
  double zmax = z[0];
  for (double v : z) {
    if (!std::isfinite(v)) throw InvalidInput("softmax: non-finite input");
    if (v > zmax) zmax = v;
  }
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// Per-layer intermediate values captured by a forward pass. `version` pins
// the parameter state the cache was computed against; backward refuses a
// stale cache.
struct ForwardCache {
  std::uint64_t version = 0;
  std::vector<std::vector<double>> inputs;        // input to each layer
  std::vector<std::vector<std::size_t>> argmax;   // per maxpool layer
  std::vector<double> logits;
};

// A feedforward network: a layer chain mapping an input tensor to K raw
// logits (no terminal softmax; callers scale and normalize logits as they
// see fit). Parameters are stored per parameterized layer, in declaration
// order, as flat row-major blocks.
class Network {
 public:
  explicit Network(NetworkSpec spec) : spec_(std::move(spec)) { resolve(); }

  const NetworkSpec& spec() const { return spec_; }

  // Number of parameterized layers; also the positive-homogeneity degree of
  // the logit map for bias-free networks.
  std::size_t degree() const { return params_.size(); }
  std::size_t class_count() const { return class_count_; }
  bool bias_free() const { return bias_free_; }

  const std::vector<std::vector<double>>& params() const { return params_; }

  void set_params(std::vector<std::vector<double>> params) {
    if (params.size() != params_.size()) {
      throw InvalidInput("set_params: expected " + std::to_string(params_.size()) +
                         " parameter blocks, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].size() != params_[i].size()) {
        throw InvalidInput("set_params: block " + std::to_string(i) + " has " +
                           std::to_string(params[i].size()) + " values, expected " +
                           std::to_string(params_[i].size()));
      }
    }
    params_ = std::move(params);
    ++version_;
  }

  // Mutable access bumps the parameter version: any existing forward cache
  // becomes stale.
  std::vector<std::vector<double>>& mutable_params() {
    ++version_;
    return params_;
  }

  // Multiplies every parameter by c.
  void scale_params(double c) {
    if (!std::isfinite(c)) throw InvalidInput("scale_params: non-finite factor");
    for (auto& block : params_) {
      for (double& v : block) v *= c;
    }
    ++version_;
  }

  std::uint64_t param_version() const { return version_; }

  // Draws every weight from a zero-mean Gaussian. A positive `std` is used
  // verbatim for all layers; otherwise each layer uses sqrt(2 / fan_in).
  // Biases, when enabled, start at zero.
  void init_gaussian(std::uint64_t seed, double std_override = 0.0) {
    Rng rng(seed);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const ResolvedLayer& rl = layers_[l];
      if (rl.param_index < 0) continue;
      auto& block = params_[static_cast<std::size_t>(rl.param_index)];
      const double sigma =
          std_override > 0.0 ? std_override : std::sqrt(2.0 / static_cast<double>(rl.fan_in));
      for (std::size_t i = 0; i < rl.weight_count; ++i) block[i] = sigma * rng.gaussian();
      for (std::size_t i = rl.weight_count; i < block.size(); ++i) block[i] = 0.0;
    }
    ++version_;
  }

  struct Forward {
    std::vector<double> logits;
    ForwardCache cache;
  };

  Forward forward(const Tensor& input) const {
    if (input.shape != spec_.input_shape) {
      throw InvalidInput("forward: input shape " + shape_string(input.shape) +
                         " does not match network input " + shape_string(spec_.input_shape));
    }
    Forward out;
    out.cache.version = version_;
    out.cache.inputs.reserve(layers_.size());
    std::vector<double> cur = input.values;
    for (const ResolvedLayer& rl : layers_) {
      std::vector<double> next(rl.out_count);
      switch (rl.kind) {
        case Kind::Fc:
          fc_forward(rl.fc_in, rl.fc_out, rl.bias,
                     params_[static_cast<std::size_t>(rl.param_index)], cur, next);
          break;
        case Kind::Conv:
          conv_forward(rl.conv, params_[static_cast<std::size_t>(rl.param_index)], cur, next);
          break;
        case Kind::Pool: {
          std::vector<std::size_t> argmax(rl.out_count);
          maxpool_forward(rl.pool, cur, next, argmax);
          out.cache.argmax.push_back(std::move(argmax));
          break;
        }
        case Kind::Act:
          if (rl.activation == Activation::ReLU) {
            relu_forward(cur, next);
          } else {
            abs_forward(cur, next);
          }
          break;
      }
      out.cache.inputs.push_back(std::move(cur));
      cur = std::move(next);
    }
    for (double v : cur) {
      if (!std::isfinite(v)) throw InvalidState("forward: non-finite logit");
    }
    out.cache.logits = cur;
    out.logits = std::move(cur);
    return out;
  }

  // Pullback of the logit map: given dL/dlogits, returns dL/dparams laid out
  // exactly like params(). The cache must come from a forward pass at the
  // current parameter version.
  std::vector<std::vector<double>> backward(const ForwardCache& cache,
                                            std::span<const double> dlogits) const {
    std::vector<std::vector<double>> grads;
    grads.reserve(params_.size());
    for (const auto& block : params_) grads.emplace_back(block.size(), 0.0);
    backward_accumulate(cache, dlogits, grads);
    return grads;
  }

  // Same pullback, but adds into caller-owned gradient blocks (shaped like
  // params()); lets batch loops reuse one accumulator.
  void backward_accumulate(const ForwardCache& cache, std::span<const double> dlogits,
                           std::vector<std::vector<double>>& grads) const {
    if (cache.version != version_) {
      throw InvalidState("backward: stale forward cache (parameters changed)");
    }
    if (dlogits.size() != class_count_) {
      throw InvalidInput("backward: gradient has " + std::to_string(dlogits.size()) +
                         " entries, expected " + std::to_string(class_count_));
    }
    if (grads.size() != params_.size()) {
      throw InvalidInput("backward: accumulator has wrong block count");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (grads[i].size() != params_[i].size()) {
        throw InvalidInput("backward: accumulator block " + std::to_string(i) +
                           " has wrong size");
      }
    }

    std::vector<double> dout(dlogits.begin(), dlogits.end());
    std::size_t pool_i = cache.argmax.size();
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const ResolvedLayer& rl = layers_[li];
      const std::vector<double>& x = cache.inputs[li];
      std::vector<double> din(x.size(), 0.0);
      switch (rl.kind) {
        case Kind::Fc:
          fc_backward(rl.fc_in, rl.fc_out, rl.bias,
                      params_[static_cast<std::size_t>(rl.param_index)], x, dout,
                      grads[static_cast<std::size_t>(rl.param_index)], din);
          break;
        case Kind::Conv:
          conv_backward(rl.conv, params_[static_cast<std::size_t>(rl.param_index)], x, dout,
                        grads[static_cast<std::size_t>(rl.param_index)], din);
          break;
        case Kind::Pool:
          maxpool_backward(cache.argmax[--pool_i], dout, din);
          break;
        case Kind::Act:
          if (rl.activation == Activation::ReLU) {
            relu_backward(x, dout, din);
          } else {
            abs_backward(x, dout, din);
          }
          break;
      }
      dout = std::move(din);
    }
  }

 private:
  enum class Kind { Fc, Conv, Pool, Act };

  struct ResolvedLayer {
    Kind kind = Kind::Act;
    int param_index = -1;
    std::size_t out_count = 0;
    std::size_t weight_count = 0;  // parameter entries excluding bias
    std::size_t fan_in = 0;
    // fully connected
    std::size_t fc_in = 0, fc_out = 0;
    bool bias = false;
    // convolution / pooling
    ConvGeometry conv;
    PoolGeometry pool;
    Activation activation = Activation::ReLU;
  };

  void resolve() {
    if (spec_.layers.empty()) throw InvalidConfig("network: no layers");
    if (spec_.input_shape.empty() || shape_count(spec_.input_shape) == 0) {
      throw InvalidConfig("network: bad input shape " + shape_string(spec_.input_shape));
    }
    std::vector<std::size_t> shape = spec_.input_shape;
    int last_param_layer = -1;
    for (std::size_t li = 0; li < spec_.layers.size(); ++li) {
      ResolvedLayer rl;
      const LayerSpec& ls = spec_.layers[li];
      if (const auto* fc = std::get_if<FullyConnected>(&ls)) {
        if (fc->out == 0) throw InvalidConfig("fc: zero output width");
        rl.kind = Kind::Fc;
        rl.fc_in = shape_count(shape);
        rl.fc_out = fc->out;
        rl.bias = fc->bias;
        rl.weight_count = rl.fc_in * rl.fc_out;
        rl.fan_in = rl.fc_in;
        rl.param_index = static_cast<int>(params_.size());
        params_.emplace_back(rl.weight_count + (fc->bias ? fc->out : 0), 0.0);
        if (fc->bias) bias_free_ = false;
        shape = {fc->out};
        last_param_layer = static_cast<int>(li);
      } else if (const auto* cv = std::get_if<Convolution>(&ls)) {
        if (shape.size() != 3) {
          throw InvalidConfig("conv: needs a (channels, height, width) input, got " +
                              shape_string(shape));
        }
        rl.kind = Kind::Conv;
        rl.conv = ConvGeometry{shape[0], shape[1], shape[2],
                               cv->out_channels, cv->kernel, cv->bias};
        rl.conv.validate();
        rl.weight_count = rl.conv.weight_count();
        rl.fan_in = shape[0] * cv->kernel * cv->kernel;
        rl.param_index = static_cast<int>(params_.size());
        params_.emplace_back(rl.conv.param_count(), 0.0);
        if (cv->bias) bias_free_ = false;
        shape = {cv->out_channels, rl.conv.out_h(), rl.conv.out_w()};
        last_param_layer = static_cast<int>(li);
      } else if (const auto* mp = std::get_if<MaxPool>(&ls)) {
        rl.kind = Kind::Pool;
        rl.pool = PoolGeometry{mp->window, shape};
        shape = rl.pool.out_shape();
      } else {
        rl.kind = Kind::Act;
        rl.activation = std::get<Activate>(ls).kind;
      }
      rl.out_count = shape_count(shape);
      layers_.push_back(std::move(rl));
    }
    if (params_.empty()) throw InvalidConfig("network: no parameterized layers");
    if (shape.size() != 1 || shape[0] < 2) {
      throw InvalidConfig("network: output must be a vector of at least two logits, got " +
                          shape_string(shape));
    }
    // The class scores must come straight from the last parameterized layer
    // (possibly through activations); pooling after it would re-index them.
    for (std::size_t li = static_cast<std::size_t>(last_param_layer) + 1;
         li < layers_.size(); ++li) {
      if (layers_[li].kind == Kind::Pool) {
        throw InvalidConfig("network: pooling after the last parameterized layer");
      }
    }
    class_count_ = shape[0];
  }

  NetworkSpec spec_;
  std::vector<ResolvedLayer> layers_;
  std::vector<std::vector<double>> params_;
  std::size_t class_count_ = 0;
  bool bias_free_ = true;
  std::uint64_t version_ = 0;
};

}  // namespace twoscale
