#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "twoscale/error.hpp"

// Layer arithmetic primitives. Each forward has a matching backward that
// accumulates input gradients (and parameter gradients where applicable)
// given the gradient with respect to the forward output. Backwards are exact
// adjoints of the forwards: for the piecewise-linear activations the
// one-sided derivative at the kink is taken to be zero.

namespace twoscale {

inline void relu_forward(std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

inline void relu_backward(std::span<const double> x, std::span<const double> dy,
                          std::span<double> dx) {
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

inline void abs_forward(std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] < 0.0 ? -x[i] : x[i];
}

inline void abs_backward(std::span<const double> x, std::span<const double> dy,
                         std::span<double> dx) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    dx[i] = x[i] > 0.0 ? dy[i] : (x[i] < 0.0 ? -dy[i] : 0.0);
  }
}

// Fully connected layer: y = W x (+ b). W is row-major (out x in); the
// optional bias occupies the last `out` entries of the parameter block.
inline void fc_forward(std::size_t in, std::size_t out, bool bias,
                       std::span<const double> params, std::span<const double> x,
                       std::span<double> y) {
  for (std::size_t r = 0; r < out; ++r) {
    const double* row = params.data() + r * in;
    double acc = 0.0;
    for (std::size_t c = 0; c < in; ++c) acc += row[c] * x[c];
    y[r] = bias ? acc + params[out * in + r] : acc;
  }
}

inline void fc_backward(std::size_t in, std::size_t out, bool bias,
                        std::span<const double> params, std::span<const double> x,
                        std::span<const double> dy, std::span<double> dparams,
                        std::span<double> dx) {
  for (std::size_t r = 0; r < out; ++r) {
    const double g = dy[r];
    double* drow = dparams.data() + r * in;
    for (std::size_t c = 0; c < in; ++c) drow[c] += g * x[c];
    if (bias) dparams[out * in + r] += g;
  }
  for (std::size_t c = 0; c < in; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < out; ++r) acc += params[r * in + c] * dy[r];
    dx[c] = acc;
  }
}

// Valid-padding, stride-1 cross-correlation on (channels, height, width)
// inputs. Kernels are stored (out_c, in_c, ky, kx) row-major; the optional
// per-output-channel bias occupies the last `out_c` parameter entries.
struct ConvGeometry {
  std::size_t in_c = 0, in_h = 0, in_w = 0;
  std::size_t out_c = 0, kernel = 0;
  bool bias = false;

  std::size_t out_h() const { return in_h - kernel + 1; }
  std::size_t out_w() const { return in_w - kernel + 1; }
  std::size_t weight_count() const { return out_c * in_c * kernel * kernel; }
  std::size_t param_count() const { return weight_count() + (bias ? out_c : 0); }

  void validate() const {
    if (in_c == 0 || out_c == 0 || kernel == 0) {
      throw InvalidConfig("conv: channels and kernel must be positive");
    }
    if (in_h < kernel || in_w < kernel) {
      throw InvalidConfig("conv: kernel " + std::to_string(kernel) +
                          " exceeds input " + std::to_string(in_h) + "x" +
                          std::to_string(in_w));
    }
  }
};

inline void conv_forward(const ConvGeometry& g, std::span<const double> params,
                         std::span<const double> x, std::span<double> y) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (std::size_t oc = 0; oc < g.out_c; ++oc) {
    const double b = g.bias ? params[g.weight_count() + oc] : 0.0;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = b;
        for (std::size_t ic = 0; ic < g.in_c; ++ic) {
          const double* kern = params.data() + ((oc * g.in_c + ic) * k) * k;
          const double* plane = x.data() + ic * g.in_h * g.in_w;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const double* row = plane + (oy + ky) * g.in_w + ox;
            const double* krow = kern + ky * k;
            for (std::size_t kx = 0; kx < k; ++kx) acc += krow[kx] * row[kx];
          }
        }
        y[(oc * oh + oy) * ow + ox] = acc;
      }
    }
  }
}

inline void conv_backward(const ConvGeometry& g, std::span<const double> params,
                          std::span<const double> x, std::span<const double> dy,
                          std::span<double> dparams, std::span<double> dx) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  std::fill(dx.begin(), dx.end(), 0.0);
  for (std::size_t oc = 0; oc < g.out_c; ++oc) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double gout = dy[(oc * oh + oy) * ow + ox];
        if (g.bias) dparams[g.weight_count() + oc] += gout;
        for (std::size_t ic = 0; ic < g.in_c; ++ic) {
          const std::size_t kbase = ((oc * g.in_c + ic) * k) * k;
          const std::size_t pbase = ic * g.in_h * g.in_w;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::size_t row = pbase + (oy + ky) * g.in_w + ox;
            for (std::size_t kx = 0; kx < k; ++kx) {
              dparams[kbase + ky * k + kx] += gout * x[row + kx];
              dx[row + kx] += gout * params[kbase + ky * k + kx];
            }
          }
        }
      }
    }
  }
}

// Non-overlapping max pooling. Rank-1 inputs are pooled in windows of
// `window` consecutive values; rank-3 inputs (channels, height, width) are
// pooled per channel in window x window tiles with stride equal to the
// window. Input extents must be divisible by the window. Ties go to the
// lowest flat index; `argmax` records the chosen flat input index per output
// so the backward can route gradients exactly.
struct PoolGeometry {
  std::size_t window = 0;
  std::vector<std::size_t> in_shape;

  std::vector<std::size_t> out_shape() const {
    if (window == 0) throw InvalidConfig("maxpool: window must be positive");
    if (in_shape.size() == 1) {
      if (in_shape[0] % window != 0) {
        throw InvalidConfig("maxpool: length " + std::to_string(in_shape[0]) +
                            " not divisible by window " + std::to_string(window));
      }
      return {in_shape[0] / window};
    }
    if (in_shape.size() == 3) {
      if (in_shape[1] % window != 0 || in_shape[2] % window != 0) {
        throw InvalidConfig("maxpool: input " + std::to_string(in_shape[1]) + "x" +
                            std::to_string(in_shape[2]) + " not divisible by window " +
                            std::to_string(window));
      }
      return {in_shape[0], in_shape[1] / window, in_shape[2] / window};
    }
    throw InvalidConfig("maxpool: rank-" + std::to_string(in_shape.size()) +
                        " input not supported");
  }
};

inline void maxpool_forward(const PoolGeometry& g, std::span<const double> x,
                            std::span<double> y, std::span<std::size_t> argmax) {
  const std::size_t w = g.window;
  if (g.in_shape.size() == 1) {
    const std::size_t n = g.in_shape[0] / w;
    for (std::size_t o = 0; o < n; ++o) {
      std::size_t best = o * w;
      for (std::size_t i = o * w + 1; i < (o + 1) * w; ++i) {
        if (x[i] > x[best]) best = i;
      }
      y[o] = x[best];
      argmax[o] = best;
    }
    return;
  }
  const std::size_t h = g.in_shape[1], wid = g.in_shape[2];
  const std::size_t oh = h / w, ow = wid / w;
  for (std::size_t c = 0; c < g.in_shape[0]; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (c * h + oy * w) * wid + ox * w;
        for (std::size_t dy = 0; dy < w; ++dy) {
          for (std::size_t dx = 0; dx < w; ++dx) {
            const std::size_t i = (c * h + oy * w + dy) * wid + ox * w + dx;
            if (x[i] > x[best]) best = i;
          }
        }
        y[(c * oh + oy) * ow + ox] = x[best];
        argmax[(c * oh + oy) * ow + ox] = best;
      }
    }
  }
}

inline void maxpool_backward(std::span<const std::size_t> argmax,
                             std::span<const double> dy, std::span<double> dx) {
  std::fill(dx.begin(), dx.end(), 0.0);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
}

}  // namespace twoscale
