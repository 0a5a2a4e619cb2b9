#pragma once

#include <cstddef>

#include "twoscale/network.hpp"

namespace twoscale {

// 784 -> hidden -> 10 fully connected classifier for 28x28 gray images.
// Bias-free by default so the scale machinery applies.
inline NetworkSpec mnist_fc_spec(std::size_t hidden = 128, bool bias = false,
                                 Activation activation = Activation::ReLU) {
  NetworkSpec spec;
  spec.input_shape = {28, 28};
  spec.layers = {FullyConnected{hidden, bias}, Activate{activation},
                 FullyConnected{10, bias}};
  return spec;
}

// Small LeNet-style convolutional classifier for 3x32x32 color images:
// conv 6@5x5 -> pool 2 -> conv 16@5x5 -> pool 2 -> fc 120 -> fc K.
inline NetworkSpec lenet_spec(std::size_t classes, bool bias = false) {
  NetworkSpec spec;
  spec.input_shape = {3, 32, 32};
  spec.layers = {Convolution{6, 5, bias},  Activate{Activation::ReLU}, MaxPool{2},
                 Convolution{16, 5, bias}, Activate{Activation::ReLU}, MaxPool{2},
                 FullyConnected{120, bias}, Activate{Activation::ReLU},
                 FullyConnected{classes, bias}};
  return spec;
}

// Plain two-layer classifier for flat synthetic inputs.
inline NetworkSpec blobs_fc_spec(std::size_t dim, std::size_t classes,
                                 std::size_t hidden = 32, bool bias = false) {
  NetworkSpec spec;
  spec.input_shape = {dim};
  spec.layers = {FullyConnected{hidden, bias}, Activate{Activation::ReLU},
                 FullyConnected{classes, bias}};
  return spec;
}

}  // namespace twoscale
