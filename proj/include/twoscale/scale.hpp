#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "twoscale/dataset.hpp"
#include "twoscale/error.hpp"
#include "twoscale/network.hpp"

namespace twoscale {

// The parameter scale R: the product over parameterized layers of the
// Euclidean norm of the layer's flattened parameters.
struct ScaleReading {
  double r = 0.0;
  std::vector<double> per_layer_norms;
};

inline ScaleReading param_scale(const Network& net) {
  ScaleReading reading;
  reading.r = 1.0;
  reading.per_layer_norms.reserve(net.degree());
  for (std::size_t l = 0; l < net.params().size(); ++l) {
    double sq = 0.0;
    for (double v : net.params()[l]) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm == 0.0) {
      throw DegenerateScale("param_scale: layer " + std::to_string(l) +
                            " is all-zero, R would vanish");
    }
    if (!std::isfinite(norm)) {
      throw InvalidState("param_scale: non-finite norm in layer " + std::to_string(l));
    }
    reading.per_layer_norms.push_back(norm);
    reading.r *= norm;
  }
  if (!std::isfinite(reading.r) || reading.r <= 0.0) {
    throw InvalidState("param_scale: non-finite or nonpositive R");
  }
  return reading;
}

// Normalized logits X / R. Defined for bias-free networks only: with biases
// the logit map is not positively homogeneous and X / R loses its meaning.
inline std::vector<double> normalized_logits(const Network& net, const Tensor& input) {
  if (!net.bias_free()) {
    throw ContractViolation("normalized_logits: network has biases");
  }
  const double r = param_scale(net).r;
  auto fw = net.forward(input);
  for (double& v : fw.logits) v /= r;
  return std::move(fw.logits);
}

// delta_X over raw logits: correct-class logit minus the largest other-class
// logit. Positive iff the object is strictly correctly classified.
inline double logit_gap(std::span<const double> logits, int correct) {
  if (correct < 0 || static_cast<std::size_t>(correct) >= logits.size()) {
    throw InvalidInput("logit_gap: correct class " + std::to_string(correct) +
                       " out of range for " + std::to_string(logits.size()) + " classes");
  }
  if (logits.size() < 2) throw InvalidInput("logit_gap: need at least two classes");
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (j == static_cast<std::size_t>(correct)) continue;
    if (logits[j] > best_other) best_other = logits[j];
  }
  return logits[static_cast<std::size_t>(correct)] - best_other;
}

struct ConfidenceRecord {
  double delta_x = 0.0;      // unnormalized confidence
  double delta_x_hat = 0.0;  // delta_x / R, invariant under parameter rescaling
  int correct_class = 0;
};

inline ConfidenceRecord confidence(const Network& net, const Tensor& input, int correct) {
  const double r = param_scale(net).r;
  const auto fw = net.forward(input);
  ConfidenceRecord rec;
  rec.delta_x = logit_gap(fw.logits, correct);
  rec.delta_x_hat = rec.delta_x / r;
  rec.correct_class = correct;
  return rec;
}

// Size of the well-classified set: objects with delta_X strictly above eta.
// At eta = 0 this counts exactly the correctly classified objects.
inline std::size_t well_classified_count(const Network& net, const Dataset& data, double eta) {
  if (data.size() == 0) throw InvalidInput("well_classified_count: empty dataset");
  if (!(eta >= 0.0)) throw InvalidInput("well_classified_count: eta must be >= 0");
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto fw = net.forward(data.objects[i]);
    if (logit_gap(fw.logits, data.fine_labels[i]) > eta) ++count;
  }
  return count;
}

}  // namespace twoscale
