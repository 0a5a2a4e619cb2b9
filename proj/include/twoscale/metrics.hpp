#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twoscale/error.hpp"

// Performance measures over per-object probability vectors. Everything here
// is pure; networks never appear. Tie rules are explicit because they define
// behavior on exact float coincidences:
//   accuracy        - correct class must hold the strict maximum
//   top-k           - rank by value, ties broken in favor of lower class index
//   close-enough    - inclusive comparison (>=)
//   argmax          - first (lowest-index) maximum

namespace twoscale {

namespace detail {

inline void check_probs(const std::vector<std::vector<double>>& probs,
                        std::span<const int> labels) {
  if (probs.empty()) throw InvalidInput("metrics: empty probability set");
  if (probs.size() != labels.size()) {
    throw InvalidInput("metrics: " + std::to_string(probs.size()) + " probability vectors vs " +
                       std::to_string(labels.size()) + " labels");
  }
  const std::size_t k = probs.front().size();
  if (k < 2) throw InvalidInput("metrics: need at least two classes");
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].size() != k) throw InvalidInput("metrics: ragged probability vectors");
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw InvalidInput("metrics: label " + std::to_string(labels[i]) + " out of range");
    }
    for (double v : probs[i]) {
      if (!std::isfinite(v)) throw InvalidInput("metrics: non-finite probability");
    }
  }
}

inline std::size_t argmax_first(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < p.size(); ++j) {
    if (p[j] > p[best]) best = j;
  }
  return best;
}

}  // namespace detail

// Fraction of objects whose correct-class probability is strictly the
// maximum; exact ties count as incorrect.
inline double accuracy(const std::vector<std::vector<double>>& probs,
                       std::span<const int> labels) {
  detail::check_probs(probs, labels);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto& p = probs[i];
    const double pi = p[static_cast<std::size_t>(labels[i])];
    bool strict = true;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (j != static_cast<std::size_t>(labels[i]) && p[j] >= pi) {
        strict = false;
        break;
      }
    }
    if (strict) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

// Fraction whose correct-class probability ranks among the k largest. The
// rank counts strictly larger values plus equal values at lower class index.
inline double top_k_accuracy(const std::vector<std::vector<double>>& probs,
                             std::span<const int> labels, std::size_t k) {
  detail::check_probs(probs, labels);
  const std::size_t classes = probs.front().size();
  if (k < 1 || k > classes) {
    throw InvalidInput("top_k_accuracy: k=" + std::to_string(k) + " outside 1.." +
                       std::to_string(classes));
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto& p = probs[i];
    const std::size_t li = static_cast<std::size_t>(labels[i]);
    const double pi = p[li];
    std::size_t rank = 0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (p[j] > pi || (p[j] == pi && j < li)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

// Fraction with p_correct within `at` of the maximum probability (inclusive).
inline double close_enough_accuracy(const std::vector<std::vector<double>>& probs,
                                    std::span<const int> labels, double at) {
  detail::check_probs(probs, labels);
  if (!(at >= 0.0 && at <= 1.0)) {
    throw InvalidInput("close_enough_accuracy: at=" + std::to_string(at) + " outside [0,1]");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto& p = probs[i];
    const double pmax = p[detail::argmax_first(p)];
    if (p[static_cast<std::size_t>(labels[i])] >= pmax - at) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

// Fraction whose predicted (argmax) class maps to the same coarse class as
// the correct fine label. The map must cover every fine class.
inline double superclass_accuracy(const std::vector<std::vector<double>>& probs,
                                  std::span<const int> labels,
                                  std::span<const int> fine_to_coarse) {
  detail::check_probs(probs, labels);
  const std::size_t classes = probs.front().size();
  if (fine_to_coarse.size() != classes) {
    throw InvalidConfig("superclass_accuracy: map covers " +
                        std::to_string(fine_to_coarse.size()) + " of " +
                        std::to_string(classes) + " fine classes");
  }
  for (std::size_t f = 0; f < classes; ++f) {
    if (fine_to_coarse[f] < 0) {
      throw InvalidConfig("superclass_accuracy: fine class " + std::to_string(f) +
                          " unmapped");
    }
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const std::size_t predicted = detail::argmax_first(probs[i]);
    if (fine_to_coarse[predicted] == fine_to_coarse[static_cast<std::size_t>(labels[i])]) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

struct PartitionMasses {
  double well = 0.0;
  double poor = 0.0;
  double marginal = 0.0;
};

// Splits mass by normalized confidence: well (> mu), poorly (< -mu),
// marginal (|delta| <= mu). The three fractions sum to one.
inline PartitionMasses confidence_partition(std::span<const double> delta_x_hat, double mu) {
  if (delta_x_hat.empty()) throw InvalidInput("confidence_partition: empty set");
  if (!(mu > 0.0)) throw InvalidInput("confidence_partition: mu must be > 0");
  PartitionMasses masses;
  for (double d : delta_x_hat) {
    if (!std::isfinite(d)) throw InvalidInput("confidence_partition: non-finite confidence");
    if (d > mu) {
      masses.well += 1.0;
    } else if (d < -mu) {
      masses.poor += 1.0;
    } else {
      masses.marginal += 1.0;
    }
  }
  const double n = static_cast<double>(delta_x_hat.size());
  masses.well /= n;
  masses.poor /= n;
  masses.marginal /= n;
  return masses;
}

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;

  std::size_t total() const {
    std::size_t t = 0;
    for (std::size_t c : counts) t += c;
    return t;
  }
};

namespace detail {

inline Histogram make_histogram(double lo, double hi, std::size_t bins,
                                std::span<const double> values) {
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    // Uniform bins, right-exclusive except the last bin which includes hi.
    auto idx = static_cast<long long>(std::floor((v - lo) / width));
    if (idx < 0) idx = 0;
    if (idx >= static_cast<long long>(bins)) idx = static_cast<long long>(bins) - 1;
    ++h.counts[static_cast<std::size_t>(idx)];
  }
  return h;
}

}  // namespace detail

struct ProbabilityHistograms {
  Histogram max_prob;      // max_i p_i over [0,1]
  Histogram correct_prob;  // p_correct over [0,1]
  Histogram delta_p;       // p_correct - max_i p_i over [-1,0], misclassified only
};

inline ProbabilityHistograms probability_histograms(
    const std::vector<std::vector<double>>& probs, std::span<const int> labels,
    std::size_t bins) {
  detail::check_probs(probs, labels);
  if (bins < 2) throw InvalidInput("probability_histograms: need at least 2 bins");
  std::vector<double> maxes, corrects, deltas;
  maxes.reserve(probs.size());
  corrects.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto& p = probs[i];
    const double pmax = p[detail::argmax_first(p)];
    const double pc = p[static_cast<std::size_t>(labels[i])];
    maxes.push_back(pmax);
    corrects.push_back(pc);
    // Misclassified under the strict rule: some other class ties or beats it.
    bool strict = true;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (j != static_cast<std::size_t>(labels[i]) && p[j] >= pc) {
        strict = false;
        break;
      }
    }
    if (!strict) deltas.push_back(pc - pmax);
  }
  ProbabilityHistograms out;
  out.max_prob = detail::make_histogram(0.0, 1.0, bins, maxes);
  out.correct_prob = detail::make_histogram(0.0, 1.0, bins, corrects);
  out.delta_p = detail::make_histogram(-1.0, 0.0, bins, deltas);
  return out;
}

// One evaluation snapshot: every measure over a fixed grid.
struct MetricReport {
  double accuracy = 0.0;
  std::map<std::size_t, double> top_k;
  std::map<double, double> close_enough;
  std::optional<double> superclass;
  PartitionMasses partition;
  double partition_mu = 0.0;
  ProbabilityHistograms histograms;
};

inline std::vector<double> default_at_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 5; ++i) grid.push_back(i / 100.0);
  for (int i = 10; i <= 80; i += 10) grid.push_back(i / 100.0);
  return grid;
}

// Assembles the full report. delta_x_hat must align with probs; the coarse
// map is optional and enables the super-class measure.
inline MetricReport build_report(const std::vector<std::vector<double>>& probs,
                                 std::span<const int> labels,
                                 std::span<const double> delta_x_hat,
                                 std::span<const int> fine_to_coarse,
                                 const std::vector<double>& at_grid, std::size_t top_k_limit,
                                 double mu, std::size_t bins) {
  detail::check_probs(probs, labels);
  if (delta_x_hat.size() != probs.size()) {
    throw InvalidInput("build_report: confidence count mismatch");
  }
  MetricReport report;
  report.accuracy = accuracy(probs, labels);
  const std::size_t classes = probs.front().size();
  const std::size_t kmax = std::min(top_k_limit, classes);
  for (std::size_t k = 1; k <= kmax; ++k) {
    report.top_k[k] = top_k_accuracy(probs, labels, k);
  }
  for (double at : at_grid) {
    report.close_enough[at] = close_enough_accuracy(probs, labels, at);
  }
  if (!fine_to_coarse.empty()) {
    report.superclass = superclass_accuracy(probs, labels, fine_to_coarse);
  }
  report.partition = confidence_partition(delta_x_hat, mu);
  report.partition_mu = mu;
  report.histograms = probability_histograms(probs, labels, bins);
  return report;
}

}  // namespace twoscale
