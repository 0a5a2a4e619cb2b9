#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "twoscale/dataset.hpp"
#include "twoscale/error.hpp"
#include "twoscale/loss.hpp"
#include "twoscale/metrics.hpp"
#include "twoscale/network.hpp"
#include "twoscale/rng.hpp"
#include "twoscale/scale.hpp"

namespace twoscale {

struct TrainingConfig {
  LossVariant variant;
  double learning_rate = 0.1;
  std::size_t batch_size = 128;
  std::size_t iterations = 1000;
  // R2 (or the separation factor R_s) starts at this multiple of R1.
  double init_scale_multiplier = 10.0;
  // Weight init std; nonpositive means per-layer sqrt(2 / fan_in).
  double init_std = 0.0;
  std::uint64_t seed = 0;
  // Test accuracy is sampled every this many iterations.
  std::size_t eval_every = 100;
  // Report grids.
  std::vector<double> at_grid = default_at_grid();
  std::size_t top_k_limit = 10;
  double partition_mu = 0.01;
  std::size_t histogram_bins = 50;

  void validate() const {
    variant.validate();
    if (!(learning_rate > 0.0)) throw InvalidConfig("training: learning rate must be > 0");
    if (batch_size == 0) throw InvalidConfig("training: batch size must be positive");
    if (!(init_scale_multiplier > 0.0)) {
      throw InvalidConfig("training: scale multiplier must be > 0");
    }
    if (eval_every == 0) throw InvalidConfig("training: eval_every must be positive");
    if (!(partition_mu > 0.0)) throw InvalidConfig("training: partition mu must be > 0");
    if (histogram_bins < 2) throw InvalidConfig("training: need at least 2 histogram bins");
    for (double at : at_grid) {
      if (!(at >= 0.0 && at <= 1.0)) throw InvalidConfig("training: at grid outside [0,1]");
    }
  }
};

// Epoch-wise sampler: each epoch is a fresh seeded shuffle of the whole
// index range, cut into consecutive batches (the final short batch is kept).
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
      : batch_(batch_size), rng_(seed) {
    if (dataset_size == 0) throw InvalidInput("batch sampler: empty dataset");
    if (batch_size == 0) throw InvalidInput("batch sampler: batch size must be positive");
    if (batch_size > dataset_size) {
      throw InvalidInput("batch sampler: batch size " + std::to_string(batch_size) +
                         " exceeds dataset size " + std::to_string(dataset_size));
    }
    order_.resize(dataset_size);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(order_);
  }

  std::span<const std::size_t> next() {
    if (pos_ >= order_.size()) {
      rng_.shuffle(order_);
      pos_ = 0;
    }
    const std::size_t take = std::min(batch_, order_.size() - pos_);
    std::span<const std::size_t> batch(order_.data() + pos_, take);
    pos_ += take;
    return batch;
  }

 private:
  std::size_t batch_;
  std::size_t pos_ = 0;
  std::vector<std::size_t> order_;
  Rng rng_;
};

struct RunState {
  Network net;
  ScaleState scales;
  std::size_t iteration = 0;
  BatchSampler sampler;
};

// Fresh run: Gaussian parameters, R1 = R(alpha_0), R2 = m * R1. For the
// separation kind the slots hold (R frozen, R_s = m). The weight stream and
// the batch stream are independent substreams of the seed.
inline RunState init_run(const NetworkSpec& spec, const TrainingConfig& config,
                         const Dataset& train) {
  config.validate();
  train.validate();
  Network net(spec);
  net.init_gaussian(substream(config.seed, 0), config.init_std);
  ScaleState scales;
  const double r = param_scale(net).r;
  if (config.variant.kind == LossKind::Separation) {
    scales = {r, config.init_scale_multiplier};
  } else {
    scales = {r, config.init_scale_multiplier * r};
  }
  BatchSampler sampler(train.size(), config.batch_size, substream(config.seed, 1));
  return RunState{std::move(net), scales, 0, std::move(sampler)};
}

namespace detail {

inline bool all_finite(const std::vector<std::vector<double>>& blocks) {
  for (const auto& block : blocks) {
    for (double v : block) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace detail

// One SGD step on the given batch: alpha -= tau * mean gradient, plus the
// variant's live scale updates (adaptive: R1 and R2; separation: R_s only;
// single-scale: R1; fixed/vanilla/truncated: none). Aborts with a
// diagnostic error instead of clipping when anything goes non-finite.
inline BatchStats sgd_step(RunState& state, const Dataset& train,
                           std::span<const std::size_t> batch, const TrainingConfig& config) {
  BatchStats stats;
  BatchGradients grads;
  try {
    grads = loss_gradients(state.net, state.scales, config.variant, train, batch, &stats);
  } catch (const InvalidState&) {
    // Parameters were finite after the last update, so a non-finite value
    // inside the loss evaluation means the run exploded, not that the caller
    // misused the API.
    throw RunDiverged(state.iteration, std::numeric_limits<double>::quiet_NaN(),
                      state.scales.r1, state.scales.r2);
  } catch (const DegenerateScale&) {
    throw RunDiverged(state.iteration, std::numeric_limits<double>::quiet_NaN(),
                      state.scales.r1, state.scales.r2);
  }
  if (!std::isfinite(stats.mean_loss) || !std::isfinite(grads.r1) ||
      !std::isfinite(grads.r2) || !detail::all_finite(grads.alpha)) {
    throw RunDiverged(state.iteration, stats.mean_loss, state.scales.r1, state.scales.r2);
  }

  const double tau = config.learning_rate;
  auto& params = state.net.mutable_params();
  for (std::size_t l = 0; l < params.size(); ++l) {
    auto& block = params[l];
    const auto& gblock = grads.alpha[l];
    for (std::size_t t = 0; t < block.size(); ++t) block[t] -= tau * gblock[t];
  }
  if (!detail::all_finite(params)) {
    throw RunDiverged(state.iteration, stats.mean_loss, state.scales.r1, state.scales.r2);
  }

  switch (config.variant.kind) {
    case LossKind::SingleScale:
      state.scales.r1 -= tau * grads.r1;
      break;
    case LossKind::TwoScale:
      state.scales.r1 -= tau * grads.r1;
      state.scales.r2 -= tau * grads.r2;
      break;
    case LossKind::Separation:
      state.scales.r2 -= tau * grads.r2;
      break;
    case LossKind::FixedTwoScale:
    case LossKind::VanillaCE:
    case LossKind::Truncated:
      break;
  }
  if (!(state.scales.r1 > 0.0) || !(state.scales.r2 > 0.0) ||
      !std::isfinite(state.scales.r1) || !std::isfinite(state.scales.r2)) {
    throw RunDiverged(state.iteration, stats.mean_loss, state.scales.r1, state.scales.r2);
  }

  ++state.iteration;
  return stats;
}

struct Evaluation {
  std::vector<std::vector<double>> probs;
  std::vector<double> delta_x_hat;
};

// Evaluation-time probabilities. The scaled kinds read the network at scale
// R1 (for separation, the frozen R): softmax(R1 * X / R). The unscaled kinds
// use the raw logits. Normalized confidences come along for the partition.
inline Evaluation evaluate_probabilities(const Network& net, const ScaleState& scales,
                                         const LossVariant& variant, const Dataset& data) {
  data.validate();
  Evaluation out;
  out.probs.reserve(data.size());
  out.delta_x_hat.reserve(data.size());
  const double r = param_scale(net).r;
  const bool scaled = scale_family(variant.kind);
  const double multiplier = scaled ? scales.r1 / r : 1.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto fw = net.forward(data.objects[i]);
    out.delta_x_hat.push_back(logit_gap(fw.logits, data.fine_labels[i]) / r);
    if (multiplier != 1.0) {
      for (double& v : fw.logits) v *= multiplier;
    }
    out.probs.push_back(softmax(fw.logits));
  }
  return out;
}

inline MetricReport evaluate_report(const Network& net, const ScaleState& scales,
                                    const LossVariant& variant, const Dataset& data,
                                    const TrainingConfig& config) {
  const Evaluation eval = evaluate_probabilities(net, scales, variant, data);
  std::vector<int> coarse_map;
  if (data.has_coarse()) coarse_map = data.fine_to_coarse();
  return build_report(eval.probs, data.fine_labels, eval.delta_x_hat, coarse_map,
                      config.at_grid, config.top_k_limit, config.partition_mu,
                      config.histogram_bins);
}

// Convenience wrapper for the W/P/M split straight from a network.
inline PartitionMasses confidence_partition(const Network& net, const Dataset& data,
                                            double mu) {
  data.validate();
  const double r = param_scale(net).r;
  std::vector<double> deltas;
  deltas.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto fw = net.forward(data.objects[i]);
    deltas.push_back(logit_gap(fw.logits, data.fine_labels[i]) / r);
  }
  return confidence_partition(deltas, mu);
}

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based step index
  double batch_accuracy = 0.0;
  double batch_loss = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
  std::optional<double> test_accuracy;
};

struct MetricLog {
  std::vector<IterationRecord> records;
  std::optional<MetricReport> final_report;
  bool diverged = false;
  std::size_t diverged_iteration = 0;
  std::string divergence_message;
};

using StepHook =
    std::function<void(const RunState&, const BatchStats&, std::span<const std::size_t>)>;

// Full training run: per-iteration batch statistics, periodic test
// accuracy, and a final full report. On divergence the log is returned
// partial with the failure recorded instead of a throw, so callers keep the
// trajectory up to the failing step.
inline MetricLog run_experiment(const NetworkSpec& spec, const TrainingConfig& config,
                                const Dataset& train, const Dataset& test,
                                const StepHook& hook = {}) {
  train.validate();
  test.validate();
  if (train.class_count != test.class_count) {
    throw InvalidConfig("run_experiment: train has " + std::to_string(train.class_count) +
                        " classes, test has " + std::to_string(test.class_count));
  }
  RunState state = init_run(spec, config, train);
  if (state.net.class_count() != train.class_count) {
    throw InvalidConfig("run_experiment: network emits " +
                        std::to_string(state.net.class_count()) + " classes, dataset has " +
                        std::to_string(train.class_count));
  }

  MetricLog log;
  log.records.reserve(config.iterations);
  const auto record_divergence = [&log](std::size_t iteration, const std::string& message) {
    log.diverged = true;
    log.diverged_iteration = iteration;
    log.divergence_message = message;
  };
  for (std::size_t n = 0; n < config.iterations; ++n) {
    const std::span<const std::size_t> batch = state.sampler.next();
    IterationRecord rec;
    try {
      const BatchStats stats = sgd_step(state, train, batch, config);
      rec.iteration = state.iteration;
      rec.batch_accuracy = stats.batch_accuracy();
      rec.batch_loss = stats.mean_loss;
      rec.r1 = state.scales.r1;
      rec.r2 = state.scales.r2;
      if (hook) hook(state, stats, batch);
      if (state.iteration % config.eval_every == 0) {
        const Evaluation eval =
            evaluate_probabilities(state.net, state.scales, config.variant, test);
        rec.test_accuracy = accuracy(eval.probs, test.fine_labels);
      }
    } catch (const RunDiverged& e) {
      record_divergence(e.iteration, e.what());
      return log;
    } catch (const InvalidState& e) {
      // Exploded parameters can first surface as non-finite logits in the
      // periodic evaluation rather than in the step itself.
      record_divergence(state.iteration, e.what());
      return log;
    }
    log.records.push_back(std::move(rec));
  }
  try {
    log.final_report = evaluate_report(state.net, state.scales, config.variant, test, config);
  } catch (const InvalidState& e) {
    record_divergence(state.iteration, e.what());
  }
  return log;
}

}  // namespace twoscale
