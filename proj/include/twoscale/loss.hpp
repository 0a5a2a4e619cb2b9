#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "twoscale/dataset.hpp"
#include "twoscale/error.hpp"
#include "twoscale/network.hpp"
#include "twoscale/scale.hpp"

namespace twoscale {

enum class LossKind {
  VanillaCE,       // cross-entropy on softmax of raw logits
  SingleScale,     // the scaled baseline: one trainable scale R1 on X/R
  TwoScale,        // adaptive R1/R2 branching on the confidence threshold
  FixedTwoScale,   // same value function, scales frozen at initialization
  Separation,      // R frozen, trainable separation factor R_s (high scale R_s*R)
  Truncated,       // cross-entropy clamped at -log k below probability k
};

// The scale-normalized family: every kind whose loss is evaluated on X / R.
inline bool scale_family(LossKind kind) {
  return kind == LossKind::SingleScale || kind == LossKind::TwoScale ||
         kind == LossKind::FixedTwoScale || kind == LossKind::Separation;
}

inline const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::VanillaCE: return "vanilla-ce";
    case LossKind::SingleScale: return "single-scale";
    case LossKind::TwoScale: return "two-scale";
    case LossKind::FixedTwoScale: return "fixed-two-scale";
    case LossKind::Separation: return "separation";
    case LossKind::Truncated: return "truncated";
  }
  return "?";
}

struct LossVariant {
  LossKind kind = LossKind::TwoScale;
  // Confidence threshold between the low and high scale branch.
  double eta = 0.01;
  // Probability floor for the truncated loss.
  double trunc_k = 0.0;
  // Branch on delta_X_hat instead of delta_X. Off by default: the branch is
  // defined on the unnormalized confidence.
  bool branch_on_normalized = false;

  void validate() const {
    if (scale_family(kind) && !(eta > 0.0)) {
      throw InvalidConfig(std::string("loss variant ") + loss_kind_name(kind) +
                          ": eta must be > 0");
    }
    if (kind == LossKind::Truncated && !(trunc_k >= 0.0 && trunc_k <= 1.0)) {
      throw InvalidConfig("truncated loss: k must lie in [0,1]");
    }
  }
};

// The live scale pair. For the separation kind the fields are interpreted as
// (R, R_s): R is the frozen parameter scale and R_s the trainable separation
// factor, so the effective high scale is R_s * R.
struct ScaleState {
  double r1 = 1.0;
  double r2 = 1.0;

  void validate() const {
    if (!(r1 > 0.0) || !(r2 > 0.0) || !std::isfinite(r1) || !std::isfinite(r2)) {
      throw InvalidState("scale state: R1 and R2 must be positive finite, got r1=" +
                         std::to_string(r1) + " r2=" + std::to_string(r2));
    }
  }
};

// Effective (low-branch, high-branch) multipliers applied to X_hat.
inline std::pair<double, double> effective_scales(LossKind kind, const ScaleState& state) {
  switch (kind) {
    case LossKind::SingleScale:
      return {state.r1, state.r1};
    case LossKind::Separation:
      return {state.r1, state.r2 * state.r1};
    default:
      return {state.r1, state.r2};
  }
}

// -log p of the correct class; p is clamped below at 1e-300 so the value
// stays finite on degenerate inputs.
inline double cross_entropy(std::span<const double> p, int correct) {
  if (correct < 0 || static_cast<std::size_t>(correct) >= p.size()) {
    throw InvalidInput("cross_entropy: correct class out of range");
  }
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidInput("cross_entropy: invalid probability " + std::to_string(v));
    }
  }
  const double pi = p[static_cast<std::size_t>(correct)];
  return -std::log(pi < 1e-300 ? 1e-300 : pi);
}

// Cross-entropy of softmax(rho * x_hat) at the correct class, computed as
// log(1 + sum_{j != i} exp(rho * (x_hat_j - x_hat_i))) without ever forming
// probabilities: a max shift keeps the exponents bounded.
inline double scaled_ce(std::span<const double> x_hat, int correct, double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) {
    throw InvalidInput("scaled_ce: rho must be positive finite");
  }
  if (correct < 0 || static_cast<std::size_t>(correct) >= x_hat.size()) {
    throw InvalidInput("scaled_ce: correct class out of range");
  }
  if (x_hat.size() < 2) throw InvalidInput("scaled_ce: need at least two classes");
  const double xi = x_hat[static_cast<std::size_t>(correct)];
  double shift = 0.0;  // max over {0} and the scaled gaps
  for (std::size_t j = 0; j < x_hat.size(); ++j) {
    if (j == static_cast<std::size_t>(correct)) continue;
    if (!std::isfinite(x_hat[j])) throw InvalidInput("scaled_ce: non-finite logit");
    shift = std::max(shift, rho * (x_hat[j] - xi));
  }
  if (shift == 0.0) {
    double sum = 0.0;
    for (std::size_t j = 0; j < x_hat.size(); ++j) {
      if (j == static_cast<std::size_t>(correct)) continue;
      sum += std::exp(rho * (x_hat[j] - xi));
    }
    return std::log1p(sum);
  }
  double sum = std::exp(-shift);
  for (std::size_t j = 0; j < x_hat.size(); ++j) {
    if (j == static_cast<std::size_t>(correct)) continue;
    sum += std::exp(rho * (x_hat[j] - xi) - shift);
  }
  return shift + std::log(sum);
}

// Cross-entropy clamped at -log k whenever the correct-class probability
// falls below k. At k = 0 this is exactly cross_entropy.
inline double truncated_loss(std::span<const double> p, int correct, double k) {
  if (!(k >= 0.0 && k <= 1.0)) throw InvalidInput("truncated_loss: k must lie in [0,1]");
  if (correct < 0 || static_cast<std::size_t>(correct) >= p.size()) {
    throw InvalidInput("truncated_loss: correct class out of range");
  }
  if (p[static_cast<std::size_t>(correct)] < k) return -std::log(k);
  return cross_entropy(p, correct);
}

// The closed-form derivative of the high-branch loss with respect to its
// scale: sum_{j != i} g_j e^{r2 g_j} / (1 + sum_{j != i} e^{r2 g_j}) with
// g_j = x_hat_j - x_hat_i. Requires a well-classified object (all g_j < 0),
// which forces the value strictly negative: raising the high scale can only
// lower the loss of a well-classified object.
inline double dloss_dr2_analytic(std::span<const double> x_hat, int correct, double r2) {
  if (!(r2 > 0.0) || !std::isfinite(r2)) {
    throw InvalidInput("dloss_dr2_analytic: r2 must be positive finite");
  }
  if (correct < 0 || static_cast<std::size_t>(correct) >= x_hat.size()) {
    throw InvalidInput("dloss_dr2_analytic: correct class out of range");
  }
  const double xi = x_hat[static_cast<std::size_t>(correct)];
  double numer = 0.0, denom = 1.0;
  for (std::size_t j = 0; j < x_hat.size(); ++j) {
    if (j == static_cast<std::size_t>(correct)) continue;
    const double g = x_hat[j] - xi;
    if (g >= 0.0) {
      throw ContractViolation("dloss_dr2_analytic: object is not well classified (gap " +
                              std::to_string(g) + " >= 0)");
    }
    const double e = std::exp(r2 * g);
    numer += g * e;
    denom += e;
  }
  return numer / denom;
}

enum class Branch { Low, High };

struct SampleLoss {
  double value = 0.0;
  Branch branch = Branch::Low;
};

// The two-scale loss of one object: scaled cross-entropy on X / R at the
// low scale when the confidence falls below eta and at the high scale
// otherwise (ties take the high branch).
inline SampleLoss two_scale_loss(const Network& net, const ScaleState& state,
                                 const LossVariant& variant, const Tensor& input,
                                 int correct) {
  if (!scale_family(variant.kind)) {
    throw ContractViolation(std::string("two_scale_loss: variant ") +
                            loss_kind_name(variant.kind) + " is not a scaled kind");
  }
  variant.validate();
  state.validate();
  if (!net.bias_free()) throw ContractViolation("two_scale_loss: network has biases");

  const double r = param_scale(net).r;
  const auto fw = net.forward(input);
  std::vector<double> x_hat(fw.logits);
  for (double& v : x_hat) v /= r;

  const double gap = logit_gap(fw.logits, correct);
  const double branch_gap = variant.branch_on_normalized ? gap / r : gap;
  const Branch branch = branch_gap >= variant.eta ? Branch::High : Branch::Low;
  const auto [low, high] = effective_scales(variant.kind, state);
  const double rho = branch == Branch::High ? high : low;
  return {scaled_ce(x_hat, correct, rho), branch};
}

// Per-layer parameter gradients plus the two scale-slot gradients. The r2
// slot holds dL/dR2 for the two-scale kinds and dL/dR_s for the separation
// kind; both slots are zero for the unscaled kinds.
struct BatchGradients {
  std::vector<std::vector<double>> alpha;
  double r1 = 0.0;
  double r2 = 0.0;
};

struct BatchStats {
  double mean_loss = 0.0;
  std::size_t size = 0;
  std::size_t correct = 0;          // delta_X > 0
  std::size_t high_branch = 0;      // objects on the high branch
  std::size_t well_classified = 0;  // delta_X strictly above eta

  double batch_accuracy() const {
    return size == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(size);
  }
};

// Batch-mean gradients of the configured loss with respect to every network
// parameter and the live scales. The derivation for the scaled kinds, with
// q = softmax(rho * X_hat), e_i the correct-class indicator, and
// D_rho = (q - e_i) . X_hat:
//
//   dL/dX       = rho (q - e_i) / R
//   dL/dalpha^l = backward_l(dL/dX) - rho D_rho alpha^l / |alpha^l|^2
//   dL/drho     = D_rho
//
// The second term of dL/dalpha^l is the chain through R(alpha) inside
// X_hat = X / R, using dR/dalpha^l = R alpha^l / |alpha^l|^2. The branch
// indicator is treated as locally constant and the branch's scale gradient
// is routed to its slot (for separation, dL/dR_s = D_rho * R and the frozen
// R gets no gradient).
inline BatchGradients loss_gradients(const Network& net, const ScaleState& state,
                                     const LossVariant& variant, const Dataset& data,
                                     std::span<const std::size_t> batch,
                                     BatchStats* stats = nullptr) {
  variant.validate();
  if (batch.empty()) throw InvalidInput("loss_gradients: empty batch");
  const bool scaled = scale_family(variant.kind);
  if (scaled && !net.bias_free()) {
    throw ContractViolation("loss_gradients: scaled losses need a bias-free network");
  }
  if (scaled) state.validate();

  BatchGradients grads;
  grads.alpha.reserve(net.params().size());
  for (const auto& block : net.params()) grads.alpha.emplace_back(block.size(), 0.0);

  double r = 1.0;
  std::vector<double> norm_sq;
  double low = 0.0, high = 0.0;
  if (scaled) {
    const ScaleReading reading = param_scale(net);
    r = reading.r;
    norm_sq.reserve(reading.per_layer_norms.size());
    for (double n : reading.per_layer_norms) norm_sq.push_back(n * n);
    std::tie(low, high) = effective_scales(variant.kind, state);
  }

  BatchStats local;
  local.size = batch.size();
  const std::size_t k = net.class_count();
  std::vector<double> dlogits(k);

  for (std::size_t bi = 0; bi < batch.size(); ++bi) {
    const std::size_t idx = batch[bi];
    if (idx >= data.size()) throw InvalidInput("loss_gradients: batch index out of range");
    const int correct = data.fine_labels[idx];
    const auto fw = net.forward(data.objects[idx]);
    const double gap = logit_gap(fw.logits, correct);
    if (gap > 0.0) ++local.correct;
    if (gap > variant.eta) ++local.well_classified;

    if (variant.kind == LossKind::VanillaCE || variant.kind == LossKind::Truncated) {
      const std::vector<double> p = softmax(fw.logits);
      if (variant.kind == LossKind::Truncated &&
          p[static_cast<std::size_t>(correct)] < variant.trunc_k) {
        // Clamped region: constant loss, zero gradient.
        local.mean_loss += -std::log(variant.trunc_k);
        continue;
      }
      local.mean_loss += cross_entropy(p, correct);
      for (std::size_t j = 0; j < k; ++j) {
        dlogits[j] = p[j] - (j == static_cast<std::size_t>(correct) ? 1.0 : 0.0);
      }
      net.backward_accumulate(fw.cache, dlogits, grads.alpha);
      continue;
    }

    std::vector<double> x_hat(fw.logits);
    for (double& v : x_hat) v /= r;
    const double branch_gap = variant.branch_on_normalized ? gap / r : gap;
    const bool high_branch = branch_gap >= variant.eta;
    if (high_branch) ++local.high_branch;
    const double rho = high_branch ? high : low;

    local.mean_loss += scaled_ce(x_hat, correct, rho);

    std::vector<double> z(x_hat);
    for (double& v : z) v *= rho;
    const std::vector<double> q = softmax(z);
    double d_rho = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double resid = q[j] - (j == static_cast<std::size_t>(correct) ? 1.0 : 0.0);
      d_rho += resid * x_hat[j];
      dlogits[j] = rho * resid / r;
    }
    net.backward_accumulate(fw.cache, dlogits, grads.alpha);

    // Chain through R(alpha): subtract rho * D_rho * alpha^l / |alpha^l|^2.
    const double coef = rho * d_rho;
    for (std::size_t l = 0; l < grads.alpha.size(); ++l) {
      const double c = coef / norm_sq[l];
      const auto& block = net.params()[l];
      auto& gblock = grads.alpha[l];
      for (std::size_t t = 0; t < block.size(); ++t) gblock[t] -= c * block[t];
    }

    switch (variant.kind) {
      case LossKind::SingleScale:
        grads.r1 += d_rho;
        break;
      case LossKind::TwoScale:
      case LossKind::FixedTwoScale:
        (high_branch ? grads.r2 : grads.r1) += d_rho;
        break;
      case LossKind::Separation:
        // d(rho)/d(R_s) = R on the high branch; R itself is frozen.
        if (high_branch) grads.r2 += d_rho * state.r1;
        break;
      default:
        break;
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& block : grads.alpha) {
    for (double& v : block) v *= inv;
  }
  grads.r1 *= inv;
  grads.r2 *= inv;
  local.mean_loss *= inv;
  if (stats != nullptr) *stats = local;
  return grads;
}

}  // namespace twoscale
