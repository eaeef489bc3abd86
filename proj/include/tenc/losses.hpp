#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tenc/autodiff/ops.hpp"

namespace tenc::losses {

using ad::Tensor;

// Two views per sentence: row i of `first` and row i of `second` form the
// positive pair; every other row of either view is an in-batch negative.
struct ContrastiveBatch {
  Tensor first;   // [B, d]
  Tensor second;  // [B, d]
  double temperature = 0.05;
};

// Predictions (logits for BCE, scores for MSE) paired with soft targets.
struct SoftTargetBatch {
  Tensor predictions;  // [N]
  std::vector<double> targets;
};

// InfoNCE summed over anchors. For anchor i the denominator runs over the
// positive second[i] plus first[j] and second[j] for every j != i, i.e.
// 2B - 1 terms, evaluated with log-sum-exp.
inline Tensor infonce(const ContrastiveBatch& batch) {
  const Tensor& a = batch.first;
  const Tensor& b = batch.second;
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw ShapeError("infonce views must both be [B, d], got " + ad::to_string(a.shape()) + " and " +
                     ad::to_string(b.shape()));
  }
  const std::size_t n = a.dim(0);
  if (n < 2) throw Error("losses", "infonce needs at least two sentences per batch");
  if (!(batch.temperature > 0.0)) throw Error("losses", "infonce temperature must be positive");
  const double inv_tau = 1.0 / batch.temperature;

  Tensor na = ad::normalize_rows(a);
  Tensor nb = ad::normalize_rows(b);
  // Columns 0..B-1 are second-view rows, B..2B-1 first-view rows.
  Tensor sims = ad::scale(ad::matmul(na, ad::concat({nb, na}, 0), /*transpose_b=*/true), inv_tau);
  std::vector<std::uint8_t> mask(n * 2 * n, 1);
  for (std::size_t i = 0; i < n; ++i) mask[i * 2 * n + n + i] = 0;
  Tensor log_denominator = ad::logsumexp(sims, mask);
  Tensor positive = ad::scale(ad::sum(ad::mul(na, nb)), inv_tau);
  return ad::sub(ad::sum(log_denominator), positive);
}

inline void check_targets(std::span<const double> targets) {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!(targets[i] >= 0.0 && targets[i] <= 1.0)) {
      throw Error("losses", "BCE target " + std::to_string(targets[i]) + " at index " + std::to_string(i) +
                                " lies outside [0, 1]");
    }
  }
}

namespace detail {

inline Tensor targets_like(const SoftTargetBatch& batch) {
  if (batch.predictions.rank() != 1 || batch.predictions.numel() != batch.targets.size()) {
    throw ShapeError("predictions " + ad::to_string(batch.predictions.shape()) + " do not match " +
                     std::to_string(batch.targets.size()) + " targets");
  }
  return Tensor::constant(batch.predictions.shape(), batch.targets);
}

}  // namespace detail

// Soft binary cross-entropy from logits:
//   mean(softplus(x) - y * x) == -mean(y log s(x) + (1 - y) log(1 - s(x))).
inline Tensor bce_soft(const SoftTargetBatch& batch) {
  check_targets(batch.targets);
  Tensor y = detail::targets_like(batch);
  const Tensor& x = batch.predictions;
  return ad::mean(ad::sub(ad::softplus(x), ad::mul(y, x)));
}

// Mean squared error, minimized at x == y.
inline Tensor mse(const SoftTargetBatch& batch) {
  Tensor y = detail::targets_like(batch);
  Tensor diff = ad::sub(batch.predictions, y);
  return ad::mean(ad::mul(diff, diff));
}

// Closed-form dBCE/dx = (sigmoid(x) - y) / N.
inline std::vector<double> bce_logit_gradient(std::span<const double> logits, std::span<const double> targets) {
  if (logits.size() != targets.size() || logits.empty()) {
    throw Error("losses", "bce_logit_gradient needs equal non-empty inputs");
  }
  check_targets(targets);
  const double n = static_cast<double>(logits.size());
  std::vector<double> g(logits.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (ad::detail::stable_sigmoid(logits[i]) - targets[i]) / n;
  return g;
}

// Closed-form dMSE/dx = 2 (x - y) / N.
inline std::vector<double> mse_gradient(std::span<const double> preds, std::span<const double> targets) {
  if (preds.size() != targets.size() || preds.empty()) {
    throw Error("losses", "mse_gradient needs equal non-empty inputs");
  }
  const double n = static_cast<double>(preds.size());
  std::vector<double> g(preds.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * (preds[i] - targets[i]) / n;
  return g;
}

// Mean binary entropy of the targets: the value BCE approaches when every
// prediction matches its soft target exactly.
inline double bce_floor(std::span<const double> targets) {
  double h = 0.0;
  for (double y : targets) {
    if (y > 0.0) h -= y * std::log(y);
    if (y < 1.0) h -= (1.0 - y) * std::log1p(-y);
  }
  return targets.empty() ? 0.0 : h / static_cast<double>(targets.size());
}

}  // namespace tenc::losses
