#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tenc/autodiff/grad_check.hpp"

namespace tenc::optim {

using ad::NamedTensor;

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 0.0;  // global-norm clip threshold, 0 disables
};

// Moments mirror the parameter list they were created for.
struct AdamWState {
  AdamWConfig config;
  std::size_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  AdamWState() = default;
  AdamWState(const std::vector<NamedTensor>& params, AdamWConfig cfg) : config(cfg) {
    for (const auto& p : params) {
      m.emplace_back(p.tensor.numel(), 0.0);
      v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
};

// L2 norm over every gradient entry.
inline double global_norm(std::span<const std::span<const double>> grads) {
  double s = 0.0;
  for (auto g : grads) {
    for (double x : g) s += x * x;
  }
  return std::sqrt(s);
}

// One decoupled-decay Adam step:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   theta <- theta (1 - lr wd) - lr mhat / (sqrt(vhat) + eps)
// Nothing is modified when any gradient entry is non-finite.
inline void adamw_step(std::vector<NamedTensor>& params, std::span<const std::span<const double>> grads,
                       AdamWState& state, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw Error("optim", "parameter, gradient and moment lists differ in length");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].tensor.numel() || state.m[i].size() != grads[i].size()) {
      throw Error("optim", "gradient for '" + params[i].name + "' has the wrong size");
    }
    for (double g : grads[i]) {
      if (!std::isfinite(g)) throw NumericError("optim", "non-finite gradient in '" + params[i].name + "'");
    }
  }
  const AdamWConfig& c = state.config;
  double clip = 1.0;
  if (c.clip_norm > 0.0) {
    const double norm = global_norm(grads);
    if (norm > c.clip_norm) clip = c.clip_norm / norm;
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - lr * c.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].tensor.mutable_values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto g = grads[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g[j] * clip;
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] = theta[j] * decay - lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

// Same step using the gradients accumulated on the parameter tensors. A
// parameter that received no gradient is treated as having a zero gradient.
inline void adamw_step(std::vector<NamedTensor>& params, AdamWState& state, double lr) {
  std::vector<std::vector<double>> zeros;
  zeros.reserve(params.size());  // spans below point into it
  std::vector<std::span<const double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    if (p.tensor.has_grad()) {
      grads.push_back(p.tensor.grad());
    } else {
      grads.push_back(zeros.emplace_back(p.tensor.numel(), 0.0));
    }
  }
  adamw_step(params, grads, state, lr);
}

}  // namespace tenc::optim
