#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tenc/autodiff/tensor.hpp"

namespace tenc::ad {

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Relative error with an absolute floor: |a - n| / max(|a|, |n|, floor).
// The floor keeps near-zero gradient entries from turning round-off of the
// finite difference into spurious relative failures.
inline double relative_error(double analytic, double numeric, double floor = 1e-4) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares analytic gradients of the scalar `f` against central differences
// (f(t+h) - f(t-h)) / 2h for every entry of every parameter. `f` must rebuild
// its computation from the current parameter values on each call and be
// deterministic (fixed seeds, fixed dropout masks).
inline GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<NamedTensor> params,
                                  double h = 1e-5, double tol = 1e-4, double floor = 1e-4) {
  for (auto& p : params) {
    if (!p.tensor.requires_grad() || !p.tensor.is_leaf()) {
      throw Error("autodiff", "grad_check parameter '" + p.name + "' is not a differentiable leaf");
    }
    p.tensor.zero_grad();
  }
  auto eval = [&f] {
    NoGradScope ng;
    return f().item();
  };
  const double base1 = eval();
  const double base2 = eval();
  if (base1 != base2) {
    throw Error("autodiff", "grad_check: function is not deterministic under repeated evaluation");
  }

  Graph graph;
  {
    GraphScope scope(graph);
    Tensor root = f();
    graph.backward(root);
  }

  GradCheckReport report;
  report.tolerance = tol;
  for (auto& p : params) {
    ParamCheck pc{p.name, 0.0, 0.0};
    std::vector<double> analytic(p.tensor.numel(), 0.0);
    if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), analytic.begin());
    auto vals = p.tensor.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + h;
      const double fp = eval();
      vals[i] = saved - h;
      const double fm = eval();
      vals[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      pc.max_abs_error = std::max(pc.max_abs_error, std::abs(analytic[i] - numeric));
      pc.max_rel_error = std::max(pc.max_rel_error, relative_error(analytic[i], numeric, floor));
    }
    report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
    report.params.push_back(std::move(pc));
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace tenc::ad
