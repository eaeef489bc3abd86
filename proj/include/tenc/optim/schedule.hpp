#pragma once

#include <cmath>
#include <cstddef>

#include "tenc/error.hpp"

namespace tenc::optim {

// Linear warmup over the first ceil(warmup * total) steps, then linear decay
// to zero at step `total`. Steps are numbered from 1. warmup == 0 means a
// constant rate.
struct Schedule {
  double base = 0.0;
  double warmup = 0.1;
  std::size_t total = 0;

  Schedule(double base_lr, double warmup_fraction, std::size_t total_steps)
      : base(base_lr), warmup(warmup_fraction), total(total_steps) {
    if (!(warmup >= 0.0 && warmup < 1.0)) throw Error("optim", "warmup fraction must lie in [0, 1)");
    if (!(base >= 0.0)) throw Error("optim", "learning rate must be non-negative");
  }

  std::size_t warmup_steps() const {
    return static_cast<std::size_t>(std::ceil(warmup * static_cast<double>(total)));
  }

  double lr(std::size_t t) const {
    const std::size_t w = warmup_steps();
    if (w == 0) return base;
    if (t <= w) return base * static_cast<double>(t) / static_cast<double>(w);
    if (t >= total) return 0.0;
    return base * static_cast<double>(total - t) / static_cast<double>(total - w);
  }
};

}  // namespace tenc::optim
