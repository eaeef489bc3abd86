#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "tenc/optim/adamw.hpp"
#include "tenc/optim/schedule.hpp"
#include "tenc/rng.hpp"

namespace tenc::optim {

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double lr = 2e-5;
  double warmup = 0.1;
  AdamWConfig adamw;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 200;
  // A trailing partial batch smaller than this is folded into the one before
  // it (contrastive losses need at least two items). 1 keeps every batch.
  std::size_t min_batch = 1;
};

struct StepRecord {
  std::size_t step = 0;  // 1-based optimizer step
  std::size_t epoch = 0;  // 0-based
  double loss = 0.0;
  double lr = 0.0;
};

struct CheckpointEvent {
  std::size_t step = 0;
  std::size_t epoch = 0;
  bool epoch_end = false;
};

// Loss over the dataset items `batch`; `dropout` is the run's dropout stream.
using BatchLoss = std::function<ad::Tensor(std::span<const std::size_t> batch, Rng& dropout)>;
using CheckpointHook = std::function<void(const CheckpointEvent&)>;

// [begin, end) item ranges of one epoch.
inline std::vector<std::pair<std::size_t, std::size_t>> batch_bounds(std::size_t n, std::size_t batch_size,
                                                                     std::size_t min_batch = 1) {
  std::vector<std::pair<std::size_t, std::size_t>> b;
  for (std::size_t start = 0; start < n; start += batch_size) b.emplace_back(start, std::min(n, start + batch_size));
  if (b.size() > 1 && b.back().second - b.back().first < min_batch) {
    b[b.size() - 2].second = n;
    b.pop_back();
  }
  return b;
}

// Mini-batch AdamW over `n` items. Each epoch reshuffles with its own seeded
// stream and keeps the final partial batch. `on_checkpoint` fires every
// `checkpoint_every` steps and at the end of every epoch (once if both
// coincide). Returns the per-step log.
inline std::vector<StepRecord> train_epochs(std::vector<NamedTensor>& params, std::size_t n,
                                            const BatchLoss& loss_fn, const TrainOptions& opt,
                                            const CheckpointHook& on_checkpoint = {}) {
  if (n == 0) throw Error("optim", "training set is empty");
  if (opt.batch_size == 0) throw Error("optim", "batch size must be positive");
  const SeedTree seeds(opt.seed);
  const auto bounds = batch_bounds(n, opt.batch_size, opt.min_batch);
  const std::size_t total = opt.epochs * bounds.size();
  const Schedule schedule(opt.lr, opt.warmup, total);
  AdamWState state(params, opt.adamw);
  Rng dropout = seeds.stream("dropout");
  std::vector<StepRecord> log;
  log.reserve(total);
  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = seeds.stream("shuffle", epoch);
    // Fisher-Yates with our own uniform draw, so the order does not depend on
    // the standard library's distribution code.
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform01(shuffle) * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    for (const auto& [start, stop] : bounds) {
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      ++step;
      for (auto& p : params) p.tensor.zero_grad();
      double loss_value = 0.0;
      {
        ad::Graph graph;
        ad::GraphScope scope(graph);
        ad::Tensor loss = loss_fn(batch, dropout);
        loss_value = loss.item();
        if (loss.requires_grad()) graph.backward(loss);
      }
      const double lr = schedule.lr(step);
      adamw_step(params, state, lr);
      log.push_back({step, epoch, loss_value, lr});
      const bool epoch_end = stop == n;
      if (on_checkpoint && (epoch_end || (opt.checkpoint_every > 0 && step % opt.checkpoint_every == 0))) {
        on_checkpoint({step, epoch, epoch_end});
      }
    }
  }
  for (auto& p : params) p.tensor.zero_grad();
  return log;
}

inline void write_step_log(std::ostream& os, std::span<const StepRecord> log, bool header = true) {
  if (header) os << "step,epoch,loss,lr\n";
  const auto old = os.precision(17);
  for (const auto& r : log) os << r.step << ',' << r.epoch << ',' << r.loss << ',' << r.lr << '\n';
  os.precision(old);
}

}  // namespace tenc::optim
