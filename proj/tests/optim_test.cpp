#include <bit>
#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "tenc/autodiff/ops.hpp"
#include "tenc/optim/train.hpp"

using namespace tenc;
using namespace tenc::optim;
using ad::Tensor;

namespace {

std::vector<NamedTensor> one_param(double v) { return {{"theta", Tensor::parameter({1}, {v})}}; }

void step_with(std::vector<NamedTensor>& p, AdamWState& st, double g, double lr) {
  std::vector<double> grad{g};
  std::vector<std::span<const double>> grads{grad};
  adamw_step(p, grads, st, lr);
}

}  // namespace

TEST(AdamW, SingleStepHandValue) {
  auto p = one_param(1.0);
  AdamWConfig cfg;
  cfg.weight_decay = 0.01;
  AdamWState st(p, cfg);
  step_with(p, st, 1.0, 0.01);
  // 1 * (1 - 1e-4) - 0.01 * 1 / (1 + 1e-8)
  EXPECT_NEAR(p[0].tensor[0], 0.989900, 5e-7);
  EXPECT_EQ(st.t, 1u);
  EXPECT_DOUBLE_EQ(st.m[0][0], 0.1);
  EXPECT_NEAR(st.v[0][0], 0.001, 1e-18);
}

TEST(AdamW, ZeroGradientNoDecayLeavesThetaAndDecaysMoments) {
  auto p = one_param(0.7);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamWState st(p, cfg);
  step_with(p, st, 2.0, 0.01);
  const double theta = p[0].tensor[0];
  const double m = st.m[0][0], v = st.v[0][0];
  st.m[0][0] = 0.0;
  st.v[0][0] = 0.0;
  step_with(p, st, 0.0, 0.01);
  EXPECT_EQ(p[0].tensor[0], theta);
  st.m[0][0] = m;
  st.v[0][0] = v;
  step_with(p, st, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(st.m[0][0], 0.9 * m);
  EXPECT_DOUBLE_EQ(st.v[0][0], 0.999 * v);
}

TEST(AdamW, DecayOnlyTrajectoryIsExact) {
  auto p = one_param(2.5);
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  AdamWState st(p, cfg);
  double expected = 2.5;
  for (int t = 1; t <= 50; ++t) {
    const double lr = 0.001 * t;
    step_with(p, st, 0.0, lr);
    expected *= 1.0 - lr * 0.1;
    ASSERT_EQ(p[0].tensor[0], expected) << "step " << t;
  }
}

TEST(AdamW, NonFiniteGradientAbortsAndNamesParameter) {
  std::vector<NamedTensor> p{{"a", Tensor::parameter({2}, {1, 2})}, {"b.weight", Tensor::parameter({1}, {3})}};
  AdamWState st(p, AdamWConfig{});
  std::vector<double> ga{0.1, 0.2}, gb{std::nan("")};
  std::vector<std::span<const double>> grads{ga, gb};
  try {
    adamw_step(p, grads, st, 0.01);
    FAIL() << "expected an error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("b.weight"), std::string::npos);
  }
  EXPECT_EQ(st.t, 0u);
  EXPECT_EQ(p[0].tensor[0], 1.0);
  EXPECT_EQ(st.m[0][0], 0.0);
}

TEST(AdamW, GlobalNormClipping) {
  auto p = one_param(0.0);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.clip_norm = 1.0;
  AdamWState st(p, cfg);
  step_with(p, st, 10.0, 0.01);
  EXPECT_DOUBLE_EQ(st.m[0][0], 0.1);  // clipped gradient is 1
}

TEST(Schedule, WarmupThenLinearDecay) {
  Schedule s(1.0, 0.1, 100);
  EXPECT_EQ(s.warmup_steps(), 10u);
  EXPECT_DOUBLE_EQ(s.lr(1), 0.1);
  EXPECT_DOUBLE_EQ(s.lr(10), 1.0);
  EXPECT_DOUBLE_EQ(s.lr(55), 0.5);
  EXPECT_DOUBLE_EQ(s.lr(100), 0.0);
  Schedule odd(1.0, 0.1, 15);
  EXPECT_EQ(odd.warmup_steps(), 2u);
}

TEST(Schedule, ZeroWarmupIsConstant) {
  Schedule s(0.3, 0.0, 10);
  for (std::size_t t = 1; t <= 10; ++t) EXPECT_EQ(s.lr(t), 0.3);
  EXPECT_THROW(Schedule(0.1, 1.0, 10), Error);
}

TEST(Train, QuadraticConvergence) {
  auto p = one_param(-4.0);
  TrainOptions opt;
  opt.epochs = 5000;
  opt.batch_size = 1;
  opt.lr = 0.05;
  opt.adamw.weight_decay = 0.0;
  auto loss = [&](std::span<const std::size_t>, Rng&) {
    Tensor d = ad::sub(p[0].tensor, Tensor::scalar(3.0));
    return ad::mul(d, d);
  };
  train_epochs(p, 1, loss, opt);
  EXPECT_LE(std::abs(p[0].tensor[0] - 3.0), 1e-6);
}

TEST(Train, PartialFinalBatchIsKept) {
  auto p = one_param(0.0);
  TrainOptions opt;
  opt.epochs = 2;
  opt.batch_size = 4;
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> seen;
  auto loss = [&](std::span<const std::size_t> b, Rng&) {
    sizes.push_back(b.size());
    seen.insert(seen.end(), b.begin(), b.end());
    return ad::sum(p[0].tensor);
  };
  auto log = train_epochs(p, 10, loss, opt);
  EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 2, 4, 4, 2}));
  EXPECT_EQ(log.size(), 6u);
  for (std::size_t e = 0; e < 2; ++e) {
    std::vector<std::size_t> ep(seen.begin() + 10 * e, seen.begin() + 10 * (e + 1));
    std::sort(ep.begin(), ep.end());
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(ep[i], i);
  }
  EXPECT_NE(std::vector<std::size_t>(seen.begin(), seen.begin() + 10),
            std::vector<std::size_t>(seen.begin() + 10, seen.end()));
}

TEST(Train, CheckpointCadence) {
  auto p = one_param(0.0);
  TrainOptions opt;
  opt.epochs = 3;
  opt.batch_size = 1;
  std::vector<std::pair<std::size_t, bool>> events;
  auto loss = [&](std::span<const std::size_t>, Rng&) { return ad::sum(p[0].tensor); };
  train_epochs(p, 150, loss, opt, [&](const CheckpointEvent& e) { events.push_back({e.step, e.epoch_end}); });
  const std::vector<std::pair<std::size_t, bool>> expected{{150, true}, {200, false}, {300, true}, {400, false},
                                                           {450, true}};
  EXPECT_EQ(events, expected);
}

TEST(Train, SameSeedIsBitwiseDeterministic) {
  auto run = [](std::uint64_t seed) {
    Rng init(7);
    std::vector<double> w(6);
    for (double& x : w) x = uniform01(init) - 0.5;
    std::vector<NamedTensor> p{{"w", Tensor::parameter({6}, w)}};
    std::vector<double> xs(40);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = std::sin(0.3 * static_cast<double>(i));
    TrainOptions opt;
    opt.epochs = 4;
    opt.batch_size = 7;
    opt.lr = 0.01;
    opt.seed = seed;
    auto loss = [&](std::span<const std::size_t> b, Rng& rng) {
      std::vector<double> target(6, 0.0);
      for (std::size_t i : b) target[i % 6] += xs[i];
      Tensor d = ad::sub(ad::dropout(p[0].tensor, 0.2, &rng, true), Tensor::vector(target));
      return ad::mean(ad::mul(d, d));
    };
    auto log = train_epochs(p, xs.size(), loss, opt);
    std::vector<std::uint64_t> bits;
    for (double x : p[0].tensor.values()) bits.push_back(std::bit_cast<std::uint64_t>(x));
    for (const auto& r : log) bits.push_back(std::bit_cast<std::uint64_t>(r.loss));
    return bits;
  };
  EXPECT_EQ(run(5), run(5));
  EXPECT_NE(run(5), run(6));
}

TEST(Train, StepLogCsv) {
  std::vector<StepRecord> log{{1, 0, 0.5, 0.001}, {2, 0, 0.25, 0.002}};
  std::ostringstream os;
  write_step_log(os, log);
  EXPECT_EQ(os.str(), "step,epoch,loss,lr\n1,0,0.5,0.001\n2,0,0.25,0.002\n");
}

TEST(Train, EmptyDatasetIsAnError) {
  auto p = one_param(0.0);
  EXPECT_THROW(train_epochs(p, 0, [&](std::span<const std::size_t>, Rng&) { return ad::sum(p[0].tensor); },
                            TrainOptions{}),
               Error);
}

TEST(Train, MinBatchFoldsTinyTail) {
  auto b = batch_bounds(9, 4, 2);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[1], (std::pair<std::size_t, std::size_t>{4, 9}));
  EXPECT_EQ(batch_bounds(10, 4, 2).size(), 3u);
  EXPECT_EQ(batch_bounds(1, 4, 2).size(), 1u);
}
