#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "tenc/autodiff/grad_check.hpp"
#include "tenc/encoder/model.hpp"
#include "tenc/losses.hpp"

namespace tenc::cli {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

inline std::vector<double> leaf_grad(const std::vector<double>& x0, const std::function<ad::Tensor(const ad::Tensor&)>& f) {
  ad::Tensor x = ad::Tensor::parameter({x0.size()}, x0);
  ad::Graph g;
  ad::GraphScope scope(g);
  g.backward(f(x));
  return {x.grad().begin(), x.grad().end()};
}

}  // namespace detail

// Finite-difference checks of every loss through a small encoder, the
// closed-form loss gradients, and the hand-computed loss values.
inline std::vector<CheckResult> run_losscheck(std::size_t seeds = 5) {
  using ad::Tensor;
  std::vector<CheckResult> out;

  encoder::EncoderHyper h;
  h.vocab_size = 14;
  h.max_len = 12;
  h.d_model = 8;
  h.n_layers = 2;
  h.n_heads = 2;
  h.init_std = 0.5;
  h.dropout = 0.1;
  auto seq = [](std::vector<std::size_t> w) {
    encoder::TokenSequence s;
    s.ids.push_back(encoder::Vocabulary::kCls);
    s.ids.insert(s.ids.end(), w.begin(), w.end());
    s.ids.push_back(encoder::Vocabulary::kSep);
    s.mask.assign(s.ids.size(), 1);
    return s;
  };
  const std::vector<encoder::TokenSequence> first{seq({4, 5, 6}), seq({7, 8}), seq({9, 10, 11, 12})};
  const std::vector<encoder::TokenSequence> second{seq({5, 4}), seq({8, 13, 10}), seq({11})};
  std::vector<encoder::TokenSequence> joined;
  for (std::size_t i = 0; i < first.size(); ++i) joined.push_back(encoder::make_cross_sequence(first[i], second[i], h.max_len));
  const std::vector<double> targets{0.9, 0.2, 0.55};

  const char* names[3] = {"grad infonce through encoder", "grad bce_soft through cross-encoder",
                          "grad mse through bi-encoder cosine"};
  double worst[3] = {0, 0, 0};
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    auto p = encoder::init_params(h, seed);
    const std::function<Tensor()> f[3] = {
        [&] {
          Rng r(seed);
          Tensor a = encoder::encode_bi_batch(p, first, true, &r);
          Tensor b = encoder::encode_bi_batch(p, first, true, &r);
          return losses::infonce({a, b, 0.5});
        },
        [&] {
          Rng r(seed);
          return losses::bce_soft({encoder::encode_cross_batch(p, joined, true, &r), targets});
        },
        [&] {
          Rng r(seed);
          Tensor a = encoder::encode_bi_batch(p, first, true, &r);
          Tensor b = encoder::encode_bi_batch(p, second, true, &r);
          return losses::mse({ad::cosine_rows(a, b), targets});
        }};
    for (int k = 0; k < 3; ++k) worst[k] = std::max(worst[k], ad::grad_check(f[k], p.tensors()).max_rel_error);
  }
  for (int k = 0; k < 3; ++k) out.push_back({names[k], worst[k] <= 1e-4, "max rel err " + detail::sci(worst[k])});

  Rng rng(7);
  double eb = 0, em = 0;
  for (int batch = 0; batch < 100; ++batch) {
    const std::size_t n = 1 + rng() % 16;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = 12.0 * (uniform01(rng) - 0.5);
      y[i] = uniform01(rng);
    }
    const auto gb = detail::leaf_grad(x, [&](const Tensor& t) { return losses::bce_soft({t, y}); });
    const auto gm = detail::leaf_grad(x, [&](const Tensor& t) { return losses::mse({t, y}); });
    const auto cb = losses::bce_logit_gradient(x, y);
    const auto cm = losses::mse_gradient(x, y);
    for (std::size_t i = 0; i < n; ++i) {
      eb = std::max(eb, std::abs(gb[i] - cb[i]));
      em = std::max(em, std::abs(gm[i] - cm[i]));
    }
  }
  out.push_back({"bce gradient (sigmoid(x) - y) / N", eb <= 1e-12, "max |diff| " + detail::sci(eb)});
  out.push_back({"mse gradient 2 (x - y) / N", em <= 1e-12, "max |diff| " + detail::sci(em)});

  const Tensor eye = Tensor::constant({2, 2}, {1, 0, 0, 1});
  const double nce = losses::infonce({eye, eye, 1.0}).item() / 2.0;
  out.push_back({"infonce orthogonal batch 0.551444 per anchor", std::abs(nce - 0.551444) <= 1e-6, detail::sci(nce)});
  const double bce = losses::bce_soft({Tensor::vector({0.0}), {0.5}}).item();
  out.push_back({"bce(0, 0.5) = ln 2", std::abs(bce - std::log(2.0)) <= 1e-12, detail::sci(bce - std::log(2.0))});
  const double mse = losses::mse({Tensor::vector({0.2}), {0.5}}).item();
  out.push_back({"mse(0.2, 0.5) = 0.09", std::abs(mse - 0.09) <= 1e-15, detail::sci(mse - 0.09)});
  return out;
}

}  // namespace tenc::cli
