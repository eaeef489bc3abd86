#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tenc/evaldata/dataset.hpp"
#include "tenc/rng.hpp"

namespace tenc::evaldata {

struct SynthSpec {
  std::size_t topics = 8;
  std::size_t vocab_per_topic = 25;
  std::size_t pairs = 2000;
  std::size_t min_words = 6;
  std::size_t max_words = 12;
  double noise = 0.1;  // chance a word is drawn uniformly from the whole vocabulary
  double dev_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 0;

  bool operator==(const SynthSpec&) const = default;

  void validate() const {
    if (topics < 2) throw Error("evaldata", "synthetic data needs at least 2 topics");
    if (vocab_per_topic == 0 || pairs < 3) throw Error("evaldata", "synthetic data needs words and at least 3 pairs");
    if (min_words == 0 || min_words > max_words) throw Error("evaldata", "synthetic sentence length range is empty");
    if (!(noise >= 0.0 && noise <= 1.0)) throw Error("evaldata", "synthetic noise must lie in [0, 1]");
    if (!(dev_fraction > 0.0 && test_fraction > 0.0 && dev_fraction + test_fraction < 1.0)) {
      throw Error("evaldata", "synthetic dev/test fractions must be positive and sum below 1");
    }
  }
};

inline std::string synth_word(std::size_t topic, std::size_t j) {
  return "t" + std::to_string(topic) + "w" + std::to_string(j);
}

namespace detail {

inline double mixture_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Weights of a random Dirichlet(1) draw over `active`, zero elsewhere.
inline std::vector<double> draw_mixture(const std::vector<std::size_t>& active, std::size_t k, Rng& rng) {
  std::vector<double> w(k, 0.0);
  double total = 0.0;
  for (std::size_t t : active) {
    const double e = -std::log(1.0 - uniform01(rng));
    w[t] += e;
    total += e;
  }
  for (double& x : w) x /= total;
  return w;
}

inline std::size_t draw_index(std::size_t n, Rng& rng) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

// `count` distinct topics, optionally avoiding those already in `exclude`.
inline std::vector<std::size_t> draw_topics(std::size_t count, std::size_t k, const std::vector<std::size_t>& exclude,
                                            Rng& rng) {
  std::vector<std::size_t> pool;
  for (std::size_t t = 0; t < k; ++t) {
    if (std::find(exclude.begin(), exclude.end(), t) == exclude.end()) pool.push_back(t);
  }
  std::vector<std::size_t> out;
  while (out.size() < count && !pool.empty()) {
    const std::size_t i = draw_index(pool.size(), rng);
    out.push_back(pool[i]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(i));
  }
  return out;
}

inline std::string draw_sentence(const std::vector<double>& mix, const SynthSpec& s, Rng& rng) {
  const std::size_t len = s.min_words + draw_index(s.max_words - s.min_words + 1, rng);
  std::string out;
  for (std::size_t i = 0; i < len; ++i) {
    std::size_t topic = 0;
    if (uniform01(rng) < s.noise) {
      topic = draw_index(s.topics, rng);
    } else {
      double u = uniform01(rng);
      topic = mix.size() - 1;
      for (std::size_t t = 0; t < mix.size(); ++t) {
        if (u < mix[t]) {
          topic = t;
          break;
        }
        u -= mix[t];
      }
      while (mix[topic] == 0.0) --topic;  // round-off at the tail
    }
    if (!out.empty()) out += ' ';
    out += synth_word(topic, draw_index(s.vocab_per_topic, rng));
  }
  return out;
}

}  // namespace detail

struct SynthPair {
  LabelledPair pair;
  std::vector<double> mix1;
  std::vector<double> mix2;
};

// Pairs whose sentences are bags of words drawn from topic mixtures. The
// second mixture is related to the first in one of four ways (same, same
// topics reweighted, one topic shared, disjoint) so gold scores cover [0,1].
// Gold is the cosine of the two mixture vectors.
inline std::vector<SynthPair> gen_synthetic_pairs(const SynthSpec& s) {
  s.validate();
  Rng rng = SeedTree(s.seed).stream("synth");
  std::vector<SynthPair> out;
  out.reserve(s.pairs);
  const std::size_t max_active = std::min<std::size_t>(3, s.topics);
  for (std::size_t i = 0; i < s.pairs; ++i) {
    const auto t1 = detail::draw_topics(1 + detail::draw_index(max_active, rng), s.topics, {}, rng);
    auto m1 = detail::draw_mixture(t1, s.topics, rng);
    std::vector<double> m2;
    switch (detail::draw_index(4, rng)) {
      case 0:
        m2 = m1;
        break;
      case 1:
        m2 = detail::draw_mixture(t1, s.topics, rng);
        break;
      case 2: {
        std::vector<std::size_t> t2{t1[detail::draw_index(t1.size(), rng)]};
        const auto extra = detail::draw_topics(detail::draw_index(max_active, rng), s.topics, t2, rng);
        t2.insert(t2.end(), extra.begin(), extra.end());
        m2 = detail::draw_mixture(t2, s.topics, rng);
        break;
      }
      default: {
        auto t2 = detail::draw_topics(1 + detail::draw_index(max_active, rng), s.topics, t1, rng);
        if (t2.empty()) t2 = t1;
        m2 = detail::draw_mixture(t2, s.topics, rng);
        break;
      }
    }
    SynthPair p;
    p.pair.sent1 = detail::draw_sentence(m1, s, rng);
    p.pair.sent2 = detail::draw_sentence(m2, s, rng);
    p.pair.score = std::clamp(detail::mixture_cosine(m1, m2), 0.0, 1.0);
    p.mix1 = std::move(m1);
    p.mix2 = std::move(m2);
    out.push_back(std::move(p));
  }
  return out;
}

// Deterministic in s.seed. Splits are contiguous: train, dev, test.
inline PairDataset gen_synthetic(const SynthSpec& s) {
  const auto pairs = gen_synthetic_pairs(s);
  const auto n = static_cast<double>(s.pairs);
  const auto n_dev = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(s.dev_fraction * n)));
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(s.test_fraction * n)));
  const std::size_t n_train = s.pairs - n_dev - n_test;
  if (n_train == 0) throw Error("evaldata", "synthetic split leaves no training pairs");
  PairDataset d;
  d.name = "synthetic";
  d.kind = TaskKind::kSimilarity;
  d.range = {0.0, 1.0};
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& dst = i < n_train ? d.train : i < n_train + n_dev ? d.dev : d.test;
    dst.push_back(pairs[i].pair);
  }
  return d;
}

}  // namespace tenc::evaldata
