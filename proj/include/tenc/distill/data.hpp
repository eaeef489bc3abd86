#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "tenc/distill/config.hpp"
#include "tenc/encoder/tokenizer.hpp"
#include "tenc/evaldata/dataset.hpp"
#include "tenc/evaldata/metrics.hpp"

namespace tenc::distill {

enum class Source { kGold, kBi, kCross, kMutual };

inline const char* to_string(Source s) {
  switch (s) {
    case Source::kGold:
      return "gold";
    case Source::kBi:
      return "bi";
    case Source::kCross:
      return "cross";
    default:
      return "mutual";
  }
}

struct ScoredPair {
  std::string sent1;
  std::string sent2;
  double score = 0.0;
  Source source = Source::kGold;
};

inline std::vector<double> scores_of(const std::vector<ScoredPair>& pairs) {
  std::vector<double> s;
  s.reserve(pairs.size());
  for (const auto& p : pairs) s.push_back(p.score);
  return s;
}

// Tokenized view of a list of pairs: per-sentence sequences for the
// bi-encoder and joined sequences for the cross-encoder.
struct PairSet {
  std::vector<std::string> sent1, sent2;
  std::vector<encoder::TokenSequence> first, second, joined;
  std::vector<double> gold;  // empty when unlabelled

  std::size_t size() const noexcept { return sent1.size(); }
};

inline PairSet make_pair_set(const std::vector<evaldata::LabelledPair>& pairs, const encoder::Vocabulary& vocab,
                             std::size_t bi_len, std::size_t cross_len, bool keep_gold) {
  PairSet s;
  for (const auto& p : pairs) {
    s.sent1.push_back(p.sent1);
    s.sent2.push_back(p.sent2);
    s.first.push_back(encoder::tokenize(p.sent1, vocab, bi_len));
    s.second.push_back(encoder::tokenize(p.sent2, vocab, bi_len));
    // Each side is tokenized with the cross budget before joining so that
    // truncation is decided by the joint length, not the bi length.
    s.joined.push_back(encoder::make_cross_sequence(encoder::tokenize(p.sent1, vocab, cross_len),
                                                    encoder::tokenize(p.sent2, vocab, cross_len), cross_len));
    if (keep_gold) s.gold.push_back(p.score);
  }
  return s;
}

// Everything one distillation run reads: vocabulary, the unlabelled pair pool,
// the unique sentences of that pool, and labelled dev/test sets.
struct TaskData {
  encoder::Vocabulary vocab;
  evaldata::TaskKind kind = evaldata::TaskKind::kSimilarity;
  PairSet pool;
  std::vector<encoder::TokenSequence> sentences;  // unique pool sentences, bootstrap length
  std::vector<std::string> sentence_text;
  PairSet dev;
  PairSet test;

  evaldata::MetricKind metric() const {
    return kind == evaldata::TaskKind::kSimilarity ? evaldata::MetricKind::kSpearman : evaldata::MetricKind::kAuc;
  }
};

inline TaskData make_task(const evaldata::PairDataset& d, const TrainConfig& cfg) {
  if (d.dev.empty()) throw Error("distill", "dataset '" + d.name + "' has no dev split for checkpoint selection");
  TaskData t;
  t.kind = d.kind;
  std::vector<std::string> texts;
  for (const auto* split : {&d.train, &d.dev, &d.test}) {
    for (const auto& p : *split) {
      texts.push_back(p.sent1);
      texts.push_back(p.sent2);
    }
  }
  t.vocab = encoder::build_vocabulary(texts);
  const std::size_t bi_len = cfg.cross_to_bi.max_len, cross_len = cfg.bi_to_cross.max_len;
  std::vector<evaldata::LabelledPair> pool = d.train;
  if (cfg.pool == PairPool::kAll) {
    pool.insert(pool.end(), d.dev.begin(), d.dev.end());
    pool.insert(pool.end(), d.test.begin(), d.test.end());
  }
  if (pool.empty()) throw Error("distill", "no unlabelled pairs to distill on");
  t.pool = make_pair_set(pool, t.vocab, bi_len, cross_len, /*keep_gold=*/false);
  t.dev = make_pair_set(d.dev, t.vocab, bi_len, cross_len, true);
  t.test = make_pair_set(d.test, t.vocab, bi_len, cross_len, true);
  std::unordered_map<std::string, bool> seen;
  for (std::size_t i = 0; i < t.pool.size(); ++i) {
    for (const auto* s : {&t.pool.sent1[i], &t.pool.sent2[i]}) {
      if (seen.emplace(*s, true).second) {
        t.sentence_text.push_back(*s);
        t.sentences.push_back(encoder::tokenize(*s, t.vocab, cfg.bootstrap.max_len));
      }
    }
  }
  return t;
}

// Metric of `pred` against gold. A constant prediction carries no ranking
// information and scores 0 (Spearman) or 0.5 (AUC) instead of failing.
inline double safe_metric(evaldata::MetricKind k, std::span<const double> pred, std::span<const double> gold) {
  const bool constant = std::all_of(pred.begin(), pred.end(), [&](double v) { return v == pred[0]; });
  if (constant) return k == evaldata::MetricKind::kSpearman ? 0.0 : 0.5;
  return evaldata::evaluate(k, pred, gold);
}

// Pseudo-label dump: sent1 \t sent2 \t score \t source
inline void write_labels(std::ostream& os, const std::vector<ScoredPair>& labels) {
  const auto old = os.precision(17);
  for (const auto& p : labels) os << p.sent1 << '\t' << p.sent2 << '\t' << p.score << '\t' << to_string(p.source) << '\n';
  os.precision(old);
}

}  // namespace tenc::distill
