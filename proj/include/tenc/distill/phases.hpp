#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "tenc/distill/data.hpp"
#include "tenc/encoder/model.hpp"
#include "tenc/log.hpp"
#include "tenc/losses.hpp"
#include "tenc/optim/train.hpp"

namespace tenc::distill {

using encoder::EncoderParams;
using encoder::TokenSequence;

enum class Phase { kBootstrap, kBiToCross, kCrossToBi, kSelfBi, kPairContrastive };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::kBootstrap:
      return "bootstrap";
    case Phase::kBiToCross:
      return "bi_to_cross";
    case Phase::kCrossToBi:
      return "cross_to_bi";
    case Phase::kSelfBi:
      return "self_bi";
    default:
      return "pair_contrastive";
  }
}

struct BestModel {
  EncoderParams params;
  double dev = -std::numeric_limits<double>::infinity();
  bool valid() const noexcept { return !params.empty(); }
};

struct CycleState {
  EncoderParams original;   // fixed random init, the "pretrained" starting point
  EncoderParams bootstrap;  // after contrastive tuning
  EncoderParams current_bi;
  EncoderParams current_cross;  // empty until the first bi->cross phase
  std::size_t cycle = 0;
  BestModel best_bi;
  BestModel best_cross;
};

// One dev evaluation at a checkpoint event.
struct EvalEvent {
  std::size_t cycle = 0;
  Phase phase = Phase::kBiToCross;
  std::size_t step = 0;
  double dev = 0.0;
};

struct PhaseRecord {
  std::size_t cycle = 0;  // 1-based
  Phase phase = Phase::kBiToCross;
  double dev_metric = 0.0;   // best dev over this phase's checkpoint events
  double best_so_far = 0.0;  // running best of the formulation after the phase
  double teacher_test = std::nan("");  // test metric of the model that produced the labels
  double student_test = std::nan("");  // test metric of this phase's dev-selected student
  // Loss of the trained student against its labels, eval mode, whole pool;
  // only filled when TrainConfig::fit_diagnostics is set.
  double fit_before = std::nan("");
  double fit_after = std::nan("");
  double fit_floor = std::nan("");
  std::vector<double> labels;
  Source label_source = Source::kGold;
  std::vector<optim::StepRecord> steps;
  std::vector<EvalEvent> events;
};

// ---------------------------------------------------------------------------
// Scoring (eval mode, no dropout, no tape)

inline constexpr std::size_t kEvalChunk = 256;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Raw cosine of each pair's two bi-encoder embeddings.
inline std::vector<double> bi_cosines(const EncoderParams& p, std::span<const TokenSequence> first,
                                      std::span<const TokenSequence> second) {
  ad::NoGradScope no_grad;
  std::vector<double> out;
  out.reserve(first.size());
  for (std::size_t s = 0; s < first.size(); s += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, first.size() - s);
    ad::Tensor a = encoder::encode_bi_batch(p, first.subspan(s, n), false, nullptr);
    ad::Tensor b = encoder::encode_bi_batch(p, second.subspan(s, n), false, nullptr);
    const ad::Tensor c = ad::cosine_rows(a, b);
    out.insert(out.end(), c.values().begin(), c.values().end());
  }
  return out;
}

inline std::vector<double> cross_logits(const EncoderParams& p, std::span<const TokenSequence> joined) {
  ad::NoGradScope no_grad;
  std::vector<double> out;
  out.reserve(joined.size());
  for (std::size_t s = 0; s < joined.size(); s += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, joined.size() - s);
    const ad::Tensor v = encoder::encode_cross_batch(p, joined.subspan(s, n), false, nullptr);
    out.insert(out.end(), v.values().begin(), v.values().end());
  }
  return out;
}

inline double to_target(double cosine, ClampMode mode) {
  return mode == ClampMode::kClamp ? std::clamp(cosine, 0.0, 1.0) : std::clamp(0.5 * (cosine + 1.0), 0.0, 1.0);
}

inline std::vector<double> bi_scores(const EncoderParams& p, const PairSet& s, ClampMode mode) {
  auto c = bi_cosines(p, s.first, s.second);
  for (double& v : c) v = to_target(v, mode);
  return c;
}

inline std::vector<double> cross_scores(const EncoderParams& p, const PairSet& s) {
  auto l = cross_logits(p, s.joined);
  for (double& v : l) v = sigmoid(v);
  return l;
}

inline std::vector<ScoredPair> attach(const PairSet& s, const std::vector<double>& scores, Source src) {
  std::vector<ScoredPair> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = {s.sent1[i], s.sent2[i], scores[i], src};
  return out;
}

// Clamped cosine labels from a bi-encoder.
inline std::vector<ScoredPair> pseudo_label_bi(const EncoderParams& bi, const PairSet& pairs,
                                               ClampMode mode = ClampMode::kClamp) {
  return attach(pairs, bi_scores(bi, pairs, mode), Source::kBi);
}

inline std::vector<ScoredPair> pseudo_label_cross(const EncoderParams& cross, const PairSet& pairs) {
  return attach(pairs, cross_scores(cross, pairs), Source::kCross);
}

// Dev/test metric. The bi-encoder is ranked by raw cosine (clamping would tie
// every negative pair at 0); the cross-encoder by its logit.
inline double bi_metric(const EncoderParams& p, const PairSet& s, evaldata::MetricKind k) {
  if (s.size() == 0) return std::nan("");
  return safe_metric(k, bi_cosines(p, s.first, s.second), s.gold);
}

inline double cross_metric(const EncoderParams& p, const PairSet& s, evaldata::MetricKind k) {
  if (s.size() == 0) return std::nan("");
  return safe_metric(k, cross_logits(p, s.joined), s.gold);
}

// ---------------------------------------------------------------------------
// Training helpers

namespace detail {

inline optim::TrainOptions options(const PhaseConfig& ph, const TrainConfig& cfg, std::uint64_t seed,
                                   std::size_t min_batch = 1) {
  optim::TrainOptions o;
  o.epochs = ph.epochs;
  o.batch_size = ph.batch_size;
  o.lr = ph.lr;
  o.warmup = cfg.warmup;
  o.adamw.weight_decay = cfg.weight_decay;
  o.adamw.clip_norm = cfg.clip_norm;
  o.seed = seed;
  o.checkpoint_every = cfg.checkpoint_every;
  o.min_batch = min_batch;
  return o;
}

template <class T>
std::vector<T> gather(const std::vector<T>& v, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

// Rows [begin, begin + n) of a [R, d] tensor.
inline ad::Tensor rows(const ad::Tensor& t, std::size_t begin, std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = begin + i;
  return ad::embedding_lookup(t, r);
}

// Both sentences of every pair go through the encoder as one padded batch.
inline ad::Tensor pair_embeddings(const EncoderParams& p, const std::vector<TokenSequence>& first,
                                  const std::vector<TokenSequence>& second, Rng& rng, ad::Tensor& a) {
  std::vector<TokenSequence> all = first;
  all.insert(all.end(), second.begin(), second.end());
  ad::Tensor e = encoder::encode_bi_batch(p, all, true, &rng);
  a = rows(e, 0, first.size());
  return rows(e, first.size(), second.size());
}

inline ad::Tensor cross_loss(const ad::Tensor& logits, std::vector<double> targets, LossKind kind) {
  if (kind == LossKind::kBce) return losses::bce_soft({logits, std::move(targets)});
  return losses::mse({ad::sigmoid(logits), std::move(targets)});
}

inline ad::Tensor bi_loss(const ad::Tensor& cosines, std::vector<double> targets, LossKind kind) {
  if (kind == LossKind::kMse) return losses::mse({cosines, std::move(targets)});
  // Loss-matrix variant: the cosine itself plays the logit.
  return losses::bce_soft({cosines, std::move(targets)});
}

inline double fit_floor(const std::vector<double>& targets, LossKind kind) {
  return kind == LossKind::kBce ? losses::bce_floor(targets) : 0.0;
}

inline double cross_fit(const EncoderParams& p, const PairSet& s, const std::vector<double>& t, LossKind kind) {
  ad::NoGradScope no_grad;
  return cross_loss(ad::Tensor::vector(cross_logits(p, s.joined)), t, kind).item();
}

inline double bi_fit(const EncoderParams& p, const PairSet& s, const std::vector<double>& t, LossKind kind) {
  ad::NoGradScope no_grad;
  return bi_loss(ad::Tensor::vector(bi_cosines(p, s.first, s.second)), t, kind).item();
}

inline void check_sources(const std::vector<ScoredPair>& labels, Source expected, const char* phase) {
  for (const auto& l : labels) {
    if (l.source != expected && l.source != Source::kMutual) {
      throw Error("distill", std::string(phase) + " received labels from '" + to_string(l.source) + "'");
    }
  }
}

inline void warn_duplicates(std::span<const std::string> texts, std::size_t& warned) {
  std::unordered_set<std::string_view> seen;
  std::size_t dup = 0;
  for (const auto& t : texts)
    if (!seen.insert(t).second) ++dup;
  if (dup > 0 && warned++ == 0) {
    warn("distill", std::to_string(dup) + " duplicate sentence(s) in a contrastive batch; kept as hard negatives");
  }
}

}  // namespace detail

// Contrastive tuning with dropout as the only augmentation: every sentence is
// encoded twice in training mode and the two views form the positive pair.
inline EncoderParams bootstrap_bi(const EncoderParams& original, const TaskData& task, const TrainConfig& cfg,
                                  std::vector<optim::StepRecord>* log = nullptr) {
  EncoderParams p = original;
  if (cfg.bootstrap.epochs == 0) return p;
  const auto& sents = task.sentences;
  if (sents.size() < cfg.bootstrap.batch_size) {
    throw Error("distill", "bootstrap corpus (" + std::to_string(sents.size()) + " sentences) is smaller than batch size " +
                               std::to_string(cfg.bootstrap.batch_size));
  }
  std::size_t warned = 0;
  auto loss = [&](std::span<const std::size_t> batch, Rng& rng) {
    detail::warn_duplicates(detail::gather(task.sentence_text, batch), warned);
    auto views = detail::gather(sents, batch);
    ad::Tensor a;
    ad::Tensor b = detail::pair_embeddings(p, views, views, rng, a);
    return losses::infonce({a, b, cfg.temperature});
  };
  auto steps = optim::train_epochs(p.tensors(), sents.size(), loss,
                                   detail::options(cfg.bootstrap, cfg, SeedTree(cfg.seed).derive("bootstrap"), 2));
  if (log) *log = std::move(steps);
  return p;
}

// Label-leak control: InfoNCE where the two views are the two sentences of
// each pair instead of dropout duals. Same configuration as the bootstrap.
inline EncoderParams contrastive_on_pairs(const EncoderParams& original, const TaskData& task,
                                          const TrainConfig& cfg, std::vector<optim::StepRecord>* log = nullptr) {
  EncoderParams p = original;
  if (cfg.bootstrap.epochs == 0) return p;
  const PairSet& pool = task.pool;
  std::size_t warned = 0;
  auto loss = [&](std::span<const std::size_t> batch, Rng& rng) {
    auto texts = detail::gather(pool.sent1, batch);
    auto t2 = detail::gather(pool.sent2, batch);
    texts.insert(texts.end(), t2.begin(), t2.end());
    detail::warn_duplicates(texts, warned);
    ad::Tensor a;
    ad::Tensor b = detail::pair_embeddings(p, detail::gather(pool.first, batch), detail::gather(pool.second, batch),
                                           rng, a);
    return losses::infonce({a, b, cfg.temperature});
  };
  auto steps = optim::train_epochs(p.tensors(), pool.size(), loss,
                                   detail::options(cfg.bootstrap, cfg, SeedTree(cfg.seed).derive("pair_contrastive"), 2));
  if (log) *log = std::move(steps);
  return p;
}

// Fresh state: original weights from the run seed, then the contrastive
// bootstrap, which also seeds best_bi.
inline CycleState make_state(const TaskData& task, const TrainConfig& cfg, std::vector<optim::StepRecord>* log = nullptr) {
  CycleState s;
  s.original = encoder::init_params(cfg.hyper(task.vocab.size()), cfg.seed);
  s.bootstrap = bootstrap_bi(s.original, task, cfg, log);
  s.current_bi = s.bootstrap;
  s.best_bi = {s.bootstrap, bi_metric(s.bootstrap, task.dev, task.metric())};
  return s;
}

// Initial student weights for a phase.
inline EncoderParams init_cross(const CycleState& s, const TrainConfig& cfg, std::size_t cycle) {
  // Sequential: start from the bi-encoder that just produced the labels.
  EncoderParams p = cfg.strategy == WeightStrategy::kRefreshing ? s.original : s.current_bi;
  Rng head = SeedTree(cfg.seed).stream("head", cycle);
  encoder::reinit_head(p, head);
  return p;
}

inline EncoderParams init_bi(const CycleState& s, const TrainConfig& cfg) {
  if (cfg.strategy == WeightStrategy::kRefreshing || s.current_cross.empty()) return s.bootstrap;
  return s.current_cross;  // the cross head is carried along but never read by the bi path
}

namespace detail {

// Trains `student` in place, evaluating on dev at every checkpoint event.
// Returns the dev-best weights seen during the phase and updates `best`
// whenever the dev metric strictly improves on it.
template <class Metric>
EncoderParams train_student(EncoderParams& student, std::size_t n, const optim::BatchLoss& loss,
                            const optim::TrainOptions& opt, Metric&& metric, BestModel& best, PhaseRecord& rec) {
  EncoderParams phase_best;
  double phase_dev = -std::numeric_limits<double>::infinity();
  auto evaluate = [&](std::size_t step) {
    const double dev = metric(student);
    rec.events.push_back({rec.cycle, rec.phase, step, dev});
    if (phase_best.empty() || dev > phase_dev) {
      phase_best = student;
      phase_dev = dev;
    }
    if (dev > best.dev) best = {student, dev};
  };
  if (opt.epochs == 0) {
    evaluate(0);
  } else {
    rec.steps = optim::train_epochs(student.tensors(), n, loss, opt,
                                    [&](const optim::CheckpointEvent& e) { evaluate(e.step); });
  }
  rec.dev_metric = phase_dev;
  rec.best_so_far = best.dev;
  return phase_best;
}

}  // namespace detail

// Cross-encoder learns the bi-encoder's labels (soft BCE on logits by default).
inline PhaseRecord distill_bi_to_cross(CycleState& s, const TaskData& task, const std::vector<ScoredPair>& labels,
                                       const TrainConfig& cfg) {
  if (s.current_bi.empty()) throw Error("distill", "bi->cross phase needs a bi-encoder");
  if (labels.size() != task.pool.size()) throw Error("distill", "label count does not match the pair pool");
  detail::check_sources(labels, Source::kBi, "bi->cross");
  PhaseRecord rec;
  rec.cycle = s.cycle;
  rec.phase = Phase::kBiToCross;
  rec.labels = scores_of(labels);
  rec.label_source = labels.empty() ? Source::kBi : labels.front().source;
  losses::check_targets(rec.labels);
  rec.teacher_test = bi_metric(s.current_bi, task.test, task.metric());

  EncoderParams student = init_cross(s, cfg, s.cycle);
  const PairSet& pool = task.pool;
  const LossKind kind = cfg.bi_to_cross_loss;
  if (cfg.fit_diagnostics) {
    rec.fit_before = detail::cross_fit(student, pool, rec.labels, kind);
    rec.fit_floor = detail::fit_floor(rec.labels, kind);
  }
  auto loss = [&](std::span<const std::size_t> batch, Rng& rng) {
    auto seqs = detail::gather(pool.joined, batch);
    return detail::cross_loss(encoder::encode_cross_batch(student, seqs, true, &rng), detail::gather(rec.labels, batch),
                              kind);
  };
  auto metric = [&](const EncoderParams& p) { return cross_metric(p, task.dev, task.metric()); };
  const auto opt = detail::options(cfg.bi_to_cross, cfg, SeedTree(cfg.seed).derive("bi_to_cross", s.cycle));
  EncoderParams best = detail::train_student(student, pool.size(), loss, opt, metric, s.best_cross, rec);
  if (cfg.fit_diagnostics) rec.fit_after = detail::cross_fit(student, pool, rec.labels, kind);
  rec.student_test = cross_metric(best, task.test, task.metric());
  s.current_cross = std::move(student);
  return rec;
}

// Bi-encoder learns the cross-encoder's labels (MSE on cosines by default).
inline PhaseRecord distill_cross_to_bi(CycleState& s, const TaskData& task, const std::vector<ScoredPair>& labels,
                                       const TrainConfig& cfg) {
  if (s.current_cross.empty()) throw Error("distill", "cross->bi phase needs a cross-encoder");
  if (labels.size() != task.pool.size()) throw Error("distill", "label count does not match the pair pool");
  detail::check_sources(labels, Source::kCross, "cross->bi");
  PhaseRecord rec;
  rec.cycle = s.cycle;
  rec.phase = Phase::kCrossToBi;
  rec.labels = scores_of(labels);
  rec.label_source = labels.empty() ? Source::kCross : labels.front().source;
  losses::check_targets(rec.labels);
  rec.teacher_test = cross_metric(s.current_cross, task.test, task.metric());

  EncoderParams student = init_bi(s, cfg);
  const PairSet& pool = task.pool;
  const LossKind kind = cfg.cross_to_bi_loss;
  if (cfg.fit_diagnostics) {
    rec.fit_before = detail::bi_fit(student, pool, rec.labels, kind);
    rec.fit_floor = detail::fit_floor(rec.labels, kind);
  }
  auto loss = [&](std::span<const std::size_t> batch, Rng& rng) {
    ad::Tensor a;
    ad::Tensor b = detail::pair_embeddings(student, detail::gather(pool.first, batch),
                                           detail::gather(pool.second, batch), rng, a);
    return detail::bi_loss(ad::cosine_rows(a, b), detail::gather(rec.labels, batch), kind);
  };
  auto metric = [&](const EncoderParams& p) { return bi_metric(p, task.dev, task.metric()); };
  const auto opt = detail::options(cfg.cross_to_bi, cfg, SeedTree(cfg.seed).derive("cross_to_bi", s.cycle));
  EncoderParams best = detail::train_student(student, pool.size(), loss, opt, metric, s.best_bi, rec);
  if (cfg.fit_diagnostics) rec.fit_after = detail::bi_fit(student, pool, rec.labels, kind);
  rec.student_test = bi_metric(best, task.test, task.metric());
  s.current_bi = std::move(student);
  return rec;
}

// Standard self-distillation step: the bi-encoder labels pairs for a fresh
// bi-encoder student. No cross-encoder is involved.
inline PhaseRecord distill_bi_to_bi(CycleState& s, const TaskData& task, const TrainConfig& cfg) {
  PhaseRecord rec;
  rec.cycle = s.cycle;
  rec.phase = Phase::kSelfBi;
  rec.labels = bi_scores(s.current_bi, task.pool, cfg.clamp);
  rec.label_source = Source::kBi;
  rec.teacher_test = bi_metric(s.current_bi, task.test, task.metric());
  EncoderParams student = cfg.strategy == WeightStrategy::kRefreshing ? s.bootstrap : s.current_bi;
  const PairSet& pool = task.pool;
  auto loss = [&](std::span<const std::size_t> batch, Rng& rng) {
    ad::Tensor a;
    ad::Tensor b = detail::pair_embeddings(student, detail::gather(pool.first, batch),
                                           detail::gather(pool.second, batch), rng, a);
    return detail::bi_loss(ad::cosine_rows(a, b), detail::gather(rec.labels, batch), LossKind::kMse);
  };
  auto metric = [&](const EncoderParams& p) { return bi_metric(p, task.dev, task.metric()); };
  const auto opt = detail::options(cfg.cross_to_bi, cfg, SeedTree(cfg.seed).derive("self_bi", s.cycle));
  EncoderParams best = detail::train_student(student, pool.size(), loss, opt, metric, s.best_bi, rec);
  rec.student_test = bi_metric(best, task.test, task.metric());
  s.current_bi = std::move(student);
  return rec;
}

}  // namespace tenc::distill
