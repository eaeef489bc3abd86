#pragma once

#include <algorithm>
#include <ostream>
#include <span>
#include <vector>

#include "tenc/distill/phases.hpp"

namespace tenc::distill {

struct CycleRecord {
  PhaseRecord bi_to_cross;
  PhaseRecord cross_to_bi;
};

// Element-wise mean of every model's scores, clamped back into [0,1].
inline std::vector<double> mutual_labels(const std::vector<std::vector<double>>& per_model) {
  if (per_model.size() < 2) throw Error("distill", "mutual labels need at least two models");
  const std::size_t n = per_model.front().size();
  for (const auto& s : per_model) {
    if (s.size() != n) {
      throw Error("distill", "models produced " + std::to_string(s.size()) + " and " + std::to_string(n) + " scores");
    }
  }
  std::vector<double> out(n, 0.0);
  for (const auto& s : per_model)
    for (std::size_t i = 0; i < n; ++i) out[i] += s[i];
  const double k = static_cast<double>(per_model.size());
  for (double& v : out) v = std::clamp(v / k, 0.0, 1.0);
  return out;
}

namespace detail {

// Shared loop for self- and mutual-distillation. Models only meet at the
// labelling barriers: each produces scores, the scores are averaged when
// there is more than one model, and every model trains on the same list.
inline std::vector<std::vector<CycleRecord>> run_engine(std::span<CycleState> states, const TaskData& task,
                                                        std::span<const TrainConfig> cfgs) {
  if (states.empty() || states.size() != cfgs.size()) throw Error("distill", "one config per model is required");
  const std::size_t cycles = cfgs[0].cycles;
  for (const auto& c : cfgs) {
    if (c.cycles != cycles) throw Error("distill", "all models must run the same number of cycles");
  }
  for (const auto& s : states) {
    if (s.bootstrap.empty()) throw Error("distill", "run_cycles needs a bootstrapped state");
  }
  const bool mutual = states.size() > 1;
  auto shared = [&](auto&& score, Source own) {
    std::vector<std::vector<double>> all;
    for (std::size_t m = 0; m < states.size(); ++m) all.push_back(score(m));
    return attach(task.pool, mutual ? mutual_labels(all) : all.front(), mutual ? Source::kMutual : own);
  };
  std::vector<std::vector<CycleRecord>> history(states.size());
  for (std::size_t k = 1; k <= cycles; ++k) {
    for (auto& s : states) s.cycle = k;
    const auto to_cross = shared(
        [&](std::size_t m) { return bi_scores(states[m].current_bi, task.pool, cfgs[m].clamp); }, Source::kBi);
    std::vector<CycleRecord> recs(states.size());
    for (std::size_t m = 0; m < states.size(); ++m) {
      recs[m].bi_to_cross = distill_bi_to_cross(states[m], task, to_cross, cfgs[m]);
    }
    const auto to_bi = shared([&](std::size_t m) { return cross_scores(states[m].current_cross, task.pool); },
                              Source::kCross);
    for (std::size_t m = 0; m < states.size(); ++m) {
      recs[m].cross_to_bi = distill_cross_to_bi(states[m], task, to_bi, cfgs[m]);
      history[m].push_back(std::move(recs[m]));
    }
  }
  return history;
}

}  // namespace detail

// Alternates bi->cross and cross->bi for cfg.cycles cycles. The independently
// best bi and cross end up in state.best_bi / state.best_cross.
inline std::vector<CycleRecord> run_cycles(CycleState& state, const TaskData& task, const TrainConfig& cfg) {
  return std::move(detail::run_engine(std::span<CycleState>(&state, 1), task, std::span<const TrainConfig>(&cfg, 1))[0]);
}

// Runs the models side by side, sharing averaged labels at every phase.
inline std::vector<std::vector<CycleRecord>> run_mutual(std::span<CycleState> states, const TaskData& task,
                                                        std::span<const TrainConfig> cfgs) {
  if (states.size() < 2) throw Error("distill", "mutual distillation needs at least two models");
  return detail::run_engine(states, task, cfgs);
}

// Baseline where the bi-encoder teaches a bi-encoder. Same cycle count as
// run_cycles; only state.best_bi is meaningful afterwards.
inline std::vector<PhaseRecord> standard_self_distill(CycleState& state, const TaskData& task,
                                                      const TrainConfig& cfg) {
  if (state.bootstrap.empty()) throw Error("distill", "standard self-distillation needs a bootstrapped state");
  std::vector<PhaseRecord> history;
  for (std::size_t k = 1; k <= cfg.cycles; ++k) {
    state.cycle = k;
    history.push_back(distill_bi_to_bi(state, task, cfg));
  }
  return history;
}

enum class Formulation { kBi, kCross };

struct ModelRef {
  const EncoderParams* params = nullptr;
  Formulation formulation = Formulation::kBi;
};

// Mean of per-model scores: clamped cosine for bi-encoders, sigmoid of the
// logit for cross-encoders.
inline std::vector<double> ensemble_predict(std::span<const ModelRef> models, const PairSet& pairs,
                                            ClampMode mode = ClampMode::kClamp) {
  if (models.empty()) throw Error("distill", "ensemble needs at least one model");
  const Formulation f = models.front().formulation;
  std::vector<std::vector<double>> all;
  for (const auto& m : models) {
    if (m.formulation != f) throw Error("distill", "ensemble mixes bi- and cross-encoders");
    all.push_back(f == Formulation::kBi ? bi_scores(*m.params, pairs, mode) : cross_scores(*m.params, pairs));
  }
  if (all.size() == 1) return all.front();
  return mutual_labels(all);
}

inline void write_history(std::ostream& os, std::span<const PhaseRecord> phases, bool header = true) {
  if (header) os << "cycle,phase,dev_metric,best_so_far\n";
  const auto old = os.precision(17);
  for (const auto& p : phases) os << p.cycle << ',' << to_string(p.phase) << ',' << p.dev_metric << ',' << p.best_so_far << '\n';
  os.precision(old);
}

inline std::vector<PhaseRecord> flatten(const std::vector<CycleRecord>& h) {
  std::vector<PhaseRecord> out;
  for (const auto& c : h) {
    out.push_back(c.bi_to_cross);
    out.push_back(c.cross_to_bi);
  }
  return out;
}

}  // namespace tenc::distill
