#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "tenc/cli/config.hpp"
#include "tenc/cli/losscheck.hpp"
#include "tenc/distill/cycles.hpp"
#include "tenc/encoder/checkpoint.hpp"
#include "tenc/evaldata/dataset.hpp"
#include "tenc/evaldata/report.hpp"
#include "tenc/evaldata/synthetic.hpp"

namespace tenc::cli {

namespace fs = std::filesystem;

inline const std::vector<std::string>& modes() {
  static const std::vector<std::string> m{"synth",         "bootstrap", "label",
                                          "cycle",         "mutual",    "eval",
                                          "baseline-selfdistill", "baseline-contrastive-pairs", "losscheck"};
  return m;
}

inline evaldata::PairDataset load_data(const RunConfig& c) {
  if (c.data.synthetic()) {
    auto d = evaldata::gen_synthetic(c.synth);
    d.name = c.data.name;
    return d;
  }
  evaldata::PairDataset d;
  d.name = c.data.name;
  d.kind = c.train.task;
  d.range = {c.data.range_min, c.data.range_max};
  auto load = [&](const std::string& path, std::vector<evaldata::LabelledPair>& into) {
    if (path.empty()) return;
    auto r = evaldata::load_tsv(path, d.kind, d.range);
    for (const auto& w : r.warnings) warn("evaldata", w);
    into = std::move(r.pairs);
  };
  load(c.data.train, d.train);
  load(c.data.dev, d.dev);
  load(c.data.test, d.test);
  return d;
}

namespace detail {

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw Error("cli", "cannot write '" + p.string() + "'");
  os << text;
}

template <class F>
void write_with(const fs::path& p, F body) {
  std::ofstream os(p);
  if (!os) throw Error("cli", "cannot write '" + p.string() + "'");
  body(os);
}

inline void write_steps(const fs::path& p, const std::vector<optim::StepRecord>& steps) {
  write_with(p, [&](std::ostream& os) {
    os.precision(17);
    os << "step,epoch,loss,lr\n";
    for (const auto& s : steps) os << s.step << ',' << s.epoch << ',' << s.loss << ',' << s.lr << '\n';
  });
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string item = trim(std::string_view(s).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// Dev and test metric of one model.
inline void report_bi(evaldata::MetricReport& r, const distill::TaskData& t, const std::string& data,
                      const std::string& model, const encoder::EncoderParams& p, const std::string& note = "") {
  r.add(data + "/dev", model, t.metric(), distill::bi_metric(p, t.dev, t.metric()), note);
  if (t.test.size() > 0) r.add(data + "/test", model, t.metric(), distill::bi_metric(p, t.test, t.metric()), note);
}

inline void report_cross(evaldata::MetricReport& r, const distill::TaskData& t, const std::string& data,
                         const std::string& model, const encoder::EncoderParams& p, const std::string& note = "") {
  r.add(data + "/dev", model, t.metric(), distill::cross_metric(p, t.dev, t.metric()), note);
  if (t.test.size() > 0) r.add(data + "/test", model, t.metric(), distill::cross_metric(p, t.test, t.metric()), note);
}

inline void report_scores(evaldata::MetricReport& r, const distill::TaskData& t, const std::string& data,
                          const std::string& model, const std::vector<distill::ModelRef>& models) {
  r.add(data + "/dev", model, t.metric(), distill::safe_metric(t.metric(), distill::ensemble_predict(models, t.dev), t.dev.gold));
  if (t.test.size() > 0) {
    r.add(data + "/test", model, t.metric(),
          distill::safe_metric(t.metric(), distill::ensemble_predict(models, t.test), t.test.gold));
  }
}

inline std::string provenance(const distill::PhaseRecord* best) {
  return best ? "cycle " + std::to_string(best->cycle) + " " + distill::to_string(best->phase) : "bootstrap";
}

// The phase whose checkpoint became the final best of its formulation.
inline const distill::PhaseRecord* best_phase(const std::vector<distill::PhaseRecord>& h, distill::Phase phase,
                                              double best) {
  const distill::PhaseRecord* found = nullptr;
  for (const auto& r : h)
    if (r.phase == phase && r.dev_metric == best && !found) found = &r;
  return found;
}

inline void save_history(const fs::path& dir, const distill::TaskData& t, const std::vector<distill::PhaseRecord>& h) {
  write_with(dir / "history.csv", [&](std::ostream& os) { distill::write_history(os, h); });
  fs::create_directories(dir / "labels");
  for (const auto& r : h) {
    const std::string name = "cycle" + std::to_string(r.cycle) + "_" + distill::to_string(r.phase) + ".tsv";
    write_with(dir / "labels" / name,
               [&](std::ostream& os) { distill::write_labels(os, distill::attach(t.pool, r.labels, r.label_source)); });
  }
}

inline void finish(const fs::path& out, const evaldata::MetricReport& r, std::ostream& log) {
  write_with(out / "metrics.csv", [&](std::ostream& os) { r.write_csv(os); });
  r.print_table(log);
}

inline encoder::EncoderParams load_for(const std::string& path, const distill::TaskData& t) {
  auto p = encoder::load_checkpoint(path);
  if (p.hyper().vocab_size != t.vocab.size()) {
    throw Error("cli", "checkpoint '" + path + "' has vocabulary size " + std::to_string(p.hyper().vocab_size) +
                           " but the data gives " + std::to_string(t.vocab.size()));
  }
  return p;
}

}  // namespace detail

// Runs one subcommand, writing artifacts under `out` and a summary to `log`.
// Returns the process exit status.
inline int run(const std::string& mode, const RunConfig& c, const fs::path& out, std::ostream& log) {
  using namespace distill;
  fs::create_directories(out);
  detail::write_file(out / "config.ini", to_text(c));
  evaldata::MetricReport report;

  if (mode == "losscheck") {
    const auto checks = run_losscheck();
    int failed = 0;
    detail::write_with(out / "losscheck.txt", [&](std::ostream& os) {
      for (const auto& ch : checks) {
        const std::string line = std::string(ch.pass ? "PASS  " : "FAIL  ") + ch.name + ": " + ch.detail + "\n";
        os << line;
        log << line;
        failed += !ch.pass;
      }
    });
    return failed == 0 ? 0 : 1;
  }

  const auto data = load_data(c);
  if (mode == "synth") {
    if (!c.data.synthetic()) throw Error("cli", "synth writes generated data; unset data.train");
    evaldata::save_tsv((out / "train.tsv").string(), data.train);
    evaldata::save_tsv((out / "dev.tsv").string(), data.dev);
    evaldata::save_tsv((out / "test.tsv").string(), data.test);
    log << "wrote " << data.train.size() << "/" << data.dev.size() << "/" << data.test.size()
        << " train/dev/test pairs to " << out.string() << '\n';
    return 0;
  }

  const TaskData task = make_task(data, c.train);
  const std::string name = data.name;
  if (mode == "bootstrap") {
    std::vector<optim::StepRecord> steps;
    CycleState s = make_state(task, c.train, &steps);
    encoder::save_checkpoint((out / "original.tenc").string(), s.original);
    encoder::save_checkpoint((out / "bootstrap.tenc").string(), s.bootstrap);
    detail::write_steps(out / "bootstrap_loss.csv", steps);
    detail::report_bi(report, task, name, "random-init", s.original);
    detail::report_bi(report, task, name, "bootstrap", s.bootstrap);
  } else if (mode == "label") {
    if (c.model.empty()) throw Error("cli", "label needs label.model = <checkpoint>");
    const auto p = detail::load_for(c.model, task);
    const auto labels = c.formulation == "bi" ? pseudo_label_bi(p, task.pool, c.train.clamp) : pseudo_label_cross(p, task.pool);
    detail::write_with(out / "labels.tsv", [&](std::ostream& os) { write_labels(os, labels); });
    log << "labelled " << labels.size() << " pairs with " << c.formulation << "-encoder " << c.model << '\n';
    return 0;
  } else if (mode == "cycle") {
    CycleState s = make_state(task, c.train);
    const auto h = flatten(run_cycles(s, task, c.train));
    encoder::save_checkpoint((out / "bootstrap.tenc").string(), s.bootstrap);
    encoder::save_checkpoint((out / "best_bi.tenc").string(), s.best_bi.params);
    if (s.best_cross.valid()) encoder::save_checkpoint((out / "best_cross.tenc").string(), s.best_cross.params);
    detail::save_history(out, task, h);
    detail::report_bi(report, task, name, "bootstrap", s.bootstrap);
    detail::report_bi(report, task, name, "tenc-bi", s.best_bi.params,
                      detail::provenance(detail::best_phase(h, Phase::kCrossToBi, s.best_bi.dev)));
    if (s.best_cross.valid()) {
      detail::report_cross(report, task, name, "tenc-cross", s.best_cross.params,
                           detail::provenance(detail::best_phase(h, Phase::kBiToCross, s.best_cross.dev)));
    }
  } else if (mode == "mutual") {
    if (c.mutual_models < 2) throw Error("cli", "mutual.models must be at least 2");
    std::vector<TrainConfig> cfgs;
    std::vector<CycleState> states;
    for (std::size_t m = 0; m < c.mutual_models; ++m) {
      TrainConfig t = c.train;
      t.seed = c.train.seed + m * c.mutual_seed_stride;
      cfgs.push_back(t);
      states.push_back(make_state(task, t));
    }
    const auto h = run_mutual(states, task, cfgs);
    std::vector<ModelRef> bis, crosses;
    for (std::size_t m = 0; m < states.size(); ++m) {
      const fs::path dir = out / ("model" + std::to_string(m));
      fs::create_directories(dir);
      encoder::save_checkpoint((dir / "best_bi.tenc").string(), states[m].best_bi.params);
      if (states[m].best_cross.valid()) encoder::save_checkpoint((dir / "best_cross.tenc").string(), states[m].best_cross.params);
      const auto flat = flatten(h[m]);
      detail::write_with(dir / "history.csv", [&](std::ostream& os) { write_history(os, flat); });
      if (m == 0) detail::save_history(out, task, flat);  // labels are shared, one copy is enough
      const std::string tag = "model" + std::to_string(m);
      detail::report_bi(report, task, name, tag + "-bootstrap", states[m].bootstrap);
      detail::report_bi(report, task, name, tag + "-tenc-bi", states[m].best_bi.params);
      bis.push_back({&states[m].best_bi.params, Formulation::kBi});
      if (states[m].best_cross.valid()) {
        detail::report_cross(report, task, name, tag + "-tenc-cross", states[m].best_cross.params);
        crosses.push_back({&states[m].best_cross.params, Formulation::kCross});
      }
    }
    detail::report_scores(report, task, name, "ensemble-bi", bis);
    if (!crosses.empty()) detail::report_scores(report, task, name, "ensemble-cross", crosses);
  } else if (mode == "eval") {
    const auto bi = detail::split_list(c.eval_bi), cross = detail::split_list(c.eval_cross);
    if (bi.empty() && cross.empty()) throw Error("cli", "eval needs eval.bi and/or eval.cross checkpoints");
    std::vector<encoder::EncoderParams> models;
    models.reserve(bi.size() + cross.size());
    std::vector<ModelRef> bis, crosses;
    for (const auto& path : bi) {
      models.push_back(detail::load_for(path, task));
      detail::report_bi(report, task, name, "bi:" + path, models.back());
      bis.push_back({&models.back(), Formulation::kBi});
    }
    for (const auto& path : cross) {
      models.push_back(detail::load_for(path, task));
      detail::report_cross(report, task, name, "cross:" + path, models.back());
      crosses.push_back({&models.back(), Formulation::kCross});
    }
    if (bis.size() > 1) detail::report_scores(report, task, name, "ensemble-bi", bis);
    if (crosses.size() > 1) detail::report_scores(report, task, name, "ensemble-cross", crosses);
  } else if (mode == "baseline-selfdistill") {
    CycleState s = make_state(task, c.train);
    const auto h = standard_self_distill(s, task, c.train);
    encoder::save_checkpoint((out / "best_bi.tenc").string(), s.best_bi.params);
    detail::save_history(out, task, h);
    detail::report_bi(report, task, name, "bootstrap", s.bootstrap);
    detail::report_bi(report, task, name, "self-distill-bi", s.best_bi.params,
                      detail::provenance(detail::best_phase(h, Phase::kSelfBi, s.best_bi.dev)));
  } else if (mode == "baseline-contrastive-pairs") {
    const auto original = encoder::init_params(c.train.hyper(task.vocab.size()), c.train.seed);
    std::vector<optim::StepRecord> steps;
    const auto p = contrastive_on_pairs(original, task, c.train, &steps);
    encoder::save_checkpoint((out / "pair_contrastive.tenc").string(), p);
    detail::write_steps(out / "pair_contrastive_loss.csv", steps);
    detail::report_bi(report, task, name, "random-init", original);
    detail::report_bi(report, task, name, "contrastive-on-pairs", p);
  } else {
    throw Error("cli", "unknown mode '" + mode + "'");
  }
  detail::finish(out, report, log);
  return 0;
}

}  // namespace tenc::cli
