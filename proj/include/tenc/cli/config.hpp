#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tenc/distill/config.hpp"
#include "tenc/error.hpp"
#include "tenc/evaldata/synthetic.hpp"

namespace tenc::cli {

// Where pairs come from: three TSV files, or the synthetic generator when
// no train path is given.
struct DataConfig {
  std::string name = "synthetic";
  std::string train, dev, test;
  double range_min = 0.0;
  double range_max = 1.0;

  bool synthetic() const { return train.empty(); }
  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  std::string preset = "base";  // base | desk
  distill::TrainConfig train;
  DataConfig data;
  evaldata::SynthSpec synth;
  std::size_t mutual_models = 2;
  std::uint64_t mutual_seed_stride = 1000;  // model m uses seed + m * stride
  std::string model;                        // checkpoint read by `label`
  std::string formulation = "bi";           // bi | cross, for `label`
  std::string eval_bi, eval_cross;          // comma-separated checkpoints for `eval`
  bool deterministic = false;

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] inline void bad_value(std::string_view key, std::string_view v, const char* want) {
  throw Error("cli", "key '" + std::string(key) + "': '" + std::string(v) + "' is not " + want);
}

inline double to_double(std::string_view key, std::string_view v) {
  double x = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return x;
}

inline std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return x;
}

inline bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

inline std::string from_double(double x) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);  // shortest exact form
  return std::string(buf, p);
}

template <class Parse>
auto checked(std::string_view key, std::string_view v, Parse parse) {
  try {
    return parse(v);
  } catch (const Error& e) {
    throw Error("cli", "key '" + std::string(key) + "': " + e.what());
  }
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::vector<Field> make_fields() {
  std::vector<Field> f;
  auto num = [&](std::string key, auto access) {
    f.push_back({key,
                 [key, access](RunConfig& c, std::string_view v) {
                   auto& ref = access(c);
                   using T = std::remove_reference_t<decltype(ref)>;
                   if constexpr (std::is_same_v<T, double>) {
                     ref = to_double(key, v);
                   } else if constexpr (std::is_same_v<T, bool>) {
                     ref = to_bool(key, v);
                   } else {
                     ref = static_cast<T>(to_uint(key, v));
                   }
                 },
                 [access](const RunConfig& c) {
                   auto& ref = access(const_cast<RunConfig&>(c));
                   using T = std::remove_reference_t<decltype(ref)>;
                   if constexpr (std::is_same_v<T, double>) {
                     return from_double(ref);
                   } else if constexpr (std::is_same_v<T, bool>) {
                     return std::string(ref ? "true" : "false");
                   } else {
                     return std::to_string(ref);
                   }
                 }});
  };
  auto text = [&](std::string key, auto access) {
    f.push_back({key, [access](RunConfig& c, std::string_view v) { access(c) = std::string(v); },
                 [access](const RunConfig& c) { return access(const_cast<RunConfig&>(c)); }});
  };
  auto choice = [&](std::string key, auto access, auto parse) {
    f.push_back({key,
                 [key, access, parse](RunConfig& c, std::string_view v) {
                   access(c) = checked(key, v, parse);
                 },
                 [access](const RunConfig& c) { return std::string(distill::to_string(access(const_cast<RunConfig&>(c)))); }});
  };

  f.push_back({"task",
               [](RunConfig& c, std::string_view v) { c.train.task = checked("task", v, evaldata::parse_task); },
               [](const RunConfig& c) { return std::string(evaldata::task_name(c.train.task)); }});
  f.push_back({"preset",
               [](RunConfig& c, std::string_view v) {
                 if (v != "base" && v != "desk") bad_value("preset", v, "one of base, desk");
                 c.preset = std::string(v);
               },
               [](const RunConfig& c) { return c.preset; }});
  num("seed", [](RunConfig& c) -> auto& { return c.train.seed; });
  num("deterministic", [](RunConfig& c) -> auto& { return c.deterministic; });
  num("cycles", [](RunConfig& c) -> auto& { return c.train.cycles; });
  num("temperature", [](RunConfig& c) -> auto& { return c.train.temperature; });
  num("dropout", [](RunConfig& c) -> auto& { return c.train.dropout; });
  num("warmup", [](RunConfig& c) -> auto& { return c.train.warmup; });
  num("weight_decay", [](RunConfig& c) -> auto& { return c.train.weight_decay; });
  num("clip_norm", [](RunConfig& c) -> auto& { return c.train.clip_norm; });
  num("checkpoint_every", [](RunConfig& c) -> auto& { return c.train.checkpoint_every; });
  num("fit_diagnostics", [](RunConfig& c) -> auto& { return c.train.fit_diagnostics; });
  choice("strategy", [](RunConfig& c) -> auto& { return c.train.strategy; }, distill::parse_strategy);
  choice("clamp", [](RunConfig& c) -> auto& { return c.train.clamp; }, distill::parse_clamp);
  choice("pool", [](RunConfig& c) -> auto& { return c.train.pool; }, distill::parse_pool);

  auto phase = [&](const std::string& name, distill::PhaseConfig distill::TrainConfig::*ph) {
    num(name + ".lr", [ph](RunConfig& c) -> auto& { return (c.train.*ph).lr; });
    num(name + ".batch_size", [ph](RunConfig& c) -> auto& { return (c.train.*ph).batch_size; });
    num(name + ".epochs", [ph](RunConfig& c) -> auto& { return (c.train.*ph).epochs; });
    num(name + ".max_len", [ph](RunConfig& c) -> auto& { return (c.train.*ph).max_len; });
  };
  phase("bootstrap", &distill::TrainConfig::bootstrap);
  phase("bi_to_cross", &distill::TrainConfig::bi_to_cross);
  choice("bi_to_cross.loss", [](RunConfig& c) -> auto& { return c.train.bi_to_cross_loss; }, distill::parse_loss);
  phase("cross_to_bi", &distill::TrainConfig::cross_to_bi);
  choice("cross_to_bi.loss", [](RunConfig& c) -> auto& { return c.train.cross_to_bi_loss; }, distill::parse_loss);

  num("model.d_model", [](RunConfig& c) -> auto& { return c.train.model.d_model; });
  num("model.n_layers", [](RunConfig& c) -> auto& { return c.train.model.n_layers; });
  num("model.n_heads", [](RunConfig& c) -> auto& { return c.train.model.n_heads; });
  num("model.ff_mult", [](RunConfig& c) -> auto& { return c.train.model.ff_mult; });
  num("model.init_std", [](RunConfig& c) -> auto& { return c.train.model.init_std; });
  num("model.position_std", [](RunConfig& c) -> auto& { return c.train.model.position_std; });

  text("data.name", [](RunConfig& c) -> auto& { return c.data.name; });
  text("data.train", [](RunConfig& c) -> auto& { return c.data.train; });
  text("data.dev", [](RunConfig& c) -> auto& { return c.data.dev; });
  text("data.test", [](RunConfig& c) -> auto& { return c.data.test; });
  num("data.range_min", [](RunConfig& c) -> auto& { return c.data.range_min; });
  num("data.range_max", [](RunConfig& c) -> auto& { return c.data.range_max; });

  num("synth.topics", [](RunConfig& c) -> auto& { return c.synth.topics; });
  num("synth.vocab_per_topic", [](RunConfig& c) -> auto& { return c.synth.vocab_per_topic; });
  num("synth.pairs", [](RunConfig& c) -> auto& { return c.synth.pairs; });
  num("synth.min_words", [](RunConfig& c) -> auto& { return c.synth.min_words; });
  num("synth.max_words", [](RunConfig& c) -> auto& { return c.synth.max_words; });
  num("synth.noise", [](RunConfig& c) -> auto& { return c.synth.noise; });
  num("synth.dev_fraction", [](RunConfig& c) -> auto& { return c.synth.dev_fraction; });
  num("synth.test_fraction", [](RunConfig& c) -> auto& { return c.synth.test_fraction; });
  num("synth.seed", [](RunConfig& c) -> auto& { return c.synth.seed; });

  num("mutual.models", [](RunConfig& c) -> auto& { return c.mutual_models; });
  num("mutual.seed_stride", [](RunConfig& c) -> auto& { return c.mutual_seed_stride; });
  text("label.model", [](RunConfig& c) -> auto& { return c.model; });
  f.push_back({"label.formulation",
               [](RunConfig& c, std::string_view v) {
                 if (v != "bi" && v != "cross") bad_value("label.formulation", v, "one of bi, cross");
                 c.formulation = std::string(v);
               },
               [](const RunConfig& c) { return c.formulation; }});
  text("eval.bi", [](RunConfig& c) -> auto& { return c.eval_bi; });
  text("eval.cross", [](RunConfig& c) -> auto& { return c.eval_cross; });
  return f;
}

}  // namespace detail

inline const std::vector<detail::Field>& fields() {
  static const std::vector<detail::Field> f = detail::make_fields();
  return f;
}

inline const detail::Field* find_field(std::string_view key) {
  for (const auto& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

inline std::string valid_keys() {
  std::string s;
  for (const auto& f : fields()) s += (s.empty() ? "" : ", ") + f.key;
  return s;
}

using Assignments = std::vector<std::pair<std::string, std::string>>;

// key = value lines; "[name]" prefixes the keys below it with "name.";
// '#' starts a comment.
inline Assignments parse_text(std::string_view text, const std::string& source = "<config>") {
  Assignments out;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const std::string where = source + ":" + std::to_string(n);
    if (t.front() == '[') {
      if (t.back() != ']') throw Error("cli", where + ": unterminated section header");
      section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw Error("cli", where + ": expected key = value");
    std::string key = detail::trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw Error("cli", where + ": empty key");
    if (!section.empty()) key = section + "." + key;
    out.emplace_back(std::move(key), detail::trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

inline Assignments parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cli", "cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

// "key=value" from the command line.
inline std::pair<std::string, std::string> parse_override(std::string_view kv) {
  const auto eq = kv.find('=');
  if (eq == std::string_view::npos || eq == 0) throw Error("cli", "override '" + std::string(kv) + "' is not key=value");
  return {detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1))};
}

// Later assignments win, so pass file entries before flag overrides. The task
// kind and preset pick the defaults every other key is applied on top of.
// synth.seed follows the run seed unless it is set explicitly.
inline RunConfig resolve(const Assignments& assignments) {
  std::map<std::string, std::string> last;
  for (const auto& [k, v] : assignments) {
    if (!find_field(k)) throw Error("cli", "unknown config key '" + k + "'; valid keys: " + valid_keys());
    last[k] = v;
  }
  RunConfig c;
  for (const char* first : {"task", "preset"}) {
    if (auto it = last.find(first); it != last.end()) find_field(first)->set(c, it->second);
  }
  const auto task = c.train.task;
  c.train = c.preset == "desk" ? distill::TrainConfig::desk(task) : distill::TrainConfig::defaults(task);
  for (const auto& f : fields()) {
    if (auto it = last.find(f.key); it != last.end() && f.key != "synth.seed") f.set(c, it->second);
  }
  c.synth.seed = c.train.seed;
  if (auto it = last.find("synth.seed"); it != last.end()) find_field("synth.seed")->set(c, it->second);
  return c;
}

// Every key with its effective value, grouped into sections. Reading this
// back with resolve(parse_text(...)) gives the same RunConfig.
inline std::string to_text(const RunConfig& c) {
  std::string top, body, section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string value = f.get(c);
    if (dot == std::string::npos) {
      top += f.key + " = " + value + "\n";
      continue;
    }
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      body += "\n[" + s + "]\n";
      section = s;
    }
    body += f.key.substr(dot + 1) + " = " + value + "\n";
  }
  return top + body;
}

}  // namespace tenc::cli
