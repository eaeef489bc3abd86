#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "tenc/error.hpp"

namespace tenc::evaldata {

enum class TaskKind { kSimilarity, kBinary };

inline const char* task_name(TaskKind k) { return k == TaskKind::kSimilarity ? "similarity" : "binary"; }

inline TaskKind parse_task(std::string_view s) {
  if (s == "similarity") return TaskKind::kSimilarity;
  if (s == "binary") return TaskKind::kBinary;
  throw Error("evaldata", "unknown task kind '" + std::string(s) + "' (expected similarity or binary)");
}

struct ScoreRange {
  double min = 0.0;
  double max = 1.0;
};

struct LabelledPair {
  std::string sent1;
  std::string sent2;
  double score = 0.0;  // normalized to [0,1]; 0/1 for binary tasks
};

struct PairDataset {
  std::string name;
  TaskKind kind = TaskKind::kSimilarity;
  ScoreRange range;
  std::vector<LabelledPair> train;  // labels, if any, are never read by distillation
  std::vector<LabelledPair> dev;
  std::vector<LabelledPair> test;
};

inline std::vector<double> scores_of(const std::vector<LabelledPair>& pairs) {
  std::vector<double> s;
  s.reserve(pairs.size());
  for (const auto& p : pairs) s.push_back(p.score);
  return s;
}

// Maps a raw score onto [0,1]. Out-of-range raws are clamped and flagged
// through `clamped` when given.
inline double normalize_score(double raw, ScoreRange r, bool* clamped = nullptr) {
  if (!(r.max > r.min)) throw Error("evaldata", "score range must satisfy max > min");
  double s = (raw - r.min) / (r.max - r.min);
  const bool out = s < 0.0 || s > 1.0;
  if (clamped) *clamped = out;
  return out ? std::clamp(s, 0.0, 1.0) : s;
}

inline std::vector<double> normalize_scores(std::span<const double> raw, ScoreRange r) {
  std::vector<double> out;
  out.reserve(raw.size());
  for (double x : raw) out.push_back(normalize_score(x, r));
  return out;
}

struct TsvResult {
  std::vector<LabelledPair> pairs;
  std::vector<std::string> warnings;  // one per skipped or clamped line, with its line number
  std::size_t malformed = 0;
  bool header = false;
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return cols;
}

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace detail

// Reads "sentence1 \t sentence2 \t score" lines. A first line whose third
// column is not numeric is taken as a header. Malformed lines are skipped and
// reported; more than 10% malformed aborts.
inline TsvResult read_tsv(std::istream& is, TaskKind kind, ScoreRange range, const std::string& source = "<stream>") {
  TsvResult r;
  std::string line;
  std::size_t lineno = 0, data_lines = 0;
  bool first = true;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto cols = detail::split_tabs(line);
    double raw = 0.0;
    const bool numeric = cols.size() == 3 && detail::parse_double(cols[2], raw);
    if (first) {
      first = false;
      if (cols.size() == 3 && !numeric) {
        r.header = true;
        continue;
      }
    }
    ++data_lines;
    auto bad = [&](const std::string& why) {
      ++r.malformed;
      r.warnings.push_back(source + ":" + std::to_string(lineno) + ": " + why + ", line skipped");
    };
    if (cols.size() != 3) {
      bad("expected 3 tab-separated columns, found " + std::to_string(cols.size()));
      continue;
    }
    if (!numeric) {
      bad("score '" + std::string(cols[2]) + "' is not a number");
      continue;
    }
    LabelledPair p{std::string(cols[0]), std::string(cols[1]), 0.0};
    if (kind == TaskKind::kBinary) {
      if (raw != 0.0 && raw != 1.0) {
        bad("binary label must be 0 or 1");
        continue;
      }
      p.score = raw;
    } else {
      bool clamped = false;
      p.score = normalize_score(raw, range, &clamped);
      if (clamped) {
        r.warnings.push_back(source + ":" + std::to_string(lineno) + ": score " + std::string(cols[2]) +
                             " outside declared range, clamped");
      }
    }
    r.pairs.push_back(std::move(p));
  }
  if (is.bad()) throw Error("evaldata", "read error in " + source);
  if (data_lines > 0 && static_cast<double>(r.malformed) > 0.1 * static_cast<double>(data_lines)) {
    throw Error("evaldata", source + ": " + std::to_string(r.malformed) + " of " + std::to_string(data_lines) +
                                " lines malformed (more than 10%)");
  }
  return r;
}

inline TsvResult load_tsv(const std::string& path, TaskKind kind, ScoreRange range) {
  std::ifstream is(path);
  if (!is) throw Error("evaldata", "cannot open '" + path + "'");
  return read_tsv(is, kind, range, path);
}

// Writes pairs with their (normalized) scores; round-trips through read_tsv
// with range (0,1).
inline void write_tsv(std::ostream& os, const std::vector<LabelledPair>& pairs) {
  os << "sentence1\tsentence2\tscore\n";
  const auto old = os.precision(17);
  for (const auto& p : pairs) os << p.sent1 << '\t' << p.sent2 << '\t' << p.score << '\n';
  os.precision(old);
}

inline void save_tsv(const std::string& path, const std::vector<LabelledPair>& pairs) {
  std::ofstream os(path);
  if (!os) throw Error("evaldata", "cannot open '" + path + "' for writing");
  write_tsv(os, pairs);
}

}  // namespace tenc::evaldata
