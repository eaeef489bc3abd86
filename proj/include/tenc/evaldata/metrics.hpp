#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "tenc/error.hpp"

namespace tenc::evaldata {

// 1-based ranks; tied values share the mean of the positions they occupy.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw Error("evaldata", "correlation needs equal non-empty inputs");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw Error("evaldata", "correlation undefined for a constant input");
  return sab / std::sqrt(saa * sbb);
}

// Spearman's rho: Pearson correlation of average ranks.
inline double spearman(std::span<const double> pred, std::span<const double> gold) {
  if (pred.size() != gold.size() || pred.empty()) throw Error("evaldata", "spearman needs equal non-empty inputs");
  const auto rp = average_ranks(pred);
  const auto rg = average_ranks(gold);
  return pearson(rp, rg);
}

// Probability that a random positive outscores a random negative, ties
// counted as one half. Computed from rank sums (Mann-Whitney U).
inline double auc(std::span<const double> pred, std::span<const double> labels) {
  if (pred.size() != labels.size() || pred.empty()) throw Error("evaldata", "auc needs equal non-empty inputs");
  double pos = 0.0, neg = 0.0;
  for (double y : labels) {
    if (y == 1.0) {
      pos += 1.0;
    } else if (y == 0.0) {
      neg += 1.0;
    } else {
      throw Error("evaldata", "auc labels must be 0 or 1");
    }
  }
  if (pos == 0.0 || neg == 0.0) throw Error("evaldata", "auc needs at least one positive and one negative");
  const auto r = average_ranks(pred);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (labels[i] == 1.0) rank_sum += r[i];
  }
  const double u = rank_sum - pos * (pos + 1.0) / 2.0;
  return u / (pos * neg);
}

enum class MetricKind { kSpearman, kAuc };

inline const char* metric_name(MetricKind k) { return k == MetricKind::kSpearman ? "spearman" : "auc"; }

inline double evaluate(MetricKind k, std::span<const double> pred, std::span<const double> gold) {
  return k == MetricKind::kSpearman ? spearman(pred, gold) : auc(pred, gold);
}

}  // namespace tenc::evaldata
