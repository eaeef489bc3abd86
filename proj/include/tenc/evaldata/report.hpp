#pragma once

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "tenc/evaldata/metrics.hpp"

namespace tenc::evaldata {

struct MetricRow {
  std::string dataset;
  std::string model;
  MetricKind kind = MetricKind::kSpearman;
  double value = 0.0;
  std::string provenance;  // e.g. "cycle 2 / cross->bi"
};

struct MetricReport {
  std::vector<MetricRow> rows;

  void add(std::string dataset, std::string model, MetricKind kind, double value, std::string provenance = "") {
    rows.push_back({std::move(dataset), std::move(model), kind, value, std::move(provenance)});
  }

  void write_csv(std::ostream& os) const {
    os << "dataset,model,metric,value,provenance\n";
    char buf[32];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%.6f", r.value);
      os << r.dataset << ',' << r.model << ',' << metric_name(r.kind) << ',' << buf << ',' << r.provenance << '\n';
    }
  }

  void print_table(std::ostream& os) const {
    const std::vector<std::string> head{"dataset", "model", "metric", "value", "provenance"};
    std::vector<std::vector<std::string>> cells;
    char buf[32];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%.4f", r.value);
      cells.push_back({r.dataset, r.model, metric_name(r.kind), buf, r.provenance});
    }
    std::vector<std::size_t> w(head.size());
    for (std::size_t c = 0; c < head.size(); ++c) {
      w[c] = head[c].size();
      for (const auto& row : cells) w[c] = std::max(w[c], row[c].size());
    }
    auto line = [&](const std::vector<std::string>& row) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        os << (c ? "  " : "") << row[c] << std::string(w[c] - row[c].size(), ' ');
      }
      os << '\n';
    };
    line(head);
    std::size_t total = 2 * (head.size() - 1);
    for (std::size_t x : w) total += x;
    os << std::string(total, '-') << '\n';
    for (const auto& row : cells) line(row);
  }
};

}  // namespace tenc::evaldata
