#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "detadvprop/eval.hpp"

namespace detadv {

struct NamedReport {
  std::string name;
  EvalReport report;
};

inline std::string format_1dp(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

// "value (+delta)" with one decimal each, mirroring the usual table style.
inline std::string format_with_delta(double value, double delta) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f (%+.1f)", value, delta);
  return buf;
}

// Tabular rendering: model, mAP, AP50, AP75, corrupted mAP, rPC.
inline std::string render_report_table(const std::vector<NamedReport>& reports) {
  std::string out = "model                          mAP    AP50   AP75   mAP-C  rPC(%)\n";
  for (const NamedReport& nr : reports) {
    char line[160];
    const std::string corr =
        nr.report.mean_corrupted_map ? format_1dp(*nr.report.mean_corrupted_map) : "-";
    const std::string rpc_str =
        nr.report.rpc_percent ? format_1dp(*nr.report.rpc_percent) : "-";
    std::snprintf(line, sizeof(line), "%-30s %-6s %-6s %-6s %-6s %-6s\n", nr.name.c_str(),
                  format_1dp(nr.report.map).c_str(), format_1dp(nr.report.ap50).c_str(),
                  format_1dp(nr.report.ap75).c_str(), corr.c_str(), rpc_str.c_str());
    out += line;
  }
  return out;
}

struct CompareResult {
  std::string text;
  nlohmann::json table;
};

// [OP] compare_report — per-metric deltas against a baseline, rendered as
// "value (+delta)" to one decimal.
inline CompareResult compare_report(const std::vector<NamedReport>& reports,
                                    std::size_t baseline_index) {
  DETADV_CHECK(reports.size() >= 2, "compare_report: need at least two reports");
  DETADV_CHECK(baseline_index < reports.size(), "compare_report: baseline index out of range");
  const EvalReport& base = reports[baseline_index].report;
  for (const NamedReport& nr : reports) {
    DETADV_CHECK(nr.report.mean_corrupted_map.has_value() == base.mean_corrupted_map.has_value() &&
                     nr.report.rpc_percent.has_value() == base.rpc_percent.has_value(),
                 "compare_report: mismatched metric sets between '", nr.name, "' and the baseline");
  }

  struct Metric {
    const char* key;
    double (*get)(const EvalReport&);
    bool present;
  };
  const std::vector<Metric> metrics = {
      {"map", [](const EvalReport& r) { return r.map; }, true},
      {"ap50", [](const EvalReport& r) { return r.ap50; }, true},
      {"ap75", [](const EvalReport& r) { return r.ap75; }, true},
      {"mean_corrupted_map", [](const EvalReport& r) { return *r.mean_corrupted_map; },
       base.mean_corrupted_map.has_value()},
      {"rpc_percent", [](const EvalReport& r) { return *r.rpc_percent; },
       base.rpc_percent.has_value()},
  };

  CompareResult result;
  result.table = nlohmann::json::array();
  result.text = "model                          ";
  for (const Metric& m : metrics)
    if (m.present) result.text += std::string(m.key) + "  ";
  result.text += "\n";

  for (std::size_t i = 0; i < reports.size(); ++i) {
    nlohmann::json row{{"name", reports[i].name}, {"baseline", i == baseline_index}};
    char cell[160];
    std::snprintf(cell, sizeof(cell), "%-30s ", reports[i].name.c_str());
    result.text += cell;
    for (const Metric& m : metrics) {
      if (!m.present) continue;
      const double value = m.get(reports[i].report);
      if (i == baseline_index) {
        row[m.key] = {{"value", value}};
        result.text += format_1dp(value) + "  ";
      } else {
        const double delta = value - m.get(base);
        row[m.key] = {{"value", value}, {"delta", delta}, {"rendered", format_with_delta(value, delta)}};
        result.text += format_with_delta(value, delta) + "  ";
      }
    }
    result.text += "\n";
    result.table.push_back(row);
  }
  return result;
}

}  // namespace detadv
