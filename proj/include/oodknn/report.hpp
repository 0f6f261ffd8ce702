#pragma once

// Report rendering. CSV and JSON carry fractions at full precision;
// Markdown shows percentages to two decimals.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oodknn/bench.hpp"
#include "oodknn/embedding_store.hpp"
#include "oodknn/error.hpp"

namespace oodknn {

inline constexpr const char* kReportSchemaId = "oodknn.report/1";

namespace detail {

inline std::string full_precision(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string percent(double fraction) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string detector_label(const DetectorRow& r) {
  std::string label(to_string(r.detector));
  if (r.detector == Detector::kKnn) label += " (k=" + std::to_string(r.k) + ")";
  return label;
}

}  // namespace detail

inline constexpr const char* kCsvHeader =
    "section,detector,k,ood_set,auroc,fpr,target_tpr,threshold,n_id,n_ood";

// Long-form CSV: one line per (detector, OOD set), per (k, OOD set), and
// one "Average" line per k.
inline std::string report_to_csv(const BenchmarkReport& r) {
  using detail::full_precision;
  std::string out = std::string(kCsvHeader) + "\n";
  auto line = [&](const char* section, const std::string& det, std::size_t k,
                  const std::string& set, const EvalResult& e) {
    out += std::string(section) + "," + det + "," + std::to_string(k) + "," +
           detail::csv_field(set) + "," + full_precision(e.auroc) + "," +
           full_precision(e.fpr_at_target) + "," + full_precision(e.target_tpr) + "," +
           full_precision(e.threshold) + "," + std::to_string(e.n_id) + "," +
           std::to_string(e.n_ood) + "\n";
  };
  for (const auto& row : r.rows) {
    line("detector", std::string(to_string(row.detector)), row.k, row.ood_set, row.result);
  }
  for (const auto& row : r.sweep) {
    for (std::size_t i = 0; i < row.per_set.size(); ++i) {
      line("sweep", "KNN", row.k, r.ood_sets[i], row.per_set[i]);
    }
    out += "sweep_average,KNN," + std::to_string(row.k) + ",Average," +
           full_precision(row.mean_auroc) + "," + full_precision(row.mean_fpr) + "," +
           full_precision(r.target_tpr) + ",,,\n";
  }
  return out;
}

inline nlohmann::json eval_to_json(const EvalResult& e) {
  return {{"auroc", e.auroc},       {"fpr", e.fpr_at_target}, {"target_tpr", e.target_tpr},
          {"threshold", e.threshold}, {"n_id", e.n_id},         {"n_ood", e.n_ood}};
}

inline nlohmann::json report_to_json(const BenchmarkReport& r) {
  nlohmann::json j;
  j["schema"] = kReportSchemaId;
  j["metadata"] = r.metadata;
  j["target_tpr"] = r.target_tpr;
  j["n_train"] = r.n_train;
  j["n_id_test"] = r.n_id_test;
  j["ood_sets"] = r.ood_sets;
  j["results"] = nlohmann::json::array();
  for (const auto& row : r.rows) {
    auto e = eval_to_json(row.result);
    e["detector"] = std::string(to_string(row.detector));
    e["k"] = row.k;
    e["ood_set"] = row.ood_set;
    j["results"].push_back(std::move(e));
  }
  j["sweep"] = nlohmann::json::array();
  for (const auto& row : r.sweep) {
    nlohmann::json s;
    s["k"] = row.k;
    s["per_set"] = nlohmann::json::array();
    for (std::size_t i = 0; i < row.per_set.size(); ++i) {
      auto e = eval_to_json(row.per_set[i]);
      e["ood_set"] = r.ood_sets[i];
      s["per_set"].push_back(std::move(e));
    }
    s["average"] = {{"auroc", row.mean_auroc}, {"fpr", row.mean_fpr}};
    j["sweep"].push_back(std::move(s));
  }
  return j;
}

// Detector table (AUROC / FPR per OOD set, best cell per column in bold)
// followed by the k-sweep table with per-k averages.
inline std::string report_to_markdown(const BenchmarkReport& r) {
  using detail::percent;
  std::string out = "# OOD detection report\n\n";
  out += "- target TPR: " + percent(r.target_tpr) + "%\n";
  out += "- training embeddings: " + std::to_string(r.n_train) + "\n";
  out += "- ID test samples: " + std::to_string(r.n_id_test) + "\n";
  for (const auto& [key, value] : r.metadata) out += "- " + key + ": " + value + "\n";

  auto header = [&](const std::string& first, bool with_average) {
    std::string h = "| " + first + " |";
    std::string rule = "|---|";
    for (const auto& s : r.ood_sets) {
      h += " " + s + " AUROC | " + s + " FPR |";
      rule += "---:|---:|";
    }
    if (with_average) {
      h += " Average AUROC | Average FPR |";
      rule += "---:|---:|";
    }
    return h + "\n" + rule + "\n";
  };

  if (!r.rows.empty()) {
    out += "\n## Detectors\n\nAUROC and FPR at " + percent(r.target_tpr) +
           "% TPR, in percent. Best value per column in bold.\n\n";
    out += header("Detector", false);

    std::vector<std::string> labels;
    for (const auto& row : r.rows) {
      const auto label = detail::detector_label(row);
      if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(label);
    }
    auto cell = [&](const std::string& label, const std::string& set) -> const EvalResult* {
      for (const auto& row : r.rows) {
        if (detail::detector_label(row) == label && row.ood_set == set) return &row.result;
      }
      return nullptr;
    };
    for (const auto& label : labels) {
      out += "| " + label + " |";
      for (const auto& set : r.ood_sets) {
        const EvalResult* e = cell(label, set);
        if (e == nullptr) {
          out += " | |";
          continue;
        }
        bool best_auroc = true;
        bool best_fpr = true;
        for (const auto& other : r.rows) {
          if (other.ood_set != set) continue;
          best_auroc = best_auroc && other.result.auroc <= e->auroc;
          best_fpr = best_fpr && other.result.fpr_at_target >= e->fpr_at_target;
        }
        const auto a = percent(e->auroc);
        const auto f = percent(e->fpr_at_target);
        out += " " + (best_auroc ? "**" + a + "**" : a) + " | " + (best_fpr ? "**" + f + "**" : f) +
               " |";
      }
      out += "\n";
    }
  }

  if (!r.sweep.empty()) {
    out += "\n## Effect of the number of nearest neighbours\n\n";
    out += header("k", true);
    for (const auto& row : r.sweep) {
      out += "| " + std::to_string(row.k) + " |";
      for (const auto& e : row.per_set) {
        out += " " + percent(e.auroc) + " | " + percent(e.fpr_at_target) + " |";
      }
      out += " " + percent(row.mean_auroc) + " | " + percent(row.mean_fpr) + " |\n";
    }
  }
  return out;
}

// (k, average FPR) pairs for plotting FPR against k.
inline std::string plot_data_csv(const BenchmarkReport& r) {
  std::string out = "k,average_fpr\n";
  for (const auto& row : r.sweep) {
    out += std::to_string(row.k) + "," + detail::full_precision(row.mean_fpr) + "\n";
  }
  return out;
}

inline std::string render_report(const BenchmarkReport& r, ReportFormat format) {
  switch (format) {
    case ReportFormat::kCsv:
      return report_to_csv(r);
    case ReportFormat::kJson:
      return report_to_json(r).dump(2) + "\n";
    case ReportFormat::kMarkdown:
      break;
  }
  return report_to_markdown(r);
}

inline std::filesystem::path plot_data_path(const std::filesystem::path& report_path) {
  auto p = report_path;
  p.replace_extension(".plot.csv");
  return p;
}

// Writes the report; a sweep report also gets its plot data next to it.
inline void emit_report(const BenchmarkReport& r, ReportFormat format,
                        const std::filesystem::path& path) {
  detail::write_bytes(path, render_report(r, format));
  if (!r.sweep.empty()) detail::write_bytes(plot_data_path(path), plot_data_csv(r));
}

inline ReportFormat parse_format(const std::string& s) {
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "md" || s == "markdown") return ReportFormat::kMarkdown;
  if (s == "json") return ReportFormat::kJson;
  throw ConfigError("unknown report format '" + s + "'");
}

}  // namespace oodknn
