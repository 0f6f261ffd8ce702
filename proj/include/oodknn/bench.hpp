#pragma once

// Benchmark runner: scores the ID test split and every OOD set with the
// requested detectors, evaluates AUROC / FPR at the target TPR, sweeps k for
// the KNN detector, and produces calibrated thresholds for operational use.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "oodknn/detectors.hpp"
#include "oodknn/embedding_store.hpp"
#include "oodknn/error.hpp"
#include "oodknn/knn.hpp"
#include "oodknn/manifest.hpp"
#include "oodknn/metrics.hpp"
#include "oodknn/parallel.hpp"

namespace oodknn {

enum class ReportFormat { kCsv, kMarkdown, kJson };

inline const std::vector<std::size_t>& default_k_sweep() {
  static const std::vector<std::size_t> ks = {1, 2, 5, 10, 20, 50, 100, 200};
  return ks;
}

struct RunConfig {
  std::filesystem::path manifest;
  std::vector<Detector> detectors = {Detector::kKnn, Detector::kMsp};
  std::size_t k = kDefaultK;
  std::vector<std::size_t> k_sweep = default_k_sweep();
  double target_tpr = kDefaultTargetTpr;
  unsigned threads = 1;
  ReportFormat format = ReportFormat::kMarkdown;
  std::uint64_t seed = 0;

  bool uses(Detector d) const {
    return std::find(detectors.begin(), detectors.end(), d) != detectors.end();
  }
};

struct DetectorRow {
  Detector detector = Detector::kKnn;
  std::size_t k = 0;  // 0 for MSP
  std::string ood_set;
  EvalResult result;

  friend bool operator==(const DetectorRow&, const DetectorRow&) = default;
};

struct SweepRow {
  std::size_t k = 0;
  std::vector<EvalResult> per_set;  // aligned with BenchmarkReport::ood_sets
  double mean_auroc = 0.0;
  double mean_fpr = 0.0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct BenchmarkReport {
  std::map<std::string, std::string> metadata;
  std::vector<std::string> ood_sets;
  double target_tpr = kDefaultTargetTpr;
  std::size_t n_train = 0;
  std::size_t n_id_test = 0;
  std::vector<DetectorRow> rows;
  std::vector<SweepRow> sweep;

  friend bool operator==(const BenchmarkReport&, const BenchmarkReport&) = default;
};

namespace detail {

inline void check_k(std::size_t k, std::size_t n_train, const char* what) {
  if (k == 0 || k > n_train) {
    throw ConfigError(std::string(what) + " k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(n_train) + "] (training set size)");
  }
}

inline void check_common(const BenchmarkManifest& m, const RunConfig& config) {
  if (!(config.target_tpr > 0.0 && config.target_tpr <= 1.0)) {
    throw ConfigError("target TPR must lie in (0, 1]");
  }
  if (config.threads == 0) throw ConfigError("threads must be positive");
  if (m.id_test.count() == 0) throw ConfigError("id_test split is empty");
  for (const auto& s : m.ood_sets) {
    if (s.count() == 0) throw ConfigError("OOD set '" + s.name + "' is empty");
  }
}

inline BenchmarkReport report_header(const BenchmarkManifest& m, const RunConfig& config) {
  BenchmarkReport r;
  r.metadata = m.metadata();
  for (const auto& s : m.ood_sets) r.ood_sets.push_back(s.name);
  r.target_tpr = config.target_tpr;
  r.n_train = m.id_train.count();
  r.n_id_test = m.id_test.count();
  return r;
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

// Checks everything that can be checked before scoring starts.
inline void validate_run(const BenchmarkManifest& m, const RunConfig& config) {
  detail::check_common(m, config);
  if (config.detectors.empty()) throw ConfigError("no detector requested");
  if (config.uses(Detector::kKnn)) detail::check_k(config.k, m.id_train.count(), "knn");
  if (config.uses(Detector::kMsp) && !m.has_all_logits()) {
    throw ConfigError("MSP requested but id_test or an OOD set has no logit file");
  }
}

inline void validate_sweep(const BenchmarkManifest& m, const RunConfig& config) {
  detail::check_common(m, config);
  if (config.k_sweep.empty()) throw ConfigError("empty k sweep");
  for (std::size_t k : config.k_sweep) detail::check_k(k, m.id_train.count(), "sweep");
}

inline BenchmarkReport run_benchmark(const BenchmarkManifest& m, const RunConfig& config) {
  validate_run(m, config);
  BenchmarkReport report = detail::report_header(m, config);
  if (m.ood_sets.empty()) return report;

  for (Detector det : config.detectors) {
    std::vector<ScoreVector> ood_scores;
    ScoreVector id_scores;
    if (det == Detector::kKnn) {
      const KnnIndex index(m.id_train);
      id_scores = knn_scores(index, m.id_test.embeddings, config.k, config.threads);
      for (const auto& s : m.ood_sets) {
        ood_scores.push_back(knn_scores(index, s.embeddings, config.k, config.threads));
      }
    } else {
      id_scores = msp_scores(*m.id_test.logits);
      for (const auto& s : m.ood_sets) ood_scores.push_back(msp_scores(*s.logits));
    }
    for (std::size_t i = 0; i < m.ood_sets.size(); ++i) {
      report.rows.push_back({det, det == Detector::kKnn ? config.k : 0, m.ood_sets[i].name,
                             evaluate(id_scores.values, ood_scores[i].values, config.target_tpr)});
    }
  }
  return report;
}

inline BenchmarkReport run_benchmark(const RunConfig& config) {
  return run_benchmark(load_manifest(config.manifest), config);
}

// KNN scores for every k in `ks` from one max(k) scan of `set`.
inline std::vector<std::vector<double>> knn_scores_multi_k(const KnnIndex& index,
                                                           const EmbeddingSet& set,
                                                           std::span<const std::size_t> ks,
                                                           unsigned threads) {
  const std::size_t k_max = *std::max_element(ks.begin(), ks.end());
  return prefix_means(query_knn_batch(index, set, k_max, threads), ks);
}

inline BenchmarkReport sweep_k(const BenchmarkManifest& m, const RunConfig& config) {
  validate_sweep(m, config);
  BenchmarkReport report = detail::report_header(m, config);
  if (m.ood_sets.empty()) return report;

  const KnnIndex index(m.id_train);
  const auto id_by_k = knn_scores_multi_k(index, m.id_test.embeddings, config.k_sweep,
                                          config.threads);
  std::vector<std::vector<std::vector<double>>> ood_by_set;
  for (const auto& s : m.ood_sets) {
    ood_by_set.push_back(knn_scores_multi_k(index, s.embeddings, config.k_sweep, config.threads));
  }

  for (std::size_t ki = 0; ki < config.k_sweep.size(); ++ki) {
    SweepRow row;
    row.k = config.k_sweep[ki];
    std::vector<double> aurocs;
    std::vector<double> fprs;
    for (std::size_t si = 0; si < m.ood_sets.size(); ++si) {
      row.per_set.push_back(evaluate(id_by_k[ki], ood_by_set[si][ki], config.target_tpr));
      aurocs.push_back(row.per_set.back().auroc);
      fprs.push_back(row.per_set.back().fpr_at_target);
    }
    row.mean_auroc = detail::mean(aurocs);
    row.mean_fpr = detail::mean(fprs);
    report.sweep.push_back(std::move(row));
  }
  return report;
}

inline BenchmarkReport sweep_k(const RunConfig& config) {
  return sweep_k(load_manifest(config.manifest), config);
}

// ---------------------------------------------------------------------------
// Operational thresholds

struct Calibration {
  double target_tpr = kDefaultTargetTpr;
  std::size_t k = kDefaultK;
  std::string source;
  std::vector<Threshold> thresholds;

  const Threshold* find(Detector d) const {
    for (const auto& t : thresholds) {
      if (t.detector == d) return &t;
    }
    return nullptr;
  }
};

// Thresholds for the requested detectors, calibrated on `calib` (the ID
// test split unless a held-out set is supplied).
inline Calibration calibrate(const BenchmarkManifest& m, const RunConfig& config,
                             const Dataset* calib = nullptr) {
  const Dataset& set = calib ? *calib : m.id_test;
  if (set.count() == 0) throw ConfigError("calibration set is empty");
  if (set.embeddings.dim() != m.dim()) {
    throw ConfigError("calibration set has dim " + std::to_string(set.embeddings.dim()) +
                      ", expected dim " + std::to_string(m.dim()));
  }
  Calibration cal;
  cal.target_tpr = config.target_tpr;
  cal.k = config.k;
  cal.source = set.name;
  for (Detector det : config.detectors) {
    if (det == Detector::kKnn) {
      detail::check_k(config.k, m.id_train.count(), "knn");
      const KnnIndex index(m.id_train);
      cal.thresholds.push_back(
          calibrate_threshold(knn_scores(index, set.embeddings, config.k, config.threads),
                              config.target_tpr));
    } else {
      if (!set.logits) throw ConfigError("MSP calibration needs logits for '" + set.name + "'");
      cal.thresholds.push_back(calibrate_threshold(msp_scores(*set.logits), config.target_tpr));
    }
  }
  return cal;
}

inline nlohmann::json calibration_to_json(const Calibration& c) {
  nlohmann::json j;
  j["target_tpr"] = c.target_tpr;
  j["k"] = c.k;
  j["source"] = c.source;
  j["thresholds"] = nlohmann::json::array();
  for (const auto& t : c.thresholds) {
    j["thresholds"].push_back({{"detector", std::string(to_string(t.detector))},
                               {"value", t.value},
                               {"target_tpr", t.target_tpr},
                               {"calibration_size", t.calibration_size}});
  }
  return j;
}

inline Calibration calibration_from_json(const nlohmann::json& j) {
  try {
    Calibration c;
    c.target_tpr = j.at("target_tpr").get<double>();
    c.k = j.at("k").get<std::size_t>();
    c.source = j.value("source", "");
    for (const auto& t : j.at("thresholds")) {
      c.thresholds.push_back({t.at("value").get<double>(),
                              parse_detector(t.at("detector").get<std::string>()),
                              t.at("target_tpr").get<double>(),
                              t.at("calibration_size").get<std::size_t>()});
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("calibration file: ") + e.what());
  }
}

struct SingleScore {
  OodScore score;
  Threshold threshold;
  Verdict verdict = Verdict::kId;
};

// Scores one sample with every requested detector against calibrated
// thresholds. `index` is needed for KNN, `logits` for MSP.
inline std::vector<SingleScore> score_single(const RunConfig& config, const Calibration& cal,
                                             const KnnIndex* index,
                                             std::span<const float> embedding,
                                             std::optional<std::span<const float>> logits,
                                             const std::string& id = {}) {
  std::vector<SingleScore> out;
  for (Detector det : config.detectors) {
    const Threshold* t = cal.find(det);
    if (t == nullptr) {
      throw ConfigError("no calibrated " + std::string(to_string(det)) + " threshold available");
    }
    OodScore score;
    if (det == Detector::kKnn) {
      if (index == nullptr) throw ConfigError("KNN scoring needs a training index");
      if (embedding.size() != index->dim()) {
        throw ConfigError("sample '" + id + "' has dim " + std::to_string(embedding.size()) +
                          ", expected dim " + std::to_string(index->dim()));
      }
      score = knn_score(*index, embedding, cal.k, id);
    } else {
      if (!logits) throw ConfigError("MSP scoring of '" + id + "' needs logits");
      score = msp_score(*logits, id);
    }
    out.push_back({score, *t, classify(score, *t)});
  }
  return out;
}

}  // namespace oodknn
