#pragma once

// MSP and KNN detectors behind one canonical score orientation: higher
// means more OOD. MSP reports -p_max, KNN the mean cosine distance to the k
// nearest training embeddings. A sample is ID iff score <= threshold.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oodknn/error.hpp"
#include "oodknn/knn.hpp"

namespace oodknn {

enum class Detector { kMsp, kKnn };

inline constexpr std::size_t kDefaultK = 5;
inline constexpr double kDefaultTargetTpr = 0.95;

inline std::string_view to_string(Detector d) noexcept {
  return d == Detector::kMsp ? "MSP" : "KNN";
}

inline Detector parse_detector(std::string_view s) {
  if (s == "msp" || s == "MSP") return Detector::kMsp;
  if (s == "knn" || s == "KNN") return Detector::kKnn;
  throw ConfigError("unknown detector '" + std::string(s) + "'");
}

struct OodScore {
  double value = 0.0;
  Detector detector = Detector::kKnn;
  std::string id;
};

// Scores of one detector over a whole dataset, aligned with its ids.
struct ScoreVector {
  Detector detector = Detector::kKnn;
  std::vector<double> values;
  std::vector<std::string> ids;
};

struct Threshold {
  double value = 0.0;
  Detector detector = Detector::kKnn;
  double target_tpr = kDefaultTargetTpr;
  std::size_t calibration_size = 0;
};

enum class Verdict { kId, kOod };

inline std::string_view to_string(Verdict v) noexcept { return v == Verdict::kId ? "ID" : "OOD"; }

template <class T>
std::vector<double> softmax(std::span<const T> logits) {
  if (logits.size() < 2) throw DomainError("softmax: need at least two classes");
  double max = -INFINITY;
  for (T x : logits) {
    if (!std::isfinite(static_cast<double>(x))) throw DomainError("softmax: non-finite logit");
    max = std::max(max, static_cast<double>(x));
  }
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    p[j] = std::exp(static_cast<double>(logits[j]) - max);
    sum += p[j];
  }
  for (double& v : p) v /= sum;
  return p;
}

template <class T>
std::vector<double> softmax(const std::vector<T>& logits) {
  return softmax(std::span<const T>(logits));
}

// -max softmax probability. The arg-max term is exp(0) = 1, so p_max is
// 1/sum and lies in [1/C, 1] without rounding excursions.
template <class T>
double msp_value(std::span<const T> logits) {
  const auto p = softmax(logits);
  return -*std::max_element(p.begin(), p.end());
}

template <class T>
OodScore msp_score(std::span<const T> logits, std::string id = {}) {
  return {msp_value(logits), Detector::kMsp, std::move(id)};
}

template <class T>
OodScore msp_score(const std::vector<T>& logits, std::string id = {}) {
  return msp_score(std::span<const T>(logits), std::move(id));
}

template <class T>
OodScore knn_score(const KnnIndex& index, std::span<const T> embedding,
                   std::size_t k = kDefaultK, std::string id = {}) {
  return {mean_knn_distance(index, embedding, k), Detector::kKnn, std::move(id)};
}

template <class T>
OodScore knn_score(const KnnIndex& index, const std::vector<T>& embedding,
                   std::size_t k = kDefaultK, std::string id = {}) {
  return knn_score(index, std::span<const T>(embedding), k, std::move(id));
}

inline ScoreVector msp_scores(const LogitSet& logits) {
  ScoreVector out{Detector::kMsp, {}, logits.ids()};
  out.values.reserve(logits.count());
  for (std::size_t i = 0; i < logits.count(); ++i) out.values.push_back(msp_value(logits.row(i)));
  return out;
}

inline ScoreVector knn_scores(const KnnIndex& index, const EmbeddingSet& set,
                              std::size_t k = kDefaultK, unsigned threads = 1) {
  ScoreVector out{Detector::kKnn, {}, set.ids()};
  const auto lists = query_knn_batch(index, set, k, threads);
  out.values.reserve(lists.size());
  for (const auto& list : lists) out.values.push_back(mean_of_prefix(list, k));
  return out;
}

// Smallest rank m (1-based) with m / n >= target, evaluated in double the
// same way a TPR is compared against its target.
inline std::size_t calibration_rank(std::size_t n, double target_tpr) {
  if (n == 0) throw ConfigError("calibration: no scores");
  if (!(target_tpr > 0.0 && target_tpr <= 1.0)) {
    throw ConfigError("calibration: target TPR must lie in (0, 1]");
  }
  const double nd = static_cast<double>(n);
  auto m = static_cast<std::size_t>(std::ceil(target_tpr * nd));
  m = std::clamp<std::size_t>(m, 1, n);
  while (m > 1 && static_cast<double>(m - 1) / nd >= target_tpr) --m;
  while (m < n && static_cast<double>(m) / nd < target_tpr) ++m;
  return m;
}

// The m-th smallest value, m = calibration_rank(n, target).
inline double order_statistic_threshold(std::span<const double> scores, double target_tpr) {
  const std::size_t m = calibration_rank(scores.size(), target_tpr);
  for (double s : scores) {
    if (!std::isfinite(s)) throw DomainError("calibration: non-finite score");
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(m - 1),
                   sorted.end());
  return sorted[m - 1];
}

inline Threshold calibrate_threshold(const ScoreVector& id_scores, double target_tpr) {
  return {order_statistic_threshold(id_scores.values, target_tpr), id_scores.detector, target_tpr,
          id_scores.values.size()};
}

inline Threshold calibrate_threshold(std::span<const OodScore> id_scores, double target_tpr) {
  if (id_scores.empty()) throw ConfigError("calibration: no scores");
  std::vector<double> values;
  values.reserve(id_scores.size());
  for (const auto& s : id_scores) {
    if (s.detector != id_scores.front().detector) {
      throw ConfigError("calibration: scores from mixed detectors");
    }
    values.push_back(s.value);
  }
  return {order_statistic_threshold(values, target_tpr), id_scores.front().detector, target_tpr,
          values.size()};
}

inline Threshold calibrate_threshold(const std::vector<OodScore>& id_scores, double target_tpr) {
  return calibrate_threshold(std::span<const OodScore>(id_scores), target_tpr);
}

inline Verdict classify(const OodScore& score, const Threshold& threshold) {
  if (score.detector != threshold.detector) {
    throw ConfigError("classify: " + std::string(to_string(score.detector)) + " score against " +
                      std::string(to_string(threshold.detector)) + " threshold");
  }
  return score.value <= threshold.value ? Verdict::kId : Verdict::kOod;
}

}  // namespace oodknn
