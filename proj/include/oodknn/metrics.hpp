#pragma once

// Detector evaluation with ID as the positive class. Scores use the
// canonical orientation (higher = more OOD); a sample is accepted as ID
// when its score is <= the threshold.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <limits>
#include <span>
#include <vector>

#include "oodknn/detectors.hpp"
#include "oodknn/error.hpp"

namespace oodknn {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double tpr() const noexcept { return static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double fpr() const noexcept { return static_cast<double>(fp) / static_cast<double>(fp + tn); }

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;

  // Trapezoidal area, FPR on the x axis.
  double area() const noexcept {
    double a = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
      a += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
    }
    return a;
  }
};

struct EvalResult {
  double auroc = 0.0;
  double fpr_at_target = 0.0;
  double target_tpr = kDefaultTargetTpr;
  double threshold = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;

  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

namespace detail {

inline void require_scores(std::span<const double> id, std::span<const double> ood) {
  if (id.empty() || ood.empty()) throw ConfigError("evaluation needs ID and OOD scores");
  for (auto side : {id, ood}) {
    for (double s : side) {
      if (!std::isfinite(s)) throw DomainError("evaluation: non-finite score");
    }
  }
}

inline std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace detail

inline ConfusionCounts confusion_at_threshold(std::span<const double> id_scores,
                                              std::span<const double> ood_scores, double theta) {
  detail::require_scores(id_scores, ood_scores);
  ConfusionCounts c;
  for (double s : id_scores) c.tp += s <= theta ? 1 : 0;
  for (double s : ood_scores) c.fp += s <= theta ? 1 : 0;
  c.fn = id_scores.size() - c.tp;
  c.tn = ood_scores.size() - c.fp;
  return c;
}

// Mann-Whitney pair count: twice the number of (id, ood) pairs with
// ood > id, plus the number of tied pairs. Integer, so exact under ties.
struct PairCounts {
  std::uint64_t half_pairs = 0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;

  double auroc() const noexcept {
    return static_cast<double>(half_pairs) /
           (2.0 * static_cast<double>(n_id) * static_cast<double>(n_ood));
  }
};

// Midrank counting over two sorted arrays, O(n log n).
inline PairCounts pair_counts(std::span<const double> id_scores,
                              std::span<const double> ood_scores) {
  detail::require_scores(id_scores, ood_scores);
  const auto id = detail::sorted_copy(id_scores);
  const auto ood = detail::sorted_copy(ood_scores);
  PairCounts c{0, id.size(), ood.size()};
  std::size_t below = 0;  // id scores < current ood value
  std::size_t upto = 0;   // id scores <= current ood value
  for (double o : ood) {
    while (below < id.size() && id[below] < o) ++below;
    upto = std::max(upto, below);
    while (upto < id.size() && id[upto] <= o) ++upto;
    c.half_pairs += 2 * below + (upto - below);
  }
  return c;
}

// P(ood > id) + P(ood == id) / 2.
inline double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  return pair_counts(id_scores, ood_scores).auroc();
}

// Threshold calibrated on the ID scores at target_tpr, then the fraction of
// OOD scores accepted as ID under it.
inline double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                         double target_tpr) {
  detail::require_scores(id_scores, ood_scores);
  const double theta = order_statistic_threshold(id_scores, target_tpr);
  return confusion_at_threshold(id_scores, ood_scores, theta).fpr();
}

// One point per distinct pooled score (ascending threshold) between the
// (0,0) and (1,1) sentinels.
inline RocCurve roc_curve(std::span<const double> id_scores, std::span<const double> ood_scores) {
  detail::require_scores(id_scores, ood_scores);
  const auto id = detail::sorted_copy(id_scores);
  const auto ood = detail::sorted_copy(ood_scores);
  std::vector<double> pooled;
  pooled.reserve(id.size() + ood.size());
  std::merge(id.begin(), id.end(), ood.begin(), ood.end(), std::back_inserter(pooled));
  pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());

  const double n_id = static_cast<double>(id.size());
  const double n_ood = static_cast<double>(ood.size());
  RocCurve curve;
  curve.points.reserve(pooled.size() + 2);
  curve.points.push_back({0.0, 0.0, -std::numeric_limits<double>::infinity()});
  std::size_t ti = 0;
  std::size_t oi = 0;
  for (double theta : pooled) {
    while (ti < id.size() && id[ti] <= theta) ++ti;
    while (oi < ood.size() && ood[oi] <= theta) ++oi;
    curve.points.push_back(
        {static_cast<double>(oi) / n_ood, static_cast<double>(ti) / n_id, theta});
  }
  curve.points.push_back({1.0, 1.0, std::numeric_limits<double>::infinity()});
  return curve;
}

inline EvalResult evaluate(std::span<const double> id_scores, std::span<const double> ood_scores,
                           double target_tpr) {
  detail::require_scores(id_scores, ood_scores);
  EvalResult r;
  r.auroc = auroc(id_scores, ood_scores);
  r.threshold = order_statistic_threshold(id_scores, target_tpr);
  r.fpr_at_target = confusion_at_threshold(id_scores, ood_scores, r.threshold).fpr();
  r.target_tpr = target_tpr;
  r.n_id = id_scores.size();
  r.n_ood = ood_scores.size();
  return r;
}

}  // namespace oodknn
