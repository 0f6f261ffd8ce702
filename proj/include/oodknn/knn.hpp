#pragma once

// Exact k-nearest-neighbour search under cosine distance.
//
// Cosine distance is 1 - <a/|a|, b/|b|>, clamped to [0, 2]. Both operands
// are normalised in double precision and the dot product is an fma chain in
// ascending dimension order, so the batched scan and the scalar
// cosine_distance() agree bit for bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "oodknn/detail/dot_kernel.hpp"
#include "oodknn/embedding_store.hpp"
#include "oodknn/error.hpp"
#include "oodknn/parallel.hpp"

namespace oodknn {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Ascending by distance, ties by ascending training row.
inline bool neighbor_less(const Neighbor& a, const Neighbor& b) noexcept {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

using NeighborList = std::vector<Neighbor>;

namespace detail {

template <class T>
void normalize_into(std::span<const T> v, double* out) {
  double sq = 0.0;
  for (T x : v) {
    const auto xd = static_cast<double>(x);
    if (!std::isfinite(xd)) throw DomainError("cosine distance: non-finite component");
    sq = std::fma(xd, xd, sq);
  }
  if (sq == 0.0) throw DomainError("cosine distance: zero vector");
  const double norm = std::sqrt(sq);
  for (std::size_t d = 0; d < v.size(); ++d) out[d] = static_cast<double>(v[d]) / norm;
}

inline double distance_from_dot(double dot) noexcept {
  return std::clamp(1.0 - dot, 0.0, 2.0);
}

// Bounded max-heap keeping the k smallest neighbours under neighbor_less.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k); }

  void offer(std::size_t index, double distance) {
    const Neighbor n{index, distance};
    if (heap_.size() < k_) {
      heap_.push_back(n);
      std::push_heap(heap_.begin(), heap_.end(), neighbor_less);
    } else if (neighbor_less(n, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), neighbor_less);
      heap_.back() = n;
      std::push_heap(heap_.begin(), heap_.end(), neighbor_less);
    }
  }

  // Worst distance currently kept; only meaningful when full.
  bool full() const noexcept { return heap_.size() == k_; }
  const Neighbor& worst() const noexcept { return heap_.front(); }

  NeighborList take_sorted() {
    std::sort_heap(heap_.begin(), heap_.end(), neighbor_less);
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  NeighborList heap_;
};

}  // namespace detail

template <class A, class B>
double cosine_distance(std::span<const A> a, std::span<const B> b) {
  if (a.size() != b.size()) {
    throw ConfigError("cosine distance: dimension mismatch " + std::to_string(a.size()) +
                      " vs " + std::to_string(b.size()));
  }
  std::vector<double> ua(a.size());
  std::vector<double> ub(b.size());
  detail::normalize_into(a, ua.data());
  detail::normalize_into(b, ub.data());
  return detail::distance_from_dot(detail::dot_fma(ua, ub));
}

template <class A, class B>
double cosine_distance(const std::vector<A>& a, const std::vector<B>& b) {
  return cosine_distance(std::span<const A>(a), std::span<const B>(b));
}

// Immutable exact index over a training EmbeddingSet. Unit-normalised rows
// are stored in panels of detail::kLanes rows interleaved by dimension;
// the row count is zero-padded to a multiple of detail::kRowsPerStep.
class KnnIndex {
 public:
  explicit KnnIndex(EmbeddingSet train) : train_(std::move(train)) {
    if (train_.empty()) throw ConfigError("knn index: training set is empty");
    const std::size_t dim = train_.dim();
    padded_rows_ = round_up(train_.count(), detail::kRowsPerStep);
    panels_.assign(padded_rows_ * dim, 0.0);
    std::vector<double> unit(dim);
    for (std::size_t r = 0; r < train_.count(); ++r) {
      detail::normalize_into(train_.row(r), unit.data());
      double* panel = panels_.data() + (r / detail::kLanes) * dim * detail::kLanes;
      const std::size_t lane = r % detail::kLanes;
      for (std::size_t d = 0; d < dim; ++d) panel[d * detail::kLanes + lane] = unit[d];
    }
  }

  const EmbeddingSet& train() const noexcept { return train_; }
  std::size_t count() const noexcept { return train_.count(); }
  std::size_t dim() const noexcept { return train_.dim(); }

  std::vector<double> unit_row(std::size_t r) const {
    const std::size_t dim = train_.dim();
    std::vector<double> out(dim);
    const double* panel = panels_.data() + (r / detail::kLanes) * dim * detail::kLanes;
    const std::size_t lane = r % detail::kLanes;
    for (std::size_t d = 0; d < dim; ++d) out[d] = panel[d * detail::kLanes + lane];
    return out;
  }

  // k nearest neighbours for each of n_queries raw query rows (stride dim).
  // Rows are validated (finite, nonzero) as they are normalised.
  template <class T>
  std::vector<NeighborList> search(std::span<const T> queries, std::size_t k,
                                   unsigned threads = 1) const {
    const std::size_t dim = train_.dim();
    check_k(k);
    if (queries.size() % dim != 0) {
      throw ConfigError("knn query: expected dim " + std::to_string(dim) + ", got " +
                        std::to_string(queries.size()) + " values");
    }
    const std::size_t n = queries.size() / dim;
    std::vector<NeighborList> results(n);
    const std::size_t blocks = (n + kQueryBlock - 1) / kQueryBlock;
    parallel_for(blocks, threads, [&](std::size_t b) {
      const std::size_t first = b * kQueryBlock;
      const std::size_t last = std::min(n, first + kQueryBlock);
      search_block(queries.subspan(first * dim, (last - first) * dim), k, results.data() + first);
    });
    return results;
  }

 private:
  static constexpr std::size_t kQueryBlock = 128;
  static constexpr std::size_t kRowTile = 128;
  static_assert(kQueryBlock % detail::kQueriesPerStep == 0);
  static_assert(kRowTile % detail::kRowsPerStep == 0);

  static std::size_t round_up(std::size_t n, std::size_t m) { return (n + m - 1) / m * m; }

  void check_k(std::size_t k) const {
    if (k == 0 || k > train_.count()) {
      throw ConfigError("knn query: k=" + std::to_string(k) + " outside [1, " +
                        std::to_string(train_.count()) + "]");
    }
  }

  template <class T>
  void search_block(std::span<const T> raw, std::size_t k, NeighborList* out) const {
    const std::size_t dim = train_.dim();
    const std::size_t n = raw.size() / dim;
    const std::size_t n_padded = round_up(n, detail::kQueriesPerStep);

    std::vector<double> unit(n_padded * dim, 0.0);
    for (std::size_t q = 0; q < n; ++q) {
      detail::normalize_into(raw.subspan(q * dim, dim), unit.data() + q * dim);
    }

    std::vector<detail::TopK> tops;
    tops.reserve(n);
    for (std::size_t q = 0; q < n; ++q) tops.emplace_back(k);

    std::vector<double> dots(n_padded * kRowTile);
    for (std::size_t r0 = 0; r0 < padded_rows_; r0 += kRowTile) {
      const std::size_t tile = std::min(kRowTile, padded_rows_ - r0);
      const double* panels = panels_.data() + (r0 / detail::kLanes) * dim * detail::kLanes;
      detail::block_dots(unit.data(), n_padded, panels, tile, dim, dots.data());
      const std::size_t valid = std::min(tile, train_.count() - r0);
      for (std::size_t q = 0; q < n; ++q) {
        const double* row = dots.data() + q * tile;
        auto& top = tops[q];
        for (std::size_t j = 0; j < valid; ++j) {
          const double dist = detail::distance_from_dot(row[j]);
          if (top.full() && dist > top.worst().distance) continue;
          top.offer(r0 + j, dist);
        }
      }
    }
    for (std::size_t q = 0; q < n; ++q) out[q] = tops[q].take_sorted();
  }

  EmbeddingSet train_;
  std::size_t padded_rows_ = 0;
  std::vector<double> panels_;
};

inline KnnIndex build_index(EmbeddingSet train) { return KnnIndex(std::move(train)); }

template <class T>
NeighborList query_knn(const KnnIndex& index, std::span<const T> q, std::size_t k) {
  if (q.size() != index.dim()) {
    throw ConfigError("knn query: expected dim " + std::to_string(index.dim()) + ", got " +
                      std::to_string(q.size()));
  }
  return std::move(index.search(q, k).front());
}

template <class T>
NeighborList query_knn(const KnnIndex& index, const std::vector<T>& q, std::size_t k) {
  return query_knn(index, std::span<const T>(q), k);
}

// Mean of the first k distances, summed in ascending-neighbour order.
inline double mean_of_prefix(const NeighborList& neighbors, std::size_t k) {
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += neighbors[i].distance;
  return sum / static_cast<double>(k);
}

template <class T>
double mean_knn_distance(const KnnIndex& index, std::span<const T> q, std::size_t k) {
  return mean_of_prefix(query_knn(index, q, k), k);
}

template <class T>
double mean_knn_distance(const KnnIndex& index, const std::vector<T>& q, std::size_t k) {
  return mean_knn_distance(index, std::span<const T>(q), k);
}

// Neighbour lists of length k for every row of `queries`.
inline std::vector<NeighborList> query_knn_batch(const KnnIndex& index,
                                                 const EmbeddingSet& queries, std::size_t k,
                                                 unsigned threads = 1) {
  if (queries.empty()) return {};
  if (queries.dim() != index.dim()) {
    throw ConfigError("knn query: expected dim " + std::to_string(index.dim()) + ", got " +
                      std::to_string(queries.dim()));
  }
  return index.search(queries.values(), k, threads);
}

// For each k in `ks` (each <= list length), the per-query mean distance to
// the k nearest neighbours, derived from one max(k) scan. Row i of the
// result corresponds to ks[i]; sums run in ascending-neighbour order so each
// value equals mean_knn_distance at that k exactly.
inline std::vector<std::vector<double>> prefix_means(const std::vector<NeighborList>& lists,
                                                     std::span<const std::size_t> ks) {
  std::vector<std::vector<double>> out(ks.size(), std::vector<double>(lists.size()));
  std::vector<std::size_t> order(ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ks[a] < ks[b]; });
  for (std::size_t q = 0; q < lists.size(); ++q) {
    const auto& list = lists[q];
    double sum = 0.0;
    std::size_t taken = 0;
    for (std::size_t oi : order) {
      const std::size_t k = ks[oi];
      if (k == 0 || k > list.size()) {
        throw ConfigError("prefix mean: k=" + std::to_string(k) + " exceeds neighbour list of " +
                          std::to_string(list.size()));
      }
      for (; taken < k; ++taken) sum += list[taken].distance;
      out[oi][q] = sum / static_cast<double>(k);
    }
  }
  return out;
}

}  // namespace oodknn
