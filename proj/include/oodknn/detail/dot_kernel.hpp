#pragma once

// Blocked dot-product kernel between normalised queries and panel-packed
// training rows.
//
// Every dot product is the chain acc = fma(q[d], t[d], acc) for d = 0..D-1,
// starting from 0.0. Blocking over queries, rows and dimension chunks only
// changes when a partial sum is parked in memory, never the order of the
// chain, so the result is bit-identical to detail::dot_fma() regardless of
// tile sizes, SIMD width or threading.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#if defined(__AVX512F__) || (defined(__AVX__) && defined(__FMA__))
#include <immintrin.h>
#endif

namespace oodknn::detail {

// Rows per panel; a panel stores kLanes rows interleaved by dimension.
inline constexpr std::size_t kLanes = 8;
// Panels handled together by the micro-kernel.
inline constexpr std::size_t kPanelsPerStep = 2;
inline constexpr std::size_t kRowsPerStep = kLanes * kPanelsPerStep;
// Queries handled together by the micro-kernel.
inline constexpr std::size_t kQueriesPerStep = 8;
// Dimension chunk kept hot in L1 for a panel pair.
inline constexpr std::size_t kDimChunk = 256;

inline double dot_fma(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) acc = std::fma(a[d], b[d], acc);
  return acc;
}

// Accumulates kQueriesPerStep x kRowsPerStep partial dot products over
// dimensions [0, len) into `acc_out` (row-major, stride acc_stride).
//   queries: kQueriesPerStep rows, stride q_stride, already offset to the chunk
//   panels:  kPanelsPerStep panels, stride panel_stride, offset to the chunk
// The SIMD variants perform the same fma per element as the portable one.
inline void micro_kernel_portable(const double* queries, std::size_t q_stride,
                                  const double* panels, std::size_t panel_stride,
                                  std::size_t len, double* acc_out,
                                  std::size_t acc_stride) noexcept {
  double acc[kQueriesPerStep][kRowsPerStep];
  for (std::size_t qi = 0; qi < kQueriesPerStep; ++qi) {
    for (std::size_t j = 0; j < kRowsPerStep; ++j) acc[qi][j] = acc_out[qi * acc_stride + j];
  }
  for (std::size_t d = 0; d < len; ++d) {
    double t[kRowsPerStep];
    for (std::size_t p = 0; p < kPanelsPerStep; ++p) {
      for (std::size_t l = 0; l < kLanes; ++l) {
        t[p * kLanes + l] = panels[p * panel_stride + d * kLanes + l];
      }
    }
    for (std::size_t qi = 0; qi < kQueriesPerStep; ++qi) {
      const double q = queries[qi * q_stride + d];
      for (std::size_t j = 0; j < kRowsPerStep; ++j) acc[qi][j] = std::fma(q, t[j], acc[qi][j]);
    }
  }
  for (std::size_t qi = 0; qi < kQueriesPerStep; ++qi) {
    for (std::size_t j = 0; j < kRowsPerStep; ++j) acc_out[qi * acc_stride + j] = acc[qi][j];
  }
}

#if defined(__AVX512F__)
static_assert(kLanes == 8 && kPanelsPerStep == 2 && kQueriesPerStep == 8);

inline void micro_kernel(const double* queries, std::size_t q_stride, const double* panels,
                         std::size_t panel_stride, std::size_t len, double* acc_out,
                         std::size_t acc_stride) noexcept {
  __m512d a0[kQueriesPerStep];
  __m512d a1[kQueriesPerStep];
  for (std::size_t qi = 0; qi < kQueriesPerStep; ++qi) {
    a0[qi] = _mm512_loadu_pd(acc_out + qi * acc_stride);
    a1[qi] = _mm512_loadu_pd(acc_out + qi * acc_stride + kLanes);
  }
  const double* p0 = panels;
  const double* p1 = panels + panel_stride;
  for (std::size_t d = 0; d < len; ++d) {
    const __m512d t0 = _mm512_loadu_pd(p0 + d * kLanes);
    const __m512d t1 = _mm512_loadu_pd(p1 + d * kLanes);
    for (std::size_t qi = 0; qi < kQueriesPerStep; ++qi) {
      const __m512d q = _mm512_set1_pd(queries[qi * q_stride + d]);
      a0[qi] = _mm512_fmadd_pd(q, t0, a0[qi]);
      a1[qi] = _mm512_fmadd_pd(q, t1, a1[qi]);
    }
  }
  for (std::size_t qi = 0; qi < kQueriesPerStep; ++qi) {
    _mm512_storeu_pd(acc_out + qi * acc_stride, a0[qi]);
    _mm512_storeu_pd(acc_out + qi * acc_stride + kLanes, a1[qi]);
  }
}

#elif defined(__AVX__) && defined(__FMA__)
static_assert(kLanes == 8 && kPanelsPerStep == 2 && kQueriesPerStep % 2 == 0);

inline void micro_kernel(const double* queries, std::size_t q_stride, const double* panels,
                         std::size_t panel_stride, std::size_t len, double* acc_out,
                         std::size_t acc_stride) noexcept {
  // Two queries x 16 rows at a time: 8 ymm accumulators.
  for (std::size_t q0 = 0; q0 < kQueriesPerStep; q0 += 2) {
    __m256d acc[2][4];
    for (std::size_t qi = 0; qi < 2; ++qi) {
      for (std::size_t v = 0; v < 4; ++v) {
        acc[qi][v] = _mm256_loadu_pd(acc_out + (q0 + qi) * acc_stride + 4 * v);
      }
    }
    const double* p0 = panels;
    const double* p1 = panels + panel_stride;
    const double* qa = queries + q0 * q_stride;
    const double* qb = qa + q_stride;
    for (std::size_t d = 0; d < len; ++d) {
      const __m256d t[4] = {_mm256_loadu_pd(p0 + d * kLanes), _mm256_loadu_pd(p0 + d * kLanes + 4),
                            _mm256_loadu_pd(p1 + d * kLanes), _mm256_loadu_pd(p1 + d * kLanes + 4)};
      const __m256d xa = _mm256_broadcast_sd(qa + d);
      const __m256d xb = _mm256_broadcast_sd(qb + d);
      for (std::size_t v = 0; v < 4; ++v) {
        acc[0][v] = _mm256_fmadd_pd(xa, t[v], acc[0][v]);
        acc[1][v] = _mm256_fmadd_pd(xb, t[v], acc[1][v]);
      }
    }
    for (std::size_t qi = 0; qi < 2; ++qi) {
      for (std::size_t v = 0; v < 4; ++v) {
        _mm256_storeu_pd(acc_out + (q0 + qi) * acc_stride + 4 * v, acc[qi][v]);
      }
    }
  }
}

#else

inline void micro_kernel(const double* queries, std::size_t q_stride, const double* panels,
                         std::size_t panel_stride, std::size_t len, double* acc_out,
                         std::size_t acc_stride) noexcept {
  micro_kernel_portable(queries, q_stride, panels, panel_stride, len, acc_out, acc_stride);
}

#endif

// Full dot products between a block of queries and a tile of rows.
//   queries:    n_queries rows (multiple of kQueriesPerStep), stride dim
//   panels:     first panel of the tile; panel stride is dim * kLanes
//   n_rows:     rows in the tile (multiple of kRowsPerStep)
//   out:        n_queries x n_rows, row-major; overwritten
inline void block_dots(const double* queries, std::size_t n_queries, const double* panels,
                       std::size_t n_rows, std::size_t dim, double* out) noexcept {
  const std::size_t panel_stride = dim * kLanes;
  std::fill(out, out + n_queries * n_rows, 0.0);
  for (std::size_t d0 = 0; d0 < dim; d0 += kDimChunk) {
    const std::size_t len = std::min(kDimChunk, dim - d0);
    for (std::size_t r = 0; r < n_rows; r += kRowsPerStep) {
      const double* panel = panels + (r / kLanes) * panel_stride + d0 * kLanes;
      for (std::size_t q = 0; q < n_queries; q += kQueriesPerStep) {
        micro_kernel(queries + q * dim + d0, dim, panel, panel_stride, len, out + q * n_rows + r,
                     n_rows);
      }
    }
  }
}

}  // namespace oodknn::detail
