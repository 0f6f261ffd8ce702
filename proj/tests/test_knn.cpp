#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "oodknn/knn.hpp"
#include "test_util.hpp"

namespace oodknn {
namespace {

// Raw-vector formula in long double, no normalisation step.
long double cosine_oracle(std::span<const float> a, std::span<const float> b) {
  long double ab = 0;
  long double aa = 0;
  long double bb = 0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    ab += static_cast<long double>(a[d]) * b[d];
    aa += static_cast<long double>(a[d]) * a[d];
    bb += static_cast<long double>(b[d]) * b[d];
  }
  return 1.0L - ab / (std::sqrt(aa) * std::sqrt(bb));
}

// Every distance, fully sorted by (distance, row).
NeighborList naive_knn(const EmbeddingSet& train, std::span<const float> q, std::size_t k) {
  NeighborList all;
  for (std::size_t i = 0; i < train.count(); ++i) {
    all.push_back({i, cosine_distance(train.row(i), q)});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
  });
  all.resize(k);
  return all;
}

TEST(CosineDistance, SelfDistanceIsZero) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> nd;
  for (int t = 0; t < 100; ++t) {
    std::vector<float> v(1 + t % 33);
    for (auto& x : v) x = nd(rng);
    EXPECT_GE(cosine_distance(v, v), 0.0);
    EXPECT_LE(cosine_distance(v, v), 4 * std::numeric_limits<double>::epsilon());
  }
}

TEST(CosineDistance, OrthogonalIsOne) {
  EXPECT_EQ(cosine_distance(std::vector<float>{1, 0}, std::vector<float>{0, 1}), 1.0);
}

TEST(CosineDistance, FortyFiveDegreesMatchesHighPrecisionValue) {
  // 1 - 1/sqrt(2) to 30 digits (mpmath).
  EXPECT_NEAR(cosine_distance(std::vector<float>{1, 1}, std::vector<float>{1, 0}),
              0.292893218813452475599155637895, 1e-15);
}

TEST(CosineDistance, OppositeIsTwoAndRangeHolds) {
  EXPECT_EQ(cosine_distance(std::vector<double>{1, 2}, std::vector<double>{-1, -2}), 2.0);
  std::mt19937_64 rng(2);
  std::normal_distribution<float> nd;
  for (int t = 0; t < 1000; ++t) {
    std::vector<float> a(8);
    std::vector<float> b(8);
    for (auto& x : a) x = nd(rng);
    for (auto& x : b) x = t % 3 == 0 ? -a[&x - b.data()] : nd(rng);
    const double d = cosine_distance(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 2.0);
  }
}

TEST(CosineDistance, AgreesWithRawFormula) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> nd;
  for (int t = 0; t < 500; ++t) {
    std::vector<float> a(1 + t % 64);
    std::vector<float> b(a.size());
    for (auto& x : a) x = nd(rng);
    for (auto& x : b) x = nd(rng);
    EXPECT_NEAR(cosine_distance(a, b), static_cast<double>(cosine_oracle(a, b)), 1e-12);
  }
}

TEST(CosineDistance, ScaleInvariance) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> a(16);
    std::vector<double> b(16);
    for (auto& x : a) x = nd(rng);
    for (auto& x : b) x = nd(rng);
    const double alpha = scale(rng);
    const double beta = scale(rng);
    std::vector<double> sa(a);
    std::vector<double> sb(b);
    for (auto& x : sa) x *= alpha;
    for (auto& x : sb) x *= beta;
    EXPECT_NEAR(cosine_distance(sa, sb), cosine_distance(a, b), 1e-6);
  }
}

TEST(CosineDistance, ZeroVectorAndDimMismatchAreErrors) {
  EXPECT_THROW(cosine_distance(std::vector<float>{0, 0}, std::vector<float>{1, 0}), DomainError);
  EXPECT_THROW(cosine_distance(std::vector<float>{1, 0, 0}, std::vector<float>{1, 0}),
               ConfigError);
}

TEST(KnnIndex, EmptyTrainingSetRejected) {
  EXPECT_THROW(build_index(EmbeddingSet(4, {}, {})), ConfigError);
}

TEST(KnnIndex, SingleVectorIndex) {
  const auto index = build_index(testing::make_embeddings(3, {0, 3, 4}));
  EXPECT_EQ(index.count(), 1U);
  const auto unit = index.unit_row(0);
  EXPECT_DOUBLE_EQ(unit[1], 0.6);
  EXPECT_DOUBLE_EQ(unit[2], 0.8);
}

TEST(KnnIndex, UnitRowsHaveUnitNorm) {
  std::mt19937_64 rng(6);
  auto set = testing::random_embeddings(37, 19, rng);
  std::vector<float> v(set.values().begin(), set.values().end());
  for (std::size_t d = 0; d < 19; ++d) v[5 * 19 + d] *= 10.0F;  // a row with norm ~10x
  const auto index = build_index(testing::make_embeddings(19, v));
  for (std::size_t r = 0; r < index.count(); ++r) {
    const auto u = index.unit_row(r);
    const double n = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
    EXPECT_NEAR(n, 1.0, 1e-6) << "row " << r;
  }
}

TEST(KnnIndex, ExactMatchIsNearestAtDistanceZero) {
  std::mt19937_64 rng(7);
  const auto train = testing::random_embeddings(20, 6, rng);
  const auto index = build_index(train);
  const auto result = query_knn(index, train.row(7), 1);
  ASSERT_EQ(result.size(), 1U);
  EXPECT_EQ(result[0], (Neighbor{7, 0.0}));
  EXPECT_EQ(mean_knn_distance(index, train.row(7), 1), 0.0);
}

TEST(KnnIndex, KEqualsCountReturnsAllRowsSorted) {
  std::mt19937_64 rng(8);
  const auto train = testing::random_embeddings(23, 5, rng);
  const auto index = build_index(train);
  const std::vector<float> q = {1, -1, 0.5F, 2, 0};
  const auto result = query_knn(index, q, 23);
  ASSERT_EQ(result.size(), 23U);
  EXPECT_TRUE(std::is_sorted(result.begin(), result.end(), neighbor_less));
  std::vector<std::size_t> seen;
  for (const auto& n : result) seen.push_back(n.index);
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < 23; ++i) EXPECT_EQ(seen[i], i);

  double sum = 0.0;
  for (std::size_t i = 0; i < 23; ++i) sum += cosine_distance(train.row(result[i].index), std::span<const float>(q));
  EXPECT_NEAR(mean_knn_distance(index, q, 23), sum / 23.0, 1e-15);
}

TEST(KnnIndex, DuplicateRowsTieBreakByIndex) {
  std::mt19937_64 rng(9);
  auto base = testing::random_embeddings(12, 4, rng);
  std::vector<float> v(base.values().begin(), base.values().end());
  for (std::size_t d = 0; d < 4; ++d) v[9 * 4 + d] = v[2 * 4 + d];
  const auto train = testing::make_embeddings(4, v);
  const auto index = build_index(train);
  const auto result = query_knn(index, train.row(2), 2);
  ASSERT_EQ(result.size(), 2U);
  EXPECT_EQ(result[0], (Neighbor{2, 0.0}));
  EXPECT_EQ(result[1], (Neighbor{9, 0.0}));
}

TEST(KnnIndex, PlanarMeanOfTwoNeighbors) {
  // Query (1,0); rows at cos 0.8 and 0.6, so distances 0.2 and 0.4.
  const auto index = build_index(testing::make_embeddings(2, {4, 3, 3, 4}));
  const std::vector<float> q = {1, 0};
  const auto result = query_knn(index, q, 2);
  EXPECT_NEAR(result[0].distance, 0.2, 1e-15);
  EXPECT_NEAR(result[1].distance, 0.4, 1e-15);
  EXPECT_NEAR(mean_knn_distance(index, q, 2), 0.3, 1e-15);
}

TEST(KnnIndex, QueryValidation) {
  const auto index = build_index(testing::make_embeddings(2, {1, 0, 0, 1}));
  EXPECT_THROW(query_knn(index, std::vector<float>{1, 0}, 3), ConfigError);
  EXPECT_THROW(query_knn(index, std::vector<float>{1, 0}, 0), ConfigError);
  EXPECT_THROW(query_knn(index, std::vector<float>{1, 0, 0}, 1), ConfigError);
  EXPECT_THROW(query_knn(index, std::vector<float>{0, 0}, 1), DomainError);
  EXPECT_THROW(query_knn(index, std::vector<float>{NAN, 1}, 1), DomainError);
}

TEST(KnnIndex, BruteForceParityOn200x16) {
  std::mt19937_64 rng(10);
  const auto train = testing::random_embeddings(200, 16, rng);
  const auto queries = testing::random_embeddings(50, 16, rng, "q");
  const auto index = build_index(train);
  for (std::size_t i = 0; i < queries.count(); ++i) {
    const std::size_t k = 1 + i * 4;
    const auto got = query_knn(index, queries.row(i), k);
    EXPECT_EQ(got, naive_knn(train, queries.row(i), k)) << "query " << i;
    for (const auto& n : got) {
      EXPECT_NEAR(n.distance,
                  static_cast<double>(cosine_oracle(train.row(n.index), queries.row(i))), 1e-12);
    }
  }
}

// Random instances with injected ties (duplicated and rescaled rows,
// small-integer components) against the full-sort oracle.
TEST(KnnIndex, OracleParityPropertyWithTies) {
  std::mt19937_64 rng(11);
  for (int seed = 0; seed < 100; ++seed) {
    rng.seed(static_cast<std::uint64_t>(seed));
    std::uniform_int_distribution<std::size_t> n_dist(1, 200);
    std::uniform_int_distribution<std::size_t> d_dist(1, 16);
    std::uniform_int_distribution<int> small(-2, 2);
    const std::size_t n = n_dist(rng);
    const std::size_t dim = d_dist(rng);
    std::vector<float> v(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
      bool nonzero = false;
      for (std::size_t d = 0; d < dim; ++d) {
        v[i * dim + d] = static_cast<float>(small(rng));
        nonzero = nonzero || v[i * dim + d] != 0.0F;
      }
      if (!nonzero) v[i * dim] = 1.0F;
      if (i > 0 && i % 7 == 0) {
        const std::size_t src = i / 2;
        for (std::size_t d = 0; d < dim; ++d) v[i * dim + d] = (i % 2 ? 3.0F : 1.0F) * v[src * dim + d];
      }
    }
    const auto train = testing::make_embeddings(dim, v);
    const auto index = build_index(train);
    std::uniform_int_distribution<std::size_t> k_dist(1, n);
    std::uniform_int_distribution<std::size_t> row(0, n - 1);
    for (int qi = 0; qi < 5; ++qi) {
      const std::size_t k = k_dist(rng);
      std::vector<float> q(dim);
      if (qi % 2 == 0) {
        const auto r = train.row(row(rng));
        q.assign(r.begin(), r.end());
      } else {
        for (auto& x : q) x = static_cast<float>(small(rng));
        if (std::all_of(q.begin(), q.end(), [](float x) { return x == 0.0F; })) q[0] = -1.0F;
      }
      const auto expect = naive_knn(train, q, k);
      ASSERT_EQ(query_knn(index, q, k), expect) << "seed " << seed << " query " << qi;
      double sum = 0.0;
      for (const auto& nb : expect) sum += nb.distance;
      ASSERT_EQ(mean_knn_distance(index, q, k), sum / static_cast<double>(k));
    }
  }
}

TEST(KnnIndex, RescalingTrainOrQueryKeepsNeighborIndices) {
  std::mt19937_64 rng(12);
  const auto train = testing::random_embeddings(60, 9, rng);
  std::vector<float> scaled(train.values().begin(), train.values().end());
  std::uniform_real_distribution<float> s(0.5F, 8.0F);
  for (std::size_t i = 0; i < 60; ++i) {
    const float f = s(rng);
    for (std::size_t d = 0; d < 9; ++d) scaled[i * 9 + d] *= f;
  }
  const auto a = build_index(train);
  const auto b = build_index(testing::make_embeddings(9, scaled));
  const auto queries = testing::random_embeddings(20, 9, rng, "q");
  for (std::size_t i = 0; i < 20; ++i) {
    std::vector<float> q2(queries.row(i).begin(), queries.row(i).end());
    for (auto& x : q2) x *= 4.0F;
    const auto ra = query_knn(a, queries.row(i), 5);
    const auto rb = query_knn(b, std::span<const float>(q2), 5);
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_EQ(ra[j].index, rb[j].index);
      EXPECT_NEAR(ra[j].distance, rb[j].distance, 1e-6);
    }
  }
}

TEST(KnnIndex, BatchResultsIndependentOfThreadsAndBatching) {
  std::mt19937_64 rng(13);
  const auto train = testing::random_embeddings(301, 70, rng);
  const auto queries = testing::random_embeddings(517, 70, rng, "q");
  const auto index = build_index(train);
  const auto one = query_knn_batch(index, queries, 9, 1);
  EXPECT_EQ(query_knn_batch(index, queries, 9, 2), one);
  EXPECT_EQ(query_knn_batch(index, queries, 9, 8), one);
  for (std::size_t i = 0; i < queries.count(); i += 37) {
    EXPECT_EQ(query_knn(index, queries.row(i), 9), one[i]);
  }
}

TEST(KnnIndex, KernelMatchesScalarDistanceBitwise) {
  // Dimensions straddling the SIMD panel and dimension-chunk boundaries.
  std::mt19937_64 rng(14);
  for (std::size_t dim : {1U, 7U, 8U, 255U, 256U, 257U, 600U}) {
    const auto train = testing::random_embeddings(35, dim, rng);
    const auto index = build_index(train);
    const auto q = testing::random_embeddings(1, dim, rng, "q");
    const auto all = query_knn(index, q.row(0), 35);
    for (const auto& n : all) {
      ASSERT_EQ(n.distance, cosine_distance(train.row(n.index), q.row(0))) << "dim " << dim;
    }
  }
}

TEST(PrefixMeans, MatchSingleKMeansExactly) {
  std::mt19937_64 rng(15);
  const auto train = testing::random_embeddings(250, 12, rng);
  const auto queries = testing::random_embeddings(40, 12, rng, "q");
  const auto index = build_index(train);
  const std::vector<std::size_t> ks = {200, 1, 2, 5, 10, 20, 50, 100};
  const auto lists = query_knn_batch(index, queries, 200);
  const auto means = prefix_means(lists, ks);
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    for (std::size_t q = 0; q < queries.count(); ++q) {
      ASSERT_EQ(means[ki][q], mean_knn_distance(index, queries.row(q), ks[ki]));
    }
  }
  EXPECT_THROW(prefix_means(lists, std::vector<std::size_t>{201}), ConfigError);
}

}  // namespace
}  // namespace oodknn
