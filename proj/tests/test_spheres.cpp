#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "madlab/log.hpp"
#include "madlab/spheres.hpp"
#include "oracles.hpp"

using namespace madlab;

namespace {

CenterSet with_counts(std::vector<std::size_t> counts, double gamma = 0.05) {
  CenterSet cs(Matrix(counts.size(), 2), gamma);
  for (std::size_t j = 0; j < counts.size(); ++j) cs.centers(j, 0) = static_cast<double>(j);
  cs.counts = std::move(counts);
  return cs;
}

std::vector<bool> live_of(const CenterSet& cs) { return cs.live; }

}  // namespace

TEST(KMeans, WellSeparatedDuplicates) {
  Matrix pts(20, 2);
  for (std::size_t i = 10; i < 20; ++i) pts(i, 0) = pts(i, 1) = 10.0;
  const auto cs = kmeans(pts, 2, 1);
  ASSERT_EQ(cs.size(), 2u);
  std::vector<std::pair<double, double>> c{{cs.centers(0, 0), cs.centers(0, 1)}, {cs.centers(1, 0), cs.centers(1, 1)}};
  std::sort(c.begin(), c.end());
  EXPECT_EQ(c[0], std::make_pair(0.0, 0.0));
  EXPECT_EQ(c[1], std::make_pair(10.0, 10.0));
}

TEST(KMeans, SingleClusterIsMean) {
  std::mt19937_64 rng(1);
  const Matrix pts = oracle::random_matrix(50, 3, rng);
  const auto cs = kmeans(pts, 1, 4);
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0;
    for (std::size_t i = 0; i < 50; ++i) m += pts(i, j);
    EXPECT_NEAR(cs.centers(0, j), m / 50.0, 1e-12);
  }
}

TEST(KMeans, ClampsToDistinctPointsWithWarning) {
  Matrix pts(6, 2);
  for (std::size_t i = 3; i < 6; ++i) pts(i, 0) = 5.0;
  const int before = log::warning_count();
  KMeansTrace trace;
  const auto cs = kmeans(pts, 3, 1, 100, 0.05, &trace);
  EXPECT_EQ(cs.size(), 2u);
  EXPECT_EQ(trace.requested_k, 3u);
  EXPECT_EQ(trace.effective_k, 2u);
  EXPECT_GT(log::warning_count(), before);
}

TEST(KMeans, Errors) {
  EXPECT_THROW(kmeans(Matrix(0, 2), 1, 0), DomainError);
  EXPECT_THROW(kmeans(Matrix(3, 2), 0, 0), ConfigError);
}

TEST(KMeans, SeededAndDeterministic) {
  std::mt19937_64 rng(2);
  const Matrix pts = oracle::random_matrix(200, 4, rng);
  EXPECT_EQ(kmeans(pts, 7, 11), kmeans(pts, 7, 11));
}

// Property: Lloyd objective never increases.
TEST(KMeansProperties, ObjectiveNonIncreasing) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(5, 300)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    const Matrix pts = oracle::random_matrix(n, 3, rng);
    KMeansTrace trace;
    kmeans(pts, k, trial, 100, 0.05, &trace);
    for (std::size_t i = 1; i < trace.objective.size(); ++i) {
      EXPECT_LE(trace.objective[i], trace.objective[i - 1] * (1 + 1e-12)) << "trial " << trial << " iter " << i;
    }
  }
}

TEST(AssignAndCount, Examples) {
  CenterSet cs(Matrix::from_rows({{0, 0}, {10, 0}, {20, 0}}), 0.05);
  assign_and_count(Matrix::from_rows({{0, 1}, {1, 0}, {-1, 0}}), cs);
  EXPECT_EQ(cs.counts, (std::vector<std::size_t>{3, 0, 0}));
  assign_and_count(Matrix::from_rows({{15, 0}}), cs);
  EXPECT_EQ(cs.counts, (std::vector<std::size_t>{0, 1, 0}));
  assign_and_count(Matrix(0, 2), cs);
  EXPECT_EQ(cs.counts, (std::vector<std::size_t>{0, 0, 0}));
}

TEST(AssignAndCount, PrunedCentersReceiveNothing) {
  CenterSet cs(Matrix::from_rows({{0, 0}, {10, 0}}), 0.05);
  cs.live[0] = false;
  assign_and_count(Matrix::from_rows({{0, 0}, {1, 0}}), cs);
  EXPECT_EQ(cs.counts, (std::vector<std::size_t>{0, 2}));
}

TEST(Prune, DefaultGammaPrunesSmallCenter) {
  const auto out = prune(with_counts({100, 4, 50}));
  EXPECT_EQ(live_of(out), (std::vector<bool>{true, false, true}));
}

TEST(Prune, AllAtMaxKept) {
  EXPECT_EQ(live_of(prune(with_counts({10, 10}))), (std::vector<bool>{true, true}));
}

TEST(Prune, ZeroCardinalityPruned) {
  EXPECT_EQ(live_of(prune(with_counts({0, 0, 7}))), (std::vector<bool>{false, false, true}));
}

TEST(Prune, AllZeroCountsKeepsALiveCenter) {
  const auto out = prune(with_counts({0, 0, 0}));
  EXPECT_GE(out.live_count(), 1u);
}

TEST(Prune, ThresholdUsesLiveMaxOnly) {
  CenterSet cs = with_counts({1000, 40, 30});
  cs.live[0] = false;  // a tombstone's count must not set the threshold
  EXPECT_EQ(live_of(prune(cs)), (std::vector<bool>{false, true, true}));
}

TEST(Prune, MaxCountCenterAlwaysSurvives) {
  // Lone live center with count 0 next to a tombstone with a larger count.
  CenterSet cs = with_counts({5, 0}, 0.5);
  cs.live[0] = false;
  const auto out = prune(cs);
  EXPECT_EQ(live_of(out), (std::vector<bool>{false, true}));
}

// Properties: idempotent with unchanged counts; the live set only shrinks.
TEST(PruneProperties, IdempotentAndMonotone) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
    std::vector<std::size_t> counts(k);
    for (auto& c : counts) c = std::uniform_int_distribution<std::size_t>(0, 200)(rng);
    CenterSet cs = with_counts(counts, std::uniform_real_distribution<double>(0.01, 0.99)(rng));
    for (std::size_t j = 0; j < k; ++j)
      if (std::bernoulli_distribution(0.2)(rng)) cs.live[j] = false;
    if (cs.live_count() == 0) cs.live[0] = true;
    const auto once = prune(cs);
    const auto twice = prune(once);
    EXPECT_EQ(once, twice);
    EXPECT_GE(once.live_count(), 1u);
    for (std::size_t j = 0; j < k; ++j) {
      if (!cs.live[j]) {
        EXPECT_FALSE(once.live[j]);
      }
    }
  }
}

TEST(Score, Examples) {
  CenterSet cs(Matrix::from_rows({{0, 0}, {10, 0}}), 0.05);
  EXPECT_EQ(anomaly_score(std::vector<double>{10, 0}, cs), 0.0);
  EXPECT_DOUBLE_EQ(anomaly_score(std::vector<double>{3, 4}, cs), 5.0);
  CenterSet one(Matrix::from_rows({{1, 1}}), 0.05);
  EXPECT_DOUBLE_EQ(anomaly_score(std::vector<double>{4, 5}, one), 5.0);
  cs.live[0] = cs.live[1] = false;
  EXPECT_THROW(anomaly_score(std::vector<double>{0, 0}, cs), StateError);
}

// Property: zero exactly at live centers, and 1-Lipschitz.
TEST(ScoreProperties, ZeroAtCentersAndLipschitz) {
  std::mt19937_64 rng(6);
  CenterSet cs(oracle::random_matrix(6, 4, rng, 3.0), 0.05);
  cs.live[2] = false;
  for (std::size_t j = 0; j < 6; ++j) {
    const double s = anomaly_score(cs.centers.row(j), cs);
    if (cs.live[j]) EXPECT_EQ(s, 0.0);
    else EXPECT_GT(s, 0.0);
  }
  for (int i = 0; i < 500; ++i) {
    const Matrix a = oracle::random_matrix(1, 4, rng, 4.0);
    const Matrix b = oracle::random_matrix(1, 4, rng, 4.0);
    const double lhs = std::abs(anomaly_score(a.row(0), cs) - anomaly_score(b.row(0), cs));
    EXPECT_LE(lhs, std::sqrt(squared_distance(a.row(0), b.row(0))) + 1e-12);
  }
}
