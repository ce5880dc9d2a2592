#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "madlab/eval.hpp"
#include "madlab/log.hpp"
#include "oracles.hpp"

using namespace madlab;

TEST(Auc, HandExample) {
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, {false, false, true, true}), 0.75);
}

TEST(Auc, PerfectSeparationAndAllTies) {
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.2, 0.9, 1.0}, {false, false, true, true}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.2, 0.9, 1.0}, {true, true, false, false}), 0.0);
  EXPECT_EQ(auc(std::vector<double>(6, 0.3), {true, false, true, false, false, false}), 0.5);
}

TEST(Auc, Errors) {
  EXPECT_THROW(auc(std::vector<double>{1, 2}, {true, true}), DomainError);
  EXPECT_THROW(auc(std::vector<double>{1, 2}, {false, false}), DomainError);
  EXPECT_THROW(auc(std::vector<double>{1, std::nan("")}, {true, false}), DomainError);
  EXPECT_THROW(auc(std::vector<double>{1, 2}, {true}), ShapeError);
}

namespace {

ScoredSet random_set(std::mt19937_64& rng, std::size_t max_n = 50) {
  ScoredSet s;
  std::size_t n = std::uniform_int_distribution<std::size_t>(2, max_n)(rng);
  // Coarse integer grid so ties are common.
  std::uniform_int_distribution<int> score(0, std::uniform_int_distribution<int>(1, 20)(rng));
  for (std::size_t i = 0; i < n; ++i) {
    s.scores.push_back(score(rng) * 0.25);
    s.abnormal.push_back(std::bernoulli_distribution(0.4)(rng));
  }
  s.abnormal[0] = true;
  s.abnormal[1] = false;
  return s;
}

}  // namespace

// Property: exact equality with the pair-count oracle on sets of size <= 50.
TEST(AucProperties, EqualsPairCountOracle) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 2000; ++i) {
    const auto s = random_set(rng);
    EXPECT_EQ(auc(s), oracle::pair_count_auc(s.scores, s.abnormal));
  }
}

// Property: strictly increasing transforms leave AUC unchanged.
TEST(AucProperties, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(18);
  for (int i = 0; i < 500; ++i) {
    auto s = random_set(rng);
    const double base = auc(s);
    ScoredSet t = s;
    for (double& v : t.scores) v = std::exp(3.0 * v) - 7.0;
    EXPECT_EQ(auc(t), base);
    for (double& v : t.scores) v = std::atan(v);
    EXPECT_EQ(auc(t), base);
  }
}

TEST(Knn, Examples) {
  const Matrix refs = Matrix::from_rows({{0, 0}, {4, 0}, {100, 0}});
  EXPECT_EQ(knn_score(Matrix::from_rows({{4, 0}}), refs, 1)[0], 0.0);
  EXPECT_DOUBLE_EQ(knn_score(Matrix::from_rows({{0, 0}}), refs, 2)[0], 2.0);
}

TEST(Knn, ClampsKWithWarning) {
  const Matrix refs = Matrix::from_rows({{0, 0}, {3, 4}});
  const int before = log::warning_count();
  EXPECT_DOUBLE_EQ(knn_score(Matrix::from_rows({{0, 0}}), refs, 100)[0], 2.5);
  EXPECT_GT(log::warning_count(), before);
}

TEST(Knn, Errors) {
  EXPECT_THROW(knn_score(Matrix(1, 2), Matrix(0, 2), 1), DomainError);
  EXPECT_THROW(knn_score(Matrix(1, 3), Matrix(2, 2), 1), ShapeError);
}

// Properties: permutation invariance in references, 1-Lipschitz in the query.
TEST(KnnProperties, PermutationInvariantAndLipschitz) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    const Matrix refs = oracle::random_matrix(n, 3, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const Matrix shuffled = gather_rows(refs, perm);
    const Matrix q = oracle::random_matrix(5, 3, rng);
    EXPECT_EQ(knn_score(q, refs, k), knn_score(q, shuffled, k));
    const Matrix q2 = oracle::random_matrix(5, 3, rng);
    const auto a = knn_score(q, refs, k), b = knn_score(q2, refs, k);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_LE(std::abs(a[i] - b[i]), std::sqrt(squared_distance(q.row(i), q2.row(i))) + 1e-12);
    }
  }
}

TEST(ReplicateCi, Examples) {
  const auto flat = replicate_ci(std::vector<double>{0.78, 0.78, 0.78, 0.78});
  EXPECT_DOUBLE_EQ(flat.mean, 0.78);
  EXPECT_EQ(flat.half_width, 0.0);
  const auto two = replicate_ci(std::vector<double>{0.7, 0.8});
  EXPECT_DOUBLE_EQ(two.mean, 0.75);
  EXPECT_NEAR(two.std_dev, 0.0707106781, 1e-9);
  EXPECT_NEAR(two.half_width, 0.1385929291, 1e-9);
  const auto one = replicate_ci(std::vector<double>{0.9});
  EXPECT_TRUE(one.single);
  EXPECT_EQ(one.half_width, 0.0);
  EXPECT_THROW(replicate_ci(std::vector<double>{}), DomainError);
}

TEST(ReplicateCiProperties, MeanWithinRangeHalfWidthNonNegative) {
  std::mt19937_64 rng(20);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> v(std::uniform_int_distribution<std::size_t>(1, 10)(rng));
    for (double& x : v) x = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto s = replicate_ci(v);
    EXPECT_GE(s.half_width, 0.0);
    EXPECT_GE(s.mean, *std::min_element(v.begin(), v.end()) - 1e-15);
    EXPECT_LE(s.mean, *std::max_element(v.begin(), v.end()) + 1e-15);
  }
}

TEST(IncompleteBeta, KnownValues) {
  EXPECT_EQ(regularized_incomplete_beta(2, 3, 0), 0.0);
  EXPECT_EQ(regularized_incomplete_beta(2, 3, 1), 1.0);
  // I_x(1, 1) = x; I_x(a, 1) = x^a.
  EXPECT_NEAR(regularized_incomplete_beta(1, 1, 0.3), 0.3, 1e-14);
  EXPECT_NEAR(regularized_incomplete_beta(2.5, 1, 0.6), std::pow(0.6, 2.5), 1e-14);
  EXPECT_THROW(regularized_incomplete_beta(0, 1, 0.5), DomainError);
  EXPECT_THROW(regularized_incomplete_beta(1, 1, 1.5), DomainError);
}

TEST(TDistribution, MatchesBoost) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 2000; ++i) {
    const double df = std::uniform_real_distribution<double>(0.5, 200.0)(rng);
    const double t = std::uniform_real_distribution<double>(-12.0, 12.0)(rng);
    EXPECT_NEAR(t_two_sided_p(t, df), oracle::t_two_sided(t, df), 1e-10) << "t=" << t << " df=" << df;
  }
}

TEST(Welch, IdenticalSamples) {
  const std::vector<double> a{0.1, 0.5, 0.3};
  const auto w = welch_t_test(a, a);
  EXPECT_EQ(w.t, 0.0);
  EXPECT_EQ(w.p_value, 1.0);
  EXPECT_EQ(significance_code(w.p_value), "ns");
}

TEST(Welch, ShiftedSamples) {
  const std::vector<double> a{1, 2, 3, 4}, b{11, 12, 13, 14};
  const auto w = welch_t_test(a, b);
  EXPECT_LT(w.t, 0.0);
  EXPECT_LT(w.p_value, 0.001);
}

TEST(Welch, ReferenceExample) {
  const std::vector<double> a{0.74, 0.76, 0.75, 0.77}, b{0.71, 0.72, 0.70, 0.73};
  const auto w = welch_t_test(a, b);
  EXPECT_NEAR(w.p_value, oracle::welch_p(a, b), 1e-6);
  EXPECT_NEAR(w.df, 6.0, 1e-12);  // equal variances and sizes
}

TEST(Welch, DegenerateVariance) {
  EXPECT_THROW(welch_t_test(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DomainError);
  EXPECT_THROW(welch_t_test(std::vector<double>{1}, std::vector<double>{1, 2, 3}), DomainError);
}

// Properties: antisymmetric t, symmetric p, agreement with the Boost oracle.
TEST(WelchProperties, SymmetryAndOracle) {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> a(std::uniform_int_distribution<std::size_t>(2, 12)(rng));
    std::vector<double> b(std::uniform_int_distribution<std::size_t>(2, 12)(rng));
    std::normal_distribution<double> da(0.0, 1.0), db(0.5, 2.0);
    for (double& x : a) x = da(rng);
    for (double& x : b) x = db(rng);
    const auto ab = welch_t_test(a, b), ba = welch_t_test(b, a);
    EXPECT_EQ(ab.t, -ba.t);
    EXPECT_EQ(ab.p_value, ba.p_value);
    EXPECT_EQ(ab.df, ba.df);
    EXPECT_NEAR(ab.p_value, oracle::welch_p(a, b), 1e-9);
  }
}

TEST(SignificanceCode, Bands) {
  EXPECT_EQ(significance_code(0.0001), "***");
  EXPECT_EQ(significance_code(0.009), "***");
  EXPECT_EQ(significance_code(0.01), "**");
  EXPECT_EQ(significance_code(0.03), "**");
  EXPECT_EQ(significance_code(0.05), "*");
  EXPECT_EQ(significance_code(0.07), "*");
  EXPECT_EQ(significance_code(0.1), ".");
  EXPECT_EQ(significance_code(0.5), ".");
  EXPECT_EQ(significance_code(1.0), "ns");
}
