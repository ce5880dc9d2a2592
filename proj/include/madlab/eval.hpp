#pragma once

// Evaluation statistics: Mann-Whitney ROC-AUC, k-NN embedding-distance
// scores, replicate confidence intervals and the two-sided Welch t-test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "madlab/errors.hpp"
#include "madlab/log.hpp"
#include "madlab/numcore.hpp"

namespace madlab {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<bool> abnormal;  // positive class
};

// P(score_pos > score_neg) + 0.5 P(tie), from midranks. The numerator is
// accumulated as an integer count of half-pairs so the result is exact.
inline double auc(std::span<const double> scores, const std::vector<bool>& abnormal) {
  if (scores.size() != abnormal.size()) throw ShapeError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  for (double s : scores) {
    if (std::isnan(s)) throw DomainError("auc: NaN score");
  }
  std::uint64_t n_pos = 0;
  for (bool b : abnormal) n_pos += b ? 1 : 0;
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DomainError("auc: needs at least one positive and one negative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum over positives of 2 * midrank, where a tie block at sorted positions
  // [a, b) has 1-based midrank (a + 1 + b) / 2.
  std::uint64_t rank2_sum = 0;
  std::size_t a = 0;
  while (a < n) {
    std::size_t b = a + 1;
    while (b < n && scores[order[b]] == scores[order[a]]) ++b;
    for (std::size_t i = a; i < b; ++i) {
      if (abnormal[order[i]]) rank2_sum += a + 1 + b;
    }
    a = b;
  }
  const std::uint64_t u2 = rank2_sum - n_pos * (n_pos + 1);
  return static_cast<double>(u2) / static_cast<double>(2 * n_pos * n_neg);
}

inline double auc(const ScoredSet& s) { return auc(s.scores, s.abnormal); }

// Mean Euclidean distance from each query row to its k nearest reference rows.
inline std::vector<double> knn_score(const Matrix& queries, const Matrix& references, std::size_t k = 100) {
  if (references.rows() == 0) throw DomainError("knn_score: empty reference set");
  if (queries.cols() != references.cols()) throw ShapeError("knn_score: query/reference dims differ");
  if (k < 1) throw ConfigError("knn_score: k must be >= 1");
  if (k > references.rows()) {
    log::warn("knn_score: k=", k, " exceeds ", references.rows(), " references; clamped");
    k = references.rows();
  }
  std::vector<double> out(queries.rows());
  std::vector<double> dist(references.rows());
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    for (std::size_t r = 0; r < references.rows(); ++r) {
      dist[r] = std::sqrt(squared_distance(queries.row(q), references.row(r)));
    }
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
    std::sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k));
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += dist[i];
    out[q] = sum / static_cast<double>(k);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct ReplicateStats {
  std::vector<double> values;
  double mean = 0.0;
  double std_dev = 0.0;     // sample standard deviation (N - 1)
  double half_width = 0.0;  // 1.96 * std_dev
  bool single = false;      // N == 1: half_width is 0 by convention
};

inline ReplicateStats replicate_ci(std::span<const double> values) {
  if (values.empty()) throw DomainError("replicate_ci: no values");
  ReplicateStats s;
  s.values.assign(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) {
    s.single = true;
    return s;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std_dev = std::sqrt(ss / (n - 1.0));
  s.half_width = 1.96 * s.std_dev;
  return s;
}

// ---------------------------------------------------------------------------
// Regularized incomplete beta I_x(a, b) by the modified Lentz continued
// fraction, using the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) for convergence.

namespace detail {

inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  log::warn("incomplete beta continued fraction did not converge (a=", a, ", b=", b, ", x=", x, ")");
  return h;
}

}  // namespace detail

inline double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("incomplete beta: a, b must be > 0");
  if (x < 0.0 || x > 1.0) throw DomainError("incomplete beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

// P(|T| >= |t|) for Student's t with df degrees of freedom.
inline double t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw DomainError("t distribution: df must be > 0");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

inline WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DomainError("welch_t_test: each sample needs >= 2 values");
  auto moments = [](std::span<const double> v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair{mean, ss / (n - 1.0)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  if (!(va > 0.0) || !(vb > 0.0)) throw DomainError("welch_t_test: a sample has zero variance");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double sa = va / na;
  const double sb = vb / nb;
  WelchResult r;
  r.t = (ma - mb) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  r.p_value = t_two_sided_p(r.t, r.df);
  return r;
}

// Significance bands: *** below 0.01, ** in [0.01, 0.05), * in [0.05, 0.1),
// "." in [0.1, 1) and "ns" at p = 1.
inline std::string_view significance_code(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  if (p < 1.0) return ".";
  return "ns";
}

}  // namespace madlab
