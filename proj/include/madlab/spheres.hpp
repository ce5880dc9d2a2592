#pragma once

// Hypersphere centers: k-means initialization, cardinality accounting,
// gamma-pruning and the nearest-center anomaly score.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "madlab/errors.hpp"
#include "madlab/log.hpp"
#include "madlab/numcore.hpp"
#include "madlab/rng.hpp"

namespace madlab {

struct CenterSet {
  Matrix centers;                   // N_s x d
  std::vector<bool> live;           // pruned centers are kept as tombstones
  std::vector<std::size_t> counts;  // presumed-normal samples assigned this epoch
  double gamma = 0.05;
  std::size_t initial_count = 0;

  CenterSet() = default;
  CenterSet(Matrix c, double gamma_)
      : centers(std::move(c)),
        live(centers.rows(), true),
        counts(centers.rows(), 0),
        gamma(gamma_),
        initial_count(centers.rows()) {}

  std::size_t size() const { return centers.rows(); }
  std::size_t dim() const { return centers.cols(); }
  std::size_t live_count() const { return static_cast<std::size_t>(std::count(live.begin(), live.end(), true)); }

  friend bool operator==(const CenterSet&, const CenterSet&) = default;
};

struct NearestCenter {
  std::size_t index = 0;
  double squared_distance = 0.0;
};

// Nearest live center; ties go to the lowest index.
inline NearestCenter nearest_live_center(std::span<const double> z, const CenterSet& cs) {
  if (z.size() != cs.dim()) {
    throw ShapeError("embedding dim " + std::to_string(z.size()) + " vs center dim " + std::to_string(cs.dim()));
  }
  NearestCenter best{0, std::numeric_limits<double>::infinity()};
  bool found = false;
  for (std::size_t j = 0; j < cs.size(); ++j) {
    if (!cs.live[j]) continue;
    const double d2 = squared_distance(z, cs.centers.row(j));
    if (!found || d2 < best.squared_distance) {
      best = {j, d2};
      found = true;
    }
  }
  if (!found) throw StateError("no live centers");
  return best;
}

// ---------------------------------------------------------------------------
// k-means

struct KMeansTrace {
  std::size_t requested_k = 0;
  std::size_t effective_k = 0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> objective;  // sum of squared distances after each assignment step
};

namespace detail {

inline std::size_t count_distinct_rows(const Matrix& points) {
  std::vector<std::size_t> idx(points.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) {
    auto ra = points.row(a);
    auto rb = points.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  };
  std::sort(idx.begin(), idx.end(), less);
  std::size_t distinct = idx.empty() ? 0 : 1;
  for (std::size_t i = 1; i < idx.size(); ++i) {
    auto ra = points.row(idx[i - 1]);
    auto rb = points.row(idx[i]);
    if (!std::equal(ra.begin(), ra.end(), rb.begin())) ++distinct;
  }
  return distinct;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding. k is clamped to the number of
// distinct points. Empty clusters are re-seeded at the point farthest from
// its assigned center.
inline CenterSet kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iters = 100,
                        double gamma = 0.05, KMeansTrace* trace = nullptr) {
  if (points.rows() == 0) throw DomainError("kmeans: no points");
  if (k < 1) throw ConfigError("kmeans: k must be >= 1");
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  const std::size_t distinct = detail::count_distinct_rows(points);
  const std::size_t requested = k;
  if (k > distinct) {
    log::warn("kmeans: k=", k, " exceeds ", distinct, " distinct points; clamped to ", distinct);
    k = distinct;
  }

  Rng rng = make_rng(seed, Stream::KMeans);
  Matrix centers(k, d);
  {
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    auto p0 = points.row(first(rng));
    std::copy(p0.begin(), p0.end(), centers.row(0).begin());
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), centers.row(0));
    for (std::size_t c = 1; c < k; ++c) {
      const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
      std::uniform_real_distribution<double> u(0.0, total);
      const double target = u(rng);
      std::size_t chosen = n;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        chosen = i;
        if (acc >= target) break;
      }
      auto pc = points.row(chosen);
      std::copy(pc.begin(), pc.end(), centers.row(c).begin());
      for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points.row(i), centers.row(c)));
    }
  }

  std::vector<std::size_t> assign(n, k);
  std::vector<double> cost(n, 0.0);
  KMeansTrace local;
  local.requested_k = requested;
  local.effective_k = k;
  for (std::size_t it = 0; it < max_iters; ++it) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d2 = squared_distance(points.row(i), centers.row(0));
      for (std::size_t c = 1; c < k; ++c) {
        const double v = squared_distance(points.row(i), centers.row(c));
        if (v < best_d2) {
          best_d2 = v;
          best = c;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
      cost[i] = best_d2;
      objective += best_d2;
    }
    local.objective.push_back(objective);
    local.iterations = it + 1;
    if (!changed) {
      local.converged = true;
      break;
    }
    Matrix sums(k, d);
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto s = sums.row(assign[i]);
      auto p = points.row(i);
      for (std::size_t j = 0; j < d; ++j) s[j] += p[j];
      ++sizes[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;
      auto s = sums.row(c);
      auto ctr = centers.row(c);
      for (std::size_t j = 0; j < d; ++j) ctr[j] = s[j] / static_cast<double>(sizes[c]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t far = 0;
      double far_d2 = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = squared_distance(points.row(i), centers.row(assign[i]));
        if (v > far_d2) {
          far_d2 = v;
          far = i;
        }
      }
      auto p = points.row(far);
      std::copy(p.begin(), p.end(), centers.row(c).begin());
      --sizes[assign[far]];
      assign[far] = c;
      sizes[c] = 1;
    }
  }
  if (trace != nullptr) *trace = std::move(local);
  return CenterSet(std::move(centers), gamma);
}

// ---------------------------------------------------------------------------
// Cardinality + pruning

// Refreshes counts: each row goes to its nearest live center.
inline void assign_and_count(const Matrix& embeddings, CenterSet& cs) {
  std::fill(cs.counts.begin(), cs.counts.end(), std::size_t{0});
  if (cs.live_count() == 0) throw StateError("assign_and_count: no live centers");
  for (std::size_t i = 0; i < embeddings.rows(); ++i) ++cs.counts[nearest_live_center(embeddings.row(i), cs).index];
}

// Prunes every live center with count < gamma * max live count, all against
// the same pre-prune maximum. The max-count center always survives.
inline CenterSet prune(CenterSet cs) {
  if (cs.live_count() == 0) throw StateError("prune: no live centers");
  std::size_t max_count = 0;
  std::size_t argmax = cs.size();
  for (std::size_t j = 0; j < cs.size(); ++j) {
    if (cs.live[j] && (argmax == cs.size() || cs.counts[j] > max_count)) {
      max_count = cs.counts[j];
      argmax = j;
    }
  }
  const double threshold = cs.gamma * static_cast<double>(max_count);
  std::vector<bool> next = cs.live;
  for (std::size_t j = 0; j < cs.size(); ++j) {
    if (cs.live[j] && static_cast<double>(cs.counts[j]) < threshold) next[j] = false;
  }
  if (std::none_of(next.begin(), next.end(), [](bool b) { return b; })) {
    log::warn("prune: rule would remove every center; keeping center ", argmax);
    next[argmax] = true;
  }
  cs.live = std::move(next);
  return cs;
}

// Euclidean distance to the nearest live center.
inline double anomaly_score(std::span<const double> z, const CenterSet& cs) {
  return std::sqrt(nearest_live_center(z, cs).squared_distance);
}

inline std::vector<double> anomaly_scores(const Matrix& embeddings, const CenterSet& cs) {
  std::vector<double> s(embeddings.rows());
  for (std::size_t i = 0; i < embeddings.rows(); ++i) s[i] = anomaly_score(embeddings.row(i), cs);
  return s;
}

}  // namespace madlab
