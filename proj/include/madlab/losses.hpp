#pragma once

// InfoNCE pretext loss and the multi-sphere semi-supervised objective, each
// returning exact gradients with respect to the embeddings.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "madlab/data.hpp"
#include "madlab/errors.hpp"
#include "madlab/numcore.hpp"
#include "madlab/spheres.hpp"

namespace madlab {

inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ShapeError("cosine_similarity: lengths differ");
  const double nu = std::sqrt(dot(u, u));
  const double nv = std::sqrt(dot(v, v));
  if (!(nu > 0.0) || !(nv > 0.0)) throw DomainError("cosine_similarity: zero-norm input");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

// Rows 2i and 2i+1 are the two views of source sample i.
struct ContrastiveBatch {
  Matrix embeddings;
  double temperature = 0.5;
};

struct InfoNceResult {
  double loss = 0.0;
  Matrix embedding_gradients;
  bool degenerate = false;  // fewer than two pairs: no negatives in any denominator
};

// Sum over both anchors of every positive pair of
//   -log( exp(s_ip / tau) / sum_{k != i} exp(s_ik / tau) ).
inline InfoNceResult info_nce_loss(const ContrastiveBatch& batch) {
  const Matrix& z = batch.embeddings;
  const std::size_t n = z.rows();
  const std::size_t d = z.cols();
  if (n == 0 || n % 2 != 0) throw ShapeError("info_nce_loss: row count must be even and > 0, got " + std::to_string(n));
  if (!(batch.temperature > 0.0)) throw DomainError("info_nce_loss: temperature must be > 0");
  const double inv_tau = 1.0 / batch.temperature;

  Matrix u(n, d);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = std::sqrt(dot(z.row(i), z.row(i)));
    if (!(norms[i] > 0.0)) throw DomainError("info_nce_loss: zero-norm embedding in row " + std::to_string(i));
    for (std::size_t j = 0; j < d; ++j) u(i, j) = z(i, j) / norms[i];
  }
  const Matrix sim = matmul_nt(u, u);

  InfoNceResult r;
  r.degenerate = n < 4;
  // dL/ds_ik accumulated into coef(i, k); the loss depends on s only via u.
  Matrix coef(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pos = i ^ 1U;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) mx = std::max(mx, sim(i, k) * inv_tau);
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) denom += std::exp(sim(i, k) * inv_tau - mx);
    }
    const double lse = mx + std::log(denom);
    r.loss += lse - sim(i, pos) * inv_tau;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      const double p = std::exp(sim(i, k) * inv_tau - lse);
      coef(i, k) += (p - (k == pos ? 1.0 : 0.0)) * inv_tau;
    }
  }

  // s_ik = u_i . u_k, so dL/du_i = sum_k (coef(i,k) + coef(k,i)) u_k.
  Matrix sym(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) sym(i, k) = coef(i, k) + coef(k, i);
  }
  Matrix gu = matmul(sym, u);
  r.embedding_gradients = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto g = gu.row(i);
    auto ui = u.row(i);
    const double proj = dot(g, ui);
    for (std::size_t j = 0; j < d; ++j) r.embedding_gradients(i, j) = (g[j] - proj * ui[j]) / norms[i];
  }
  return r;
}

// ---------------------------------------------------------------------------

inline constexpr double kDistanceFloor = 1e-6;

struct MadBatch {
  Matrix embeddings;
  std::vector<Label> labels;
  double eta = 1.0;
  std::size_t n_total = 0;  // unlabeled samples in the full train set
  std::size_t m_total = 0;  // labeled samples in the full train set
  double eps_d = kDistanceFloor;
};

struct MadLossResult {
  double loss = 0.0;
  Matrix embedding_gradients;
  Matrix center_gradients;  // d loss / d centers (used only when centers are trainable)
  std::vector<std::size_t> assignments;
};

// Unlabeled: d^2 / (n+m). Labeled: eta * (d^2)^y / (n+m), y = +1 normal,
// y = -1 abnormal with d^2 floored at eps_d. d is the distance to the nearest
// live center. Weight decay is applied by the optimizer, not here.
inline MadLossResult mad_loss(const MadBatch& batch, const CenterSet& centers) {
  const Matrix& z = batch.embeddings;
  if (z.rows() != batch.labels.size()) throw ShapeError("mad_loss: embeddings and labels differ in length");
  if (z.cols() != centers.dim()) {
    throw ShapeError("mad_loss: embedding dim " + std::to_string(z.cols()) + " vs center dim " +
                     std::to_string(centers.dim()));
  }
  if (batch.eta < 0.0) throw DomainError("mad_loss: eta must be >= 0");
  if (batch.n_total + batch.m_total == 0) throw DomainError("mad_loss: n + m must be > 0");
  if (centers.live_count() == 0) throw StateError("mad_loss: all centers pruned");

  const double scale = 1.0 / static_cast<double>(batch.n_total + batch.m_total);
  MadLossResult r;
  r.embedding_gradients = Matrix(z.rows(), z.cols());
  r.center_gradients = Matrix(centers.size(), centers.dim());
  r.assignments.resize(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto nearest = nearest_live_center(z.row(i), centers);
    const std::size_t k = nearest.index;
    const double d2 = nearest.squared_distance;
    r.assignments[i] = k;
    // dterm/d(d^2)
    double slope = 0.0;
    switch (batch.labels[i]) {
      case Label::Unlabeled:
        r.loss += scale * d2;
        slope = scale;
        break;
      case Label::KnownNormal:
        r.loss += batch.eta * scale * d2;
        slope = batch.eta * scale;
        break;
      case Label::KnownAbnormal:
        if (d2 > batch.eps_d) {
          r.loss += batch.eta * scale / d2;
          slope = -batch.eta * scale / (d2 * d2);
        } else {
          r.loss += batch.eta * scale / batch.eps_d;
        }
        break;
    }
    auto zi = z.row(i);
    auto ck = centers.centers.row(k);
    auto gi = r.embedding_gradients.row(i);
    auto gc = r.center_gradients.row(k);
    for (std::size_t j = 0; j < zi.size(); ++j) {
      const double g = 2.0 * slope * (zi[j] - ck[j]);
      gi[j] = g;
      gc[j] -= g;
    }
  }
  return r;
}

}  // namespace madlab
