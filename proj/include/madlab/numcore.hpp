#pragma once

// Dense matrices, sequential MLPs with reverse-mode gradients, and the
// parameter update rules used by both training phases.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "madlab/errors.hpp"
#include "madlab/rng.hpp"

namespace madlab {

// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged initializer for Matrix");
      std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
      ++i;
    }
    return m;
  }

  static Matrix row_vector(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Gathers the given rows of `m` into a new matrix.
inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = m.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + a.shape_string() + " * " + b.shape_string());
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

// C = A^T * B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + a.shape_string() + "^T * " + b.shape_string());
  }
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto ak = a.row(k);
    auto bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      auto ci = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

// C = A * B^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + a.shape_string() + " * " + b.shape_string() + "^T");
  }
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ai = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto bj = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
      c(i, j) = s;
    }
  }
  return c;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Sequential MLP

enum class Activation { ReLU, Identity };

struct LayerSpec {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  Activation activation = Activation::ReLU;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Parameters are stored flat as [W0, b0, W1, b1, ...]; W_l is in_dim x out_dim
// so a batch forward is X * W + b.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<LayerSpec> specs) : specs_(std::move(specs)) {
    for (std::size_t l = 0; l < specs_.size(); ++l) {
      const auto& s = specs_[l];
      if (s.in_dim < 1 || s.out_dim < 1) throw ConfigError("layer dims must be >= 1");
      if (l > 0 && specs_[l - 1].out_dim != s.in_dim) {
        throw ShapeError("layer " + std::to_string(l) + " in_dim " + std::to_string(s.in_dim) +
                         " != previous out_dim " + std::to_string(specs_[l - 1].out_dim));
      }
      params_.emplace_back(s.in_dim, s.out_dim);
      params_.emplace_back(1, s.out_dim);
    }
  }

  // Weights ~ U(-a, a) with a = sqrt(6 / (in + out)); biases zero.
  void initialize(Rng& rng) {
    for (std::size_t l = 0; l < specs_.size(); ++l) {
      const double a = std::sqrt(6.0 / static_cast<double>(specs_[l].in_dim + specs_[l].out_dim));
      std::uniform_real_distribution<double> dist(-a, a);
      for (double& w : weight(l).values()) w = dist(rng);
      bias(l).fill(0.0);
    }
  }

  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::size_t layer_count() const { return specs_.size(); }
  std::size_t input_dim() const { return specs_.empty() ? 0 : specs_.front().in_dim; }
  std::size_t output_dim() const { return specs_.empty() ? 0 : specs_.back().out_dim; }

  Matrix& weight(std::size_t l) { return params_[2 * l]; }
  const Matrix& weight(std::size_t l) const { return params_[2 * l]; }
  Matrix& bias(std::size_t l) { return params_[2 * l + 1]; }
  const Matrix& bias(std::size_t l) const { return params_[2 * l + 1]; }

  std::vector<Matrix>& parameters() { return params_; }
  const std::vector<Matrix>& parameters() const { return params_; }

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<LayerSpec> specs_;
  std::vector<Matrix> params_;
};

struct BackwardResult;

// Forward intermediates needed by the backward pass.
class GradientTape {
 public:
  bool primed() const { return primed_; }
  void clear() {
    inputs_.clear();
    outputs_.clear();
    primed_ = false;
  }

 private:
  friend Matrix mlp_forward(const Mlp&, const Matrix&, GradientTape*);
  friend BackwardResult mlp_backward(const Mlp&, GradientTape&, const Matrix&);

  std::vector<Matrix> inputs_;   // input to each layer
  std::vector<Matrix> outputs_;  // post-activation output of each layer
  bool primed_ = false;
};

struct BackwardResult {
  std::vector<Matrix> parameter_gradients;  // aligned with Mlp::parameters()
  Matrix input_gradient;
};

inline Matrix mlp_forward(const Mlp& mlp, const Matrix& input, GradientTape* tape = nullptr) {
  if (mlp.layer_count() == 0) throw ConfigError("mlp_forward: empty network");
  if (input.cols() != mlp.input_dim()) {
    throw ShapeError("mlp_forward: input has " + std::to_string(input.cols()) +
                     " columns, first layer expects in_dim " + std::to_string(mlp.input_dim()));
  }
  if (tape != nullptr) tape->clear();
  Matrix x = input;
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    Matrix y = matmul(x, mlp.weight(l));
    auto b = mlp.bias(l).row(0);
    const bool relu = mlp.specs()[l].activation == Activation::ReLU;
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) {
        const double v = yr[c] + b[c];
        yr[c] = relu ? (v > 0.0 ? v : 0.0) : v;
      }
    }
    if (tape != nullptr) {
      tape->inputs_.push_back(std::move(x));
      tape->outputs_.push_back(y);
    }
    x = std::move(y);
  }
  if (tape != nullptr) tape->primed_ = true;
  return x;
}

// Consumes the tape. ReLU passes gradient only where its output is > 0, so
// the subgradient at exactly 0 is 0.
inline BackwardResult mlp_backward(const Mlp& mlp, GradientTape& tape, const Matrix& output_gradient) {
  if (!tape.primed_) throw StateError("mlp_backward: tape has no recorded forward pass");
  if (tape.inputs_.size() != mlp.layer_count()) {
    throw StateError("mlp_backward: tape was recorded for a different network");
  }
  const Matrix& out = tape.outputs_.back();
  if (!output_gradient.same_shape(out)) {
    throw ShapeError("mlp_backward: output gradient " + output_gradient.shape_string() +
                     " vs forward output " + out.shape_string());
  }
  BackwardResult result;
  result.parameter_gradients.resize(2 * mlp.layer_count());
  Matrix g = output_gradient;
  for (std::size_t l = mlp.layer_count(); l-- > 0;) {
    if (mlp.specs()[l].activation == Activation::ReLU) {
      const Matrix& y = tape.outputs_[l];
      auto gv = g.values();
      auto yv = y.values();
      for (std::size_t i = 0; i < gv.size(); ++i) {
        if (!(yv[i] > 0.0)) gv[i] = 0.0;
      }
    }
    const Matrix& x = tape.inputs_[l];
    result.parameter_gradients[2 * l] = matmul_tn(x, g);
    Matrix db(1, g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      for (std::size_t c = 0; c < gr.size(); ++c) db(0, c) += gr[c];
    }
    result.parameter_gradients[2 * l + 1] = std::move(db);
    g = matmul_nt(g, mlp.weight(l));
  }
  result.input_gradient = std::move(g);
  tape.clear();
  return result;
}

// ---------------------------------------------------------------------------
// Optimizers

enum class UpdateRule { Sgd, AdamDefault };

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

struct OptimizerState {
  UpdateRule rule = UpdateRule::AdamDefault;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

inline OptimizerState make_optimizer(UpdateRule rule, double learning_rate, double weight_decay,
                                     std::span<const Matrix* const> params) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  OptimizerState s;
  s.rule = rule;
  s.learning_rate = learning_rate;
  s.weight_decay = weight_decay;
  if (rule == UpdateRule::AdamDefault) {
    for (const Matrix* p : params) {
      s.first_moment.emplace_back(p->rows(), p->cols());
      s.second_moment.emplace_back(p->rows(), p->cols());
    }
  }
  return s;
}

// One update: p <- p - lr * (direction + weight_decay * p), where direction is
// g for SGD and the bias-corrected Adam ratio otherwise. Leaves everything
// untouched if any gradient entry is non-finite.
inline void optimizer_step(OptimizerState& state, std::span<Matrix* const> params,
                           std::span<const Matrix> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer_step: " + std::to_string(params.size()) + " parameters vs " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i])) {
      throw ShapeError("optimizer_step: parameter " + std::to_string(i) + " is " +
                       params[i]->shape_string() + ", gradient is " + grads[i].shape_string());
    }
    if (!grads[i].all_finite()) {
      throw NumericError("optimizer_step: non-finite gradient in parameter " + std::to_string(i) +
                         " at step " + std::to_string(state.step));
    }
  }
  const double lr = state.learning_rate;
  const double wd = state.weight_decay;
  if (state.rule == UpdateRule::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i]->values();
      auto g = grads[i].values();
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * (g[j] + wd * p[j]);
    }
    ++state.step;
    return;
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("optimizer_step: moment buffers do not match parameter list");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!state.first_moment[i].same_shape(*params[i])) {
      throw ShapeError("optimizer_step: moment buffer " + std::to_string(i) + " shape mismatch");
    }
    auto p = params[i]->values();
    auto g = grads[i].values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = kAdamBeta1 * m[j] + (1.0 - kAdamBeta1) * g[j];
      v[j] = kAdamBeta2 * v[j] + (1.0 - kAdamBeta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= lr * (mhat / (std::sqrt(vhat) + kAdamEps) + wd * p[j]);
    }
  }
}

// Step decay: base_lr * factor^(number of milestones <= epoch).
inline double apply_lr_schedule(std::size_t epoch, double base_lr, std::span<const std::size_t> milestones,
                                double factor) {
  double lr = base_lr;
  for (std::size_t m : milestones) {
    if (m <= epoch) lr *= factor;
  }
  return lr;
}

}  // namespace madlab
