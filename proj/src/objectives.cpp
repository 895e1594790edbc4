// Copyright 2026 The HDO Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hdo/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hdo {
namespace {

double softplus(double t) {
  // log(1 + exp(t)) without overflow.
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double max_row_norm_sq(const Matrix& features) {
  return features.rowwise().squaredNorm().maxCoeff();
}

// Margins y_k a_k^T p for every batch sample (rows) and point (columns).
Matrix batch_margins(const Matrix& signed_features, const Matrix& points, IndexSpan batch,
                     std::size_t samples) {
  if (batch.size() == samples) {
    bool identity = true;
    for (std::size_t k = 0; k < samples && identity; ++k) identity = batch[k] == k;
    if (identity) return signed_features * points;
  }
  Matrix rows(static_cast<Eigen::Index>(batch.size()), signed_features.cols());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    rows.row(static_cast<Eigen::Index>(k)) = signed_features.row(static_cast<Eigen::Index>(batch[k]));
  }
  return rows * points;
}

}  // namespace

std::string_view to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kQuadratic: return "quadratic";
    case ObjectiveKind::kLogisticL2: return "logistic_l2";
    case ObjectiveKind::kSigmoidSquaredNonconvex: return "sigmoid_sq_nonconvex";
  }
  return "unknown";
}

ObjectiveKind objective_kind_from_string(std::string_view name) {
  if (name == "quadratic") return ObjectiveKind::kQuadratic;
  if (name == "logistic_l2" || name == "logistic") return ObjectiveKind::kLogisticL2;
  if (name == "sigmoid_sq_nonconvex" || name == "nonconvex") {
    return ObjectiveKind::kSigmoidSquaredNonconvex;
  }
  throw std::invalid_argument("unknown objective kind '" + std::string(name) + "'");
}

Objective::Objective(ObjectiveKind kind, Eigen::Index dim, std::size_t samples)
    : kind_(kind), dim_(dim), all_(samples) {
  std::iota(all_.begin(), all_.end(), std::size_t{0});
}

void Objective::set_constants(double lipschitz, double strong_convexity) {
  if (!(lipschitz > 0.0) || strong_convexity < 0.0 || strong_convexity > lipschitz) {
    throw std::invalid_argument("objective constants must satisfy 0 <= ell <= L, L > 0");
  }
  lipschitz_ = lipschitz;
  strong_convexity_ = strong_convexity;
}

void Objective::set_optimum(Vector x_star, double f_star) {
  x_star_ = std::move(x_star);
  f_star_ = f_star;
}

Vector Objective::batch_losses(const Matrix& points, IndexSpan batch) const {
  Vector out(points.cols());
  for (Eigen::Index c = 0; c < points.cols(); ++c) out(c) = batch_loss(points.col(c), batch);
  return out;
}

Vector signed_labels(const Vector& labels) {
  Vector y(labels.size());
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const double v = labels[i];
    if (v == 1.0) {
      y[i] = 1.0;
    } else if (v == -1.0 || v == 0.0) {
      y[i] = -1.0;
    } else {
      throw std::invalid_argument("label " + std::to_string(v) + " at sample " +
                                  std::to_string(i) + " is not binary");
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// QuadraticObjective

QuadraticObjective::QuadraticObjective(Eigen::Index d, double cond, std::uint64_t seed,
                                       const QuadraticOptions& options)
    : Objective(ObjectiveKind::kQuadratic, d, options.samples) {
  if (d < 1) throw std::invalid_argument("quadratic needs d >= 1");
  if (!(cond >= 1.0)) throw std::invalid_argument("quadratic needs cond >= 1");
  if (d == 1 && cond != 1.0) {
    throw std::invalid_argument("a 1-dimensional quadratic cannot span [1, cond] with cond > 1");
  }
  if (options.samples < 1) throw std::invalid_argument("quadratic needs at least one sample");
  if (options.hessian_spread < 0.0 || options.hessian_spread >= 1.0) {
    throw std::invalid_argument("hessian_spread must lie in [0, 1)");
  }
  if (options.gradient_noise < 0.0) throw std::invalid_argument("gradient_noise must be >= 0");

  Rng rng(derive_seed(seed, 0, 0, StreamTag::kData));
  if (d == 1) {
    eigenvalues_ = Vector::Ones(1);
  } else {
    eigenvalues_ = Vector::LinSpaced(d, 1.0, cond);
    eigenvalues_[d - 1] = cond;
  }

  Matrix gauss(d, d);
  for (Eigen::Index j = 0; j < d; ++j) gauss.col(j) = gaussian_vector(d, rng);
  Eigen::HouseholderQR<Matrix> qr(gauss);
  basis_ = qr.householderQ() * Matrix::Identity(d, d);

  Vector x_star = gaussian_vector(d, rng);

  const auto m = static_cast<Eigen::Index>(options.samples);
  coeffs_.resize(m, d);
  linear_ = Matrix::Zero(m, d);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, options.gradient_noise > 0 ? options.gradient_noise : 1.0);
  Vector spread(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    spread[j] = std::min(options.hessian_spread, cond / eigenvalues_[j] - 1.0);
  }
  for (Eigen::Index k = 0; k + 1 < m; k += 2) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double r = coin(rng) ? 1.0 : -1.0;
      coeffs_(k, j) = eigenvalues_[j] * (1.0 + spread[j] * r);
      coeffs_(k + 1, j) = eigenvalues_[j] * (1.0 - spread[j] * r);
      if (options.gradient_noise > 0.0) {
        const double b = normal(rng);
        linear_(k, j) = b;
        linear_(k + 1, j) = -b;
      }
    }
  }
  if (m % 2 == 1) coeffs_.row(m - 1) = eigenvalues_.transpose();

  set_constants(cond, 1.0);
  set_optimum(std::move(x_star), 0.0);
}

void QuadraticObjective::batch_means(IndexSpan batch, Vector& curvature, Vector& linear) const {
  if (batch.data() == all_indices().data() && batch.size() == num_samples()) {
    // The antithetic construction makes the full-sample means exact.
    curvature = eigenvalues_;
    linear = Vector::Zero(dim());
    return;
  }
  curvature = Vector::Zero(dim());
  linear = Vector::Zero(dim());
  for (const std::size_t k : batch) {
    const auto row = static_cast<Eigen::Index>(k);
    curvature += coeffs_.row(row).transpose();
    linear += linear_.row(row).transpose();
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  curvature *= inv;
  linear *= inv;
}

double QuadraticObjective::batch_loss(const Vector& x, IndexSpan batch) const {
  Vector c, b;
  batch_means(batch, c, b);
  const Vector z = basis_.transpose() * (x - *x_star());
  return 0.5 * z.dot(c.cwiseProduct(z)) + b.dot(z);
}

Vector QuadraticObjective::batch_gradient(const Vector& x, IndexSpan batch) const {
  Vector c, b;
  batch_means(batch, c, b);
  const Vector z = basis_.transpose() * (x - *x_star());
  return basis_ * (c.cwiseProduct(z) + b);
}

double QuadraticObjective::batch_directional_derivative(const Vector& x, IndexSpan batch,
                                                        const Vector& u) const {
  Vector c, b;
  batch_means(batch, c, b);
  const Vector z = basis_.transpose() * (x - *x_star());
  const Vector uz = basis_.transpose() * u;
  return uz.dot(c.cwiseProduct(z) + b);
}

Matrix QuadraticObjective::hessian() const {
  return basis_ * eigenvalues_.asDiagonal() * basis_.transpose();
}

Matrix QuadraticObjective::batch_hessian(IndexSpan batch) const {
  Vector c, b;
  batch_means(batch, c, b);
  return basis_ * c.asDiagonal() * basis_.transpose();
}

ObjectivePtr make_quadratic(Eigen::Index d, double cond, std::uint64_t seed,
                            const QuadraticOptions& options) {
  return std::make_shared<QuadraticObjective>(d, cond, seed, options);
}

// ---------------------------------------------------------------------------
// LogisticObjective

LogisticObjective::LogisticObjective(Dataset data, double lambda)
    : Objective(ObjectiveKind::kLogisticL2, data.dim(), data.size()),
      data_(std::move(data)),
      lambda_(lambda) {
  validate(data_);
  if (!(lambda > 0.0)) throw std::invalid_argument("logistic regularization lambda must be > 0");
  data_.labels = signed_labels(data_.labels);
  signed_features_ = data_.labels.asDiagonal() * data_.features;
  set_constants(lambda_ + 0.25 * max_row_norm_sq(data_.features), lambda_);

  // Damped Newton from the origin; f is lambda-strongly convex so this
  // converges to the unique minimizer.
  const Eigen::Index d = dim();
  const double m = static_cast<double>(num_samples());
  Vector x = Vector::Zero(d);
  double fx = full_loss(x);
  for (int iter = 0; iter < 100; ++iter) {
    const Vector g = full_gradient(x);
    if (g.norm() < 1e-13) break;
    Matrix h = lambda_ * Matrix::Identity(d, d);
    for (Eigen::Index k = 0; k < data_.features.rows(); ++k) {
      const double z = data_.labels[k] * data_.features.row(k).dot(x);
      const double s = sigmoid(z);
      h.noalias() += (s * (1.0 - s) / m) * data_.features.row(k).transpose() * data_.features.row(k);
    }
    const Vector step = h.ldlt().solve(g);
    double t = 1.0;
    Vector next = x - step;
    double fn = full_loss(next);
    while (fn > fx - 1e-4 * t * g.dot(step) && t > 1e-10) {
      t *= 0.5;
      next = x - t * step;
      fn = full_loss(next);
    }
    if (fn >= fx) break;
    x = std::move(next);
    fx = fn;
  }
  set_optimum(std::move(x), fx);
}

double LogisticObjective::batch_loss(const Vector& x, IndexSpan batch) const {
  double total = 0.0;
  for (const std::size_t k : batch) {
    const auto row = static_cast<Eigen::Index>(k);
    total += softplus(-data_.labels[row] * data_.features.row(row).dot(x));
  }
  return total / static_cast<double>(batch.size()) + 0.5 * lambda_ * x.squaredNorm();
}

Vector LogisticObjective::batch_losses(const Matrix& points, IndexSpan batch) const {
  const Matrix margins = batch_margins(signed_features_, points, batch, num_samples());
  // Same stable form as softplus(), vectorized. exp(-|t|) lies in (0, 1], so
  // log(1 + e) loses only absolute precision near 1e-16, which a loss value
  // does not notice, and it is far cheaper than log1p here.
  const Eigen::ArrayXXd t = -margins.array();
  const Eigen::ArrayXXd sp = t.max(0.0) + ((-t.abs()).exp() + 1.0).log();
  return sp.colwise().mean().transpose().matrix() +
         0.5 * lambda_ * points.colwise().squaredNorm().transpose();
}

Vector LogisticObjective::batch_gradient(const Vector& x, IndexSpan batch) const {
  Vector g = Vector::Zero(dim());
  for (const std::size_t k : batch) {
    const auto row = static_cast<Eigen::Index>(k);
    const double y = data_.labels[row];
    const double z = y * data_.features.row(row).dot(x);
    g.noalias() -= (y * sigmoid(-z)) * data_.features.row(row).transpose();
  }
  g /= static_cast<double>(batch.size());
  g.noalias() += lambda_ * x;
  return g;
}

double LogisticObjective::batch_directional_derivative(const Vector& x, IndexSpan batch,
                                                       const Vector& u) const {
  double total = 0.0;
  for (const std::size_t k : batch) {
    const auto row = static_cast<Eigen::Index>(k);
    const double y = data_.labels[row];
    const auto a = data_.features.row(row);
    total -= y * sigmoid(-y * a.dot(x)) * a.dot(u);
  }
  return total / static_cast<double>(batch.size()) + lambda_ * x.dot(u);
}

std::optional<double> LogisticObjective::accuracy(const Vector& x) const {
  const Vector scores = data_.features * x;
  Eigen::Index correct = 0;
  for (Eigen::Index k = 0; k < scores.size(); ++k) {
    const double predicted = scores[k] >= 0.0 ? 1.0 : -1.0;
    if (predicted == data_.labels[k]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

ObjectivePtr make_logistic(Dataset data, double lambda) {
  return std::make_shared<LogisticObjective>(std::move(data), lambda);
}

// ---------------------------------------------------------------------------
// SigmoidSquaredObjective

double SigmoidSquaredObjective::curvature_peak() {
  const double s = (9.0 + std::sqrt(33.0)) / 24.0;
  return 2.0 * s * (1.0 - s) * (1.0 - s) * (3.0 * s - 1.0);
}

SigmoidSquaredObjective::SigmoidSquaredObjective(Dataset data)
    : Objective(ObjectiveKind::kSigmoidSquaredNonconvex, data.dim(), data.size()),
      data_(std::move(data)) {
  validate(data_);
  data_.labels = signed_labels(data_.labels);
  signed_features_ = data_.labels.asDiagonal() * data_.features;
  set_constants(curvature_peak() * max_row_norm_sq(data_.features), 0.0);
}

Vector SigmoidSquaredObjective::batch_losses(const Matrix& points, IndexSpan batch) const {
  const Matrix margins = batch_margins(signed_features_, points, batch, num_samples());
  Vector out(points.cols());
  for (Eigen::Index c = 0; c < points.cols(); ++c) {
    double total = 0.0;
    for (Eigen::Index k = 0; k < margins.rows(); ++k) {
      const double s = sigmoid(margins(k, c));
      total += (s - 1.0) * (s - 1.0);
    }
    out(c) = total / static_cast<double>(batch.size());
  }
  return out;
}

double SigmoidSquaredObjective::batch_loss(const Vector& x, IndexSpan batch) const {
  double total = 0.0;
  for (const std::size_t k : batch) {
    const auto row = static_cast<Eigen::Index>(k);
    const double s = sigmoid(data_.labels[row] * data_.features.row(row).dot(x));
    total += (s - 1.0) * (s - 1.0);
  }
  return total / static_cast<double>(batch.size());
}

Vector SigmoidSquaredObjective::batch_gradient(const Vector& x, IndexSpan batch) const {
  Vector g = Vector::Zero(dim());
  for (const std::size_t k : batch) {
    const auto row = static_cast<Eigen::Index>(k);
    const double y = data_.labels[row];
    const double s = sigmoid(y * data_.features.row(row).dot(x));
    g.noalias() += (-2.0 * s * (1.0 - s) * (1.0 - s) * y) * data_.features.row(row).transpose();
  }
  return g / static_cast<double>(batch.size());
}

double SigmoidSquaredObjective::batch_directional_derivative(const Vector& x, IndexSpan batch,
                                                             const Vector& u) const {
  double total = 0.0;
  for (const std::size_t k : batch) {
    const auto row = static_cast<Eigen::Index>(k);
    const double y = data_.labels[row];
    const auto a = data_.features.row(row);
    const double s = sigmoid(y * a.dot(x));
    total += -2.0 * s * (1.0 - s) * (1.0 - s) * y * a.dot(u);
  }
  return total / static_cast<double>(batch.size());
}

std::optional<double> SigmoidSquaredObjective::accuracy(const Vector& x) const {
  const Vector scores = data_.features * x;
  Eigen::Index correct = 0;
  for (Eigen::Index k = 0; k < scores.size(); ++k) {
    if ((scores[k] >= 0.0 ? 1.0 : -1.0) == data_.labels[k]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

ObjectivePtr make_nonconvex(Dataset data) {
  return std::make_shared<SigmoidSquaredObjective>(std::move(data));
}

// ---------------------------------------------------------------------------
// Checked entry points

namespace {

void check_call(const Objective& f, const Vector& x, IndexSpan batch) {
  if (x.size() != f.dim()) {
    throw std::invalid_argument("model has dimension " + std::to_string(x.size()) +
                                ", objective expects " + std::to_string(f.dim()));
  }
  if (batch.empty()) throw std::invalid_argument("batch is empty");
  const std::size_t n = f.num_samples();
  for (const std::size_t k : batch) {
    if (k >= n) throw std::invalid_argument("sample index " + std::to_string(k) + " out of range");
  }
}

}  // namespace

double stochastic_loss(const Objective& f, const Vector& x, IndexSpan batch) {
  check_call(f, x, batch);
  return f.batch_loss(x, batch);
}

Vector stochastic_gradient(const Objective& f, const Vector& x, IndexSpan batch) {
  check_call(f, x, batch);
  return f.batch_gradient(x, batch);
}

double directional_derivative(const Objective& f, const Vector& x, IndexSpan batch,
                              const Vector& u) {
  check_call(f, x, batch);
  if (u.size() != f.dim()) throw std::invalid_argument("direction has wrong dimension");
  return f.batch_directional_derivative(x, batch, u);
}

}  // namespace hdo
