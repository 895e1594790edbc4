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

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "hdo/common.hpp"
#include "hdo/dataset.hpp"

namespace hdo {

enum class ObjectiveKind { kQuadratic, kLogisticL2, kSigmoidSquaredNonconvex };

std::string_view to_string(ObjectiveKind kind);
ObjectiveKind objective_kind_from_string(std::string_view name);

/// A finite-sum objective f(x) = mean_k F(x, k) over `num_samples()` samples,
/// with hand-derived per-sample gradients and published constants:
///   L    -- every per-sample gradient is L-Lipschitz,
///   ell  -- strong-convexity modulus of f (0 when not convex).
/// Implementations are immutable after construction and safe to share.
class Objective {
 public:
  virtual ~Objective() = default;

  ObjectiveKind kind() const { return kind_; }
  Eigen::Index dim() const { return dim_; }
  double L() const { return lipschitz_; }
  double ell() const { return strong_convexity_; }
  const std::optional<Vector>& x_star() const { return x_star_; }
  std::optional<double> f_star() const { return f_star_; }

  virtual std::size_t num_samples() const = 0;

  // Batch forms: means over the given sample indices. Callers validate the
  // batch; these assume non-empty, in-range indices and matching dimensions.
  virtual double batch_loss(const Vector& x, IndexSpan batch) const = 0;
  virtual Vector batch_gradient(const Vector& x, IndexSpan batch) const = 0;
  virtual double batch_directional_derivative(const Vector& x, IndexSpan batch,
                                              const Vector& u) const = 0;

  /// Losses at every column of `points`, each the mean over `batch`. The
  /// default evaluates the columns one at a time.
  virtual Vector batch_losses(const Matrix& points, IndexSpan batch) const;

  /// Classification accuracy over all samples; nullopt for regression kinds.
  virtual std::optional<double> accuracy(const Vector& /*x*/) const { return std::nullopt; }

  double full_loss(const Vector& x) const { return batch_loss(x, all_indices()); }
  Vector full_losses(const Matrix& points) const { return batch_losses(points, all_indices()); }
  Vector full_gradient(const Vector& x) const { return batch_gradient(x, all_indices()); }
  IndexSpan all_indices() const { return all_; }

 protected:
  Objective(ObjectiveKind kind, Eigen::Index dim, std::size_t samples);

  void set_constants(double lipschitz, double strong_convexity);
  void set_optimum(Vector x_star, double f_star);

 private:
  ObjectiveKind kind_;
  Eigen::Index dim_;
  double lipschitz_ = 0.0;
  double strong_convexity_ = 0.0;
  std::optional<Vector> x_star_;
  std::optional<double> f_star_;
  std::vector<std::size_t> all_;
};

using ObjectivePtr = std::shared_ptr<const Objective>;

// ---------------------------------------------------------------------------
// Quadratic
// ---------------------------------------------------------------------------

struct QuadraticOptions {
  std::size_t samples = 1000;
  // Relative per-sample spread of the Hessian eigenvalues, capped so that no
  // per-sample eigenvalue exceeds `cond`.
  double hessian_spread = 0.5;
  // Standard deviation of the per-sample linear term; 0 gives a model whose
  // stochastic gradients all vanish at x*.
  double gradient_noise = 0.0;
};

/// f(x) = 1/2 (x - x*)^T A (x - x*), A = Q diag(lambda) Q^T with lambda
/// spaced linearly over [1, cond]. Sample k contributes
///   F_k(x) = 1/2 z^T diag(c_k) z + beta_k^T z,   z = Q^T (x - x*),
/// where the c_k and beta_k come in antithetic pairs so that their sample
/// means are exactly lambda and 0. Hence L = cond, ell = 1, f* = 0.
class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(Eigen::Index d, double cond, std::uint64_t seed,
                     const QuadraticOptions& options);

  std::size_t num_samples() const override { return static_cast<std::size_t>(coeffs_.rows()); }
  double batch_loss(const Vector& x, IndexSpan batch) const override;
  Vector batch_gradient(const Vector& x, IndexSpan batch) const override;
  double batch_directional_derivative(const Vector& x, IndexSpan batch,
                                      const Vector& u) const override;

  const Vector& eigenvalues() const { return eigenvalues_; }
  const Matrix& basis() const { return basis_; }
  Matrix hessian() const;
  double hessian_trace() const { return eigenvalues_.sum(); }
  /// Hessian of the loss restricted to `batch` (mean of per-sample Hessians).
  Matrix batch_hessian(IndexSpan batch) const;

 private:
  void batch_means(IndexSpan batch, Vector& curvature, Vector& linear) const;

  Vector eigenvalues_;
  Matrix basis_;
  Matrix coeffs_;  // samples x d, per-sample curvature in the eigenbasis
  Matrix linear_;  // samples x d, per-sample linear term in the eigenbasis
};

ObjectivePtr make_quadratic(Eigen::Index d, double cond, std::uint64_t seed,
                            const QuadraticOptions& options = {});

// ---------------------------------------------------------------------------
// L2-regularized logistic regression
// ---------------------------------------------------------------------------

/// F_k(x) = log(1 + exp(-y_k a_k^T x)) + (lambda/2)||x||^2 with labels in
/// {-1, +1}. L = lambda + max_k ||a_k||^2 / 4 (conservative per-sample bound),
/// ell = lambda. The optimum is found by Newton's method at construction.
class LogisticObjective final : public Objective {
 public:
  LogisticObjective(Dataset data, double lambda);

  std::size_t num_samples() const override { return data_.size(); }
  double batch_loss(const Vector& x, IndexSpan batch) const override;
  Vector batch_gradient(const Vector& x, IndexSpan batch) const override;
  double batch_directional_derivative(const Vector& x, IndexSpan batch,
                                      const Vector& u) const override;
  Vector batch_losses(const Matrix& points, IndexSpan batch) const override;
  std::optional<double> accuracy(const Vector& x) const override;

  double lambda() const { return lambda_; }
  const Dataset& data() const { return data_; }

 private:
  Dataset data_;
  Matrix signed_features_;  // row k is y_k a_k^T
  double lambda_;
};

ObjectivePtr make_logistic(Dataset data, double lambda);

// ---------------------------------------------------------------------------
// Sigmoid-squared loss (smooth, non-convex)
// ---------------------------------------------------------------------------

/// F_k(x) = (sigmoid(y_k a_k^T x) - 1)^2. With s = sigmoid(z) the second
/// derivative in z is -2 s (1-s)^2 (1-3s), whose magnitude peaks at
/// s = (9 + sqrt(33)) / 24; L = that peak times max_k ||a_k||^2. ell = 0 and
/// f* is unset.
class SigmoidSquaredObjective final : public Objective {
 public:
  explicit SigmoidSquaredObjective(Dataset data);

  std::size_t num_samples() const override { return data_.size(); }
  double batch_loss(const Vector& x, IndexSpan batch) const override;
  Vector batch_gradient(const Vector& x, IndexSpan batch) const override;
  double batch_directional_derivative(const Vector& x, IndexSpan batch,
                                      const Vector& u) const override;
  Vector batch_losses(const Matrix& points, IndexSpan batch) const override;
  std::optional<double> accuracy(const Vector& x) const override;

  static double curvature_peak();

 private:
  Dataset data_;
  Matrix signed_features_;
};

ObjectivePtr make_nonconvex(Dataset data);

// ---------------------------------------------------------------------------
// Checked entry points
// ---------------------------------------------------------------------------

/// Mean per-sample loss over `batch`. Throws std::invalid_argument on an empty
/// batch, an out-of-range index, or a dimension mismatch.
double stochastic_loss(const Objective& f, const Vector& x, IndexSpan batch);
Vector stochastic_gradient(const Objective& f, const Vector& x, IndexSpan batch);
/// u^T grad F(x, batch) without materializing the gradient where the
/// objective has a cheaper path.
double directional_derivative(const Objective& f, const Vector& x, IndexSpan batch,
                              const Vector& u);

/// Maps {0, 1} or {-1, +1} labels to {-1, +1}; throws on anything else.
Vector signed_labels(const Vector& labels);

}  // namespace hdo
