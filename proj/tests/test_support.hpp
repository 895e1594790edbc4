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

#include <cmath>
#include <vector>

#include "hdo/objectives.hpp"

namespace hdo::testing {

// F(x, k) = a_k^T x. Gradients are constant, so the smoothing terms of every
// zeroth-order bound vanish and Gaussian moments give exact oracles.
class LinearObjective final : public Objective {
 public:
  explicit LinearObjective(Matrix slopes)
      : Objective(ObjectiveKind::kQuadratic, slopes.cols(), static_cast<std::size_t>(slopes.rows())),
        slopes_(std::move(slopes)) {
    // Any positive constant is a valid Lipschitz bound for a constant gradient.
    set_constants(1e-12, 0.0);
  }

  std::size_t num_samples() const override { return static_cast<std::size_t>(slopes_.rows()); }
  double batch_loss(const Vector& x, IndexSpan batch) const override {
    return mean_slope(batch).dot(x);
  }
  Vector batch_gradient(const Vector&, IndexSpan batch) const override { return mean_slope(batch); }
  double batch_directional_derivative(const Vector&, IndexSpan batch,
                                      const Vector& u) const override {
    return mean_slope(batch).dot(u);
  }

 private:
  Vector mean_slope(IndexSpan batch) const {
    Vector s = Vector::Zero(slopes_.cols());
    for (auto k : batch) s += slopes_.row(static_cast<Eigen::Index>(k)).transpose();
    return s / static_cast<double>(batch.size());
  }

  Matrix slopes_;
};

inline std::vector<std::size_t> indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

// Running mean of vectors with the trace-of-covariance standard error.
struct VectorMean {
  Vector sum, sum_sq;
  long count = 0;

  void add(const Vector& v) {
    if (count == 0) {
      sum = Vector::Zero(v.size());
      sum_sq = Vector::Zero(v.size());
    }
    sum += v;
    sum_sq += v.cwiseProduct(v);
    ++count;
  }
  Vector mean() const { return sum / static_cast<double>(count); }
  // Standard error of the norm of the mean: sqrt(tr Cov / count).
  double stderr_() const {
    const Vector m = mean();
    const double tr = (sum_sq / static_cast<double>(count) - m.cwiseProduct(m)).sum();
    return std::sqrt(std::max(tr, 0.0) / static_cast<double>(count));
  }
};

}  // namespace hdo::testing
