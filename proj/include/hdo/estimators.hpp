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

#include <cstdint>
#include <string_view>
#include <vector>

#include "hdo/common.hpp"
#include "hdo/objectives.hpp"

namespace hdo {

enum class EstimatorKind {
  kFirstOrder,
  kZoBiasedOneSided,
  kZoBiasedCentral,
  kZoUnbiasedForward,
};

std::string_view to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(std::string_view name);

constexpr bool is_zeroth_order(EstimatorKind kind) { return kind != EstimatorKind::kFirstOrder; }
constexpr bool is_biased(EstimatorKind kind) {
  return kind == EstimatorKind::kZoBiasedOneSided || kind == EstimatorKind::kZoBiasedCentral;
}

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::kFirstOrder;
  int rv = 1;          // Gaussian directions averaged per call
  double nu = 1e-3;    // smoothing radius; read only by the biased kinds
  int batch_size = 1;  // clamped to the shard size when larger
};

/// Throws std::invalid_argument unless rv >= 1, batch_size >= 1, and nu > 0
/// for the biased kinds.
void validate(const EstimatorConfig& cfg);

struct GradientEstimate {
  Vector vector;
  EstimatorKind kind = EstimatorKind::kFirstOrder;
  // Oracle cost. One sample loss counts as one evaluation; a first-order
  // gradient or a forward-mode directional derivative over b samples counts
  // as b evaluations.
  std::int64_t function_evals = 0;
};

/// Draws min(batch_size, |shard|) distinct shard entries uniformly at random.
std::vector<std::size_t> sample_batch(std::span<const std::size_t> shard, int batch_size,
                                      Rng& rng);

GradientEstimate estimate_first_order(const Objective& f, std::span<const std::size_t> shard,
                                      const Vector& x, int batch_size, Rng& rng);

// The zeroth-order estimators take the minibatch from `batch_rng` and the
// Gaussian directions from `direction_rng`; the single-rng overloads use one
// stream for both. Separate streams let a first-order and a zeroth-order
// agent seeded alike draw identical minibatches.

// (1/rv) sum_k [(F(x + nu u_k) - F(x)) / nu] u_k over one shared batch.
GradientEstimate estimate_zo_one_sided(const Objective& f, std::span<const std::size_t> shard,
                                       const Vector& x, const EstimatorConfig& cfg, Rng& batch_rng,
                                       Rng& direction_rng);
GradientEstimate estimate_zo_one_sided(const Objective& f, std::span<const std::size_t> shard,
                                       const Vector& x, const EstimatorConfig& cfg, Rng& rng);

// (1/rv) sum_k [(F(x + nu u_k) - F(x - nu u_k)) / (2 nu)] u_k.
GradientEstimate estimate_zo_central(const Objective& f, std::span<const std::size_t> shard,
                                     const Vector& x, const EstimatorConfig& cfg, Rng& batch_rng,
                                     Rng& direction_rng);
GradientEstimate estimate_zo_central(const Objective& f, std::span<const std::size_t> shard,
                                     const Vector& x, const EstimatorConfig& cfg, Rng& rng);

// (1/rv) sum_k (u_k^T grad F(x)) u_k, with the directional derivative taken
// through the objective's forward path. Unbiased for grad F(x, batch).
GradientEstimate estimate_zo_unbiased_forward(const Objective& f,
                                              std::span<const std::size_t> shard,
                                              const Vector& x, const EstimatorConfig& cfg,
                                              Rng& batch_rng, Rng& direction_rng);
GradientEstimate estimate_zo_unbiased_forward(const Objective& f,
                                              std::span<const std::size_t> shard,
                                              const Vector& x, const EstimatorConfig& cfg,
                                              Rng& rng);

/// Dispatches on cfg.kind.
GradientEstimate estimate(const Objective& f, std::span<const std::size_t> shard, const Vector& x,
                          const EstimatorConfig& cfg, Rng& batch_rng, Rng& direction_rng);
GradientEstimate estimate(const Objective& f, std::span<const std::size_t> shard, const Vector& x,
                          const EstimatorConfig& cfg, Rng& rng);

/// Smoothing radius coupled to the step size: nu = eta / c.
double couple_nu(double eta, double c);

}  // namespace hdo
