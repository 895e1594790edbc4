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

#include "hdo/estimators.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace hdo {
namespace {

void check_inputs(const Objective& f, std::span<const std::size_t> shard, const Vector& x) {
  if (shard.empty()) throw std::invalid_argument("agent shard is empty");
  if (x.size() != f.dim()) throw std::invalid_argument("model dimension does not match objective");
}

}  // namespace

std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kFirstOrder: return "first_order";
    case EstimatorKind::kZoBiasedOneSided: return "zo_biased_one_sided";
    case EstimatorKind::kZoBiasedCentral: return "zo_biased_central";
    case EstimatorKind::kZoUnbiasedForward: return "zo_unbiased_forward";
  }
  return "unknown";
}

EstimatorKind estimator_kind_from_string(std::string_view name) {
  for (auto kind : {EstimatorKind::kFirstOrder, EstimatorKind::kZoBiasedOneSided,
                    EstimatorKind::kZoBiasedCentral, EstimatorKind::kZoUnbiasedForward}) {
    if (name == to_string(kind)) return kind;
  }
  throw std::invalid_argument("unknown estimator kind '" + std::string(name) + "'");
}

void validate(const EstimatorConfig& cfg) {
  if (cfg.rv < 1) throw std::invalid_argument("estimator rv must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("estimator batch_size must be >= 1");
  if (is_biased(cfg.kind) && !(cfg.nu > 0.0)) {
    throw std::invalid_argument("biased zeroth-order estimator needs nu > 0");
  }
}

std::vector<std::size_t> sample_batch(std::span<const std::size_t> shard, int batch_size,
                                      Rng& rng) {
  if (shard.empty()) throw std::invalid_argument("agent shard is empty");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const std::size_t n = shard.size();
  const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(batch_size), n);
  if (b == n) return {shard.begin(), shard.end()};

  // Floyd's algorithm: b distinct positions out of n in O(b^2) time.
  std::vector<std::size_t> picked;
  picked.reserve(b);
  for (std::size_t j = n - b; j < n; ++j) {
    std::uniform_int_distribution<std::size_t> pick(0, j);
    const std::size_t t = pick(rng);
    if (std::find(picked.begin(), picked.end(), t) == picked.end()) {
      picked.push_back(t);
    } else {
      picked.push_back(j);
    }
  }
  std::vector<std::size_t> batch;
  batch.reserve(b);
  for (const std::size_t p : picked) batch.push_back(shard[p]);
  return batch;
}

GradientEstimate estimate_first_order(const Objective& f, std::span<const std::size_t> shard,
                                      const Vector& x, int batch_size, Rng& rng) {
  check_inputs(f, shard, x);
  const auto batch = sample_batch(shard, batch_size, rng);
  GradientEstimate out;
  out.kind = EstimatorKind::kFirstOrder;
  out.vector = stochastic_gradient(f, x, batch);
  out.function_evals = static_cast<std::int64_t>(batch.size());
  return out;
}

GradientEstimate estimate_zo_one_sided(const Objective& f, std::span<const std::size_t> shard,
                                       const Vector& x, const EstimatorConfig& cfg, Rng& batch_rng,
                                       Rng& direction_rng) {
  check_inputs(f, shard, x);
  if (!(cfg.nu > 0.0)) throw std::invalid_argument("zeroth-order estimator needs nu > 0");
  if (cfg.rv < 1) throw std::invalid_argument("estimator rv must be >= 1");
  const auto batch = sample_batch(shard, cfg.batch_size, batch_rng);
  const double base = stochastic_loss(f, x, batch);
  Vector acc = Vector::Zero(f.dim());
  Vector probe(f.dim());
  for (int k = 0; k < cfg.rv; ++k) {
    const Vector u = gaussian_vector(f.dim(), direction_rng);
    probe = x + cfg.nu * u;
    acc += ((f.batch_loss(probe, batch) - base) / cfg.nu) * u;
  }
  GradientEstimate out;
  out.kind = EstimatorKind::kZoBiasedOneSided;
  out.vector = acc / static_cast<double>(cfg.rv);
  out.function_evals = static_cast<std::int64_t>(batch.size()) * (cfg.rv + 1);
  return out;
}

GradientEstimate estimate_zo_central(const Objective& f, std::span<const std::size_t> shard,
                                     const Vector& x, const EstimatorConfig& cfg, Rng& batch_rng,
                                     Rng& direction_rng) {
  check_inputs(f, shard, x);
  if (!(cfg.nu > 0.0)) throw std::invalid_argument("zeroth-order estimator needs nu > 0");
  if (cfg.rv < 1) throw std::invalid_argument("estimator rv must be >= 1");
  const auto batch = sample_batch(shard, cfg.batch_size, batch_rng);
  Vector acc = Vector::Zero(f.dim());
  Vector plus(f.dim());
  Vector minus(f.dim());
  for (int k = 0; k < cfg.rv; ++k) {
    const Vector u = gaussian_vector(f.dim(), direction_rng);
    plus = x + cfg.nu * u;
    minus = x - cfg.nu * u;
    acc += ((f.batch_loss(plus, batch) - f.batch_loss(minus, batch)) / (2.0 * cfg.nu)) * u;
  }
  GradientEstimate out;
  out.kind = EstimatorKind::kZoBiasedCentral;
  out.vector = acc / static_cast<double>(cfg.rv);
  out.function_evals = static_cast<std::int64_t>(batch.size()) * 2 * cfg.rv;
  return out;
}

GradientEstimate estimate_zo_unbiased_forward(const Objective& f,
                                              std::span<const std::size_t> shard,
                                              const Vector& x, const EstimatorConfig& cfg,
                                              Rng& batch_rng, Rng& direction_rng) {
  check_inputs(f, shard, x);
  if (cfg.rv < 1) throw std::invalid_argument("estimator rv must be >= 1");
  const auto batch = sample_batch(shard, cfg.batch_size, batch_rng);
  Vector acc = Vector::Zero(f.dim());
  for (int k = 0; k < cfg.rv; ++k) {
    const Vector u = gaussian_vector(f.dim(), direction_rng);
    acc += directional_derivative(f, x, batch, u) * u;
  }
  GradientEstimate out;
  out.kind = EstimatorKind::kZoUnbiasedForward;
  out.vector = acc / static_cast<double>(cfg.rv);
  out.function_evals = static_cast<std::int64_t>(batch.size()) * cfg.rv;
  return out;
}

GradientEstimate estimate_zo_one_sided(const Objective& f, std::span<const std::size_t> shard,
                                       const Vector& x, const EstimatorConfig& cfg, Rng& rng) {
  return estimate_zo_one_sided(f, shard, x, cfg, rng, rng);
}

GradientEstimate estimate_zo_central(const Objective& f, std::span<const std::size_t> shard,
                                     const Vector& x, const EstimatorConfig& cfg, Rng& rng) {
  return estimate_zo_central(f, shard, x, cfg, rng, rng);
}

GradientEstimate estimate_zo_unbiased_forward(const Objective& f,
                                              std::span<const std::size_t> shard,
                                              const Vector& x, const EstimatorConfig& cfg,
                                              Rng& rng) {
  return estimate_zo_unbiased_forward(f, shard, x, cfg, rng, rng);
}

GradientEstimate estimate(const Objective& f, std::span<const std::size_t> shard, const Vector& x,
                          const EstimatorConfig& cfg, Rng& batch_rng, Rng& direction_rng) {
  switch (cfg.kind) {
    case EstimatorKind::kFirstOrder:
      return estimate_first_order(f, shard, x, cfg.batch_size, batch_rng);
    case EstimatorKind::kZoBiasedOneSided:
      return estimate_zo_one_sided(f, shard, x, cfg, batch_rng, direction_rng);
    case EstimatorKind::kZoBiasedCentral:
      return estimate_zo_central(f, shard, x, cfg, batch_rng, direction_rng);
    case EstimatorKind::kZoUnbiasedForward:
      return estimate_zo_unbiased_forward(f, shard, x, cfg, batch_rng, direction_rng);
  }
  throw std::invalid_argument("unknown estimator kind");
}

GradientEstimate estimate(const Objective& f, std::span<const std::size_t> shard, const Vector& x,
                          const EstimatorConfig& cfg, Rng& rng) {
  return estimate(f, shard, x, cfg, rng, rng);
}

double couple_nu(double eta, double c) {
  if (!(eta > 0.0) || !(c > 0.0)) throw std::invalid_argument("couple_nu needs eta > 0 and c > 0");
  return eta / c;
}

}  // namespace hdo
