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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hdo/common.hpp"
#include "hdo/objectives.hpp"
#include "hdo/protocol.hpp"

namespace hdo {

struct MetricsRecord {
  std::int64_t step = 0;
  double parallel_time = 0.0;
  double eta = 0.0;
  double gamma = 0.0;
  std::optional<double> mu_loss_gap;  // f(mu) - f*, when f* is known
  double grad_norm_sq_mu = 0.0;
  std::optional<double> mean_val_loss;
  std::optional<double> mean_val_acc;  // classification objectives only
  std::optional<double> mt_g;          // opt-in, sampled from a separate stream
  std::int64_t function_evals_total = 0;
};

using MetricsSeries = std::vector<MetricsRecord>;

Vector compute_mu(const Population& pop);
/// Gamma = (1/n) sum_i ||X_i - mu||^2.
double compute_gamma(const Population& pop);

/// (1/n) sum_i ||G_i(X_i)||^2 with one fresh raw estimate per agent, drawn
/// from `rng` so the agents' own streams are not advanced. Biased estimators
/// use the smoothing radius the population would use at step size `eta`.
double compute_mtg(const Population& pop, double eta, Rng& rng);

// Exponentially weighted average y_T = sum_t w_t mu_{t-1} / S_T with
// w_t = (1 - eta*ell/(2n))^{-t}. Tracked through the ratio rho_t = w_t / S_t,
// which obeys rho_{t+1} = rho_t / (q + rho_t), q = 1 - eta*ell/(2n), so w_t
// itself never has to be formed.
struct WeightedAverageState {
  std::int64_t t = 0;
  double rho = 1.0;      // w_t / S_t
  double log_w = 0.0;    // log w_t
  Vector y;

  double weight() const;  // w_t
  double total() const;   // S_t
};

WeightedAverageState weighted_average_update(WeightedAverageState state, const Vector& mu_prev,
                                             double eta, double ell, int n);

struct ValidationResult {
  double mean_loss = 0.0;
  std::optional<double> mean_acc;
};

/// Averages the per-agent loss (and accuracy, when the objective reports one)
/// of every agent's model on `validation`.
ValidationResult evaluate_validation(const Population& pop, const Objective& validation);

struct AggregateRecord {
  std::int64_t step = 0;
  double parallel_time = 0.0;
  // Indexed like kAggregatedFields; empty when any series lacks the value.
  std::vector<std::optional<double>> mean;
  std::vector<std::optional<double>> stderr_;
};

extern const std::vector<std::string> kAggregatedFields;

/// Pointwise mean and standard error (sample std / sqrt(k)) across seeds.
/// Throws std::invalid_argument when the series' steps do not line up.
std::vector<AggregateRecord> aggregate_seeds(const std::vector<MetricsSeries>& series);

void write_metrics_csv(std::ostream& out, const MetricsSeries& series);
void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRecord>& records);

// ---------------------------------------------------------------------------
// Recording metrics during a run
// ---------------------------------------------------------------------------

struct MetricsOptions {
  ObjectivePtr validation;    // defaults to the training objective
  bool sample_mtg = false;
  std::uint64_t seed = 0;     // stream for M_t^G samples
  bool track_weighted_average = false;
};

/// RunObserver that records a MetricsRecord at each checkpoint and, when
/// enabled, accumulates the weighted average y_T of the mean iterates. The
/// running mean is advanced per interaction with the exact update
/// mu <- mu - (eta/n)(step_i + step_j) and resynchronized at checkpoints.
class MetricsRecorder final : public RunObserver {
 public:
  MetricsRecorder(const Population& pop, MetricsOptions options);

  void on_interaction(const Population& pop, const InteractionEvent& event) override;
  void on_checkpoint(const Population& pop, const StepInfo& info) override;

  const MetricsSeries& series() const { return series_; }
  const std::optional<WeightedAverageState>& weighted_average() const { return weighted_; }

 private:
  MetricsOptions options_;
  Rng rng_;
  MetricsSeries series_;
  Vector mu_;
  std::optional<WeightedAverageState> weighted_;
};

struct RunResult {
  RunSummary summary;
  MetricsSeries series;
  std::optional<Vector> weighted_average;  // y_T
};

RunResult run_with_metrics(Population& pop, const RunOptions& run_options,
                           const MetricsOptions& metrics_options);

std::string format_double(double v);

}  // namespace hdo
