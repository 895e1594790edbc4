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
#include <optional>
#include <string_view>
#include <vector>

#include "hdo/common.hpp"
#include "hdo/dataset.hpp"
#include "hdo/estimators.hpp"
#include "hdo/objectives.hpp"

namespace hdo {

// ---------------------------------------------------------------------------
// Learning-rate schedules
// ---------------------------------------------------------------------------

enum class ScheduleMode { kConstant, kWarmupCosine };

/// Constant: eta_max at every step. Warmup+cosine: linear ramp from 0 to
/// eta_max over `warmup_steps`, then cosine annealing to eta_min, reached at
/// the final step `total_steps - 1`.
struct Schedule {
  ScheduleMode mode = ScheduleMode::kConstant;
  double eta_max = 0.01;
  double eta_min = 0.0;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 1;
};

void validate(const Schedule& schedule);
double eta_at(const Schedule& schedule, std::int64_t step);

// ---------------------------------------------------------------------------
// Agents and populations
// ---------------------------------------------------------------------------

enum class SchedulerMode {
  kUniformPair,     // one uniformly random unordered pair per step
  kRandomMatching,  // a uniformly random (near-)perfect matching per step
};

std::string_view to_string(SchedulerMode mode);
SchedulerMode scheduler_mode_from_string(std::string_view name);

struct AgentState {
  Vector model;
  EstimatorConfig estimator;
  std::vector<std::size_t> shard;
  Vector momentum_buffer;
  std::int64_t interactions = 0;
  Rng rng;            // minibatch sampling
  Rng direction_rng;  // Gaussian directions of zeroth-order estimates

  bool zeroth_order() const { return is_zeroth_order(estimator.kind); }
};

struct PopulationConfig {
  int n0 = 0;
  int n1 = 2;
  EstimatorConfig zo_estimator{EstimatorKind::kZoUnbiasedForward, 16, 1e-3, 1};
  EstimatorConfig fo_estimator{EstimatorKind::kFirstOrder, 1, 1e-3, 1};
  Schedule schedule;
  double momentum = 0.0;
  SchedulerMode scheduler = SchedulerMode::kUniformPair;
  std::int64_t steps = 1;
  // nu = eta / c for the biased estimators; unset means c = sqrt(d). When
  // `couple_nu` is false the estimator's own nu is used unchanged.
  std::optional<double> nu_c;
  bool couple_nu = true;
  // During warmup, agents step locally without averaging.
  bool warmup_local_only = true;
  std::uint64_t seed = 0;
};

void validate(const PopulationConfig& cfg);

struct Population {
  ObjectivePtr objective;
  std::vector<AgentState> agents;
  double momentum = 0.0;
  std::optional<double> nu_c;  // resolved coupling constant; empty = no coupling
  bool warmup_local_only = true;
  Rng scheduler_rng;

  std::int64_t steps = 0;         // scheduler steps taken
  std::int64_t interactions = 0;  // fine-grained time
  std::int64_t function_evals = 0;

  int size() const { return static_cast<int>(agents.size()); }
  int n0() const;
  double parallel_time() const {
    return static_cast<double>(interactions) / static_cast<double>(agents.size());
  }
};

/// All agents start at x0; agents [0, n0) are zeroth-order with
/// partition.zo_shards, the rest first-order with partition.fo_shards.
Population init_population(const PopulationConfig& cfg, ObjectivePtr objective,
                           const DataPartition& partition, const Vector& x0);

/// Smoothing radius the population's biased estimators use at step size eta.
double effective_nu(const Population& pop, const EstimatorConfig& cfg, double eta);

// ---------------------------------------------------------------------------
// Interactions
// ---------------------------------------------------------------------------

struct InteractionEvent {
  int i = -1;
  int j = -1;
  double eta = 0.0;
  // Momentum-filtered directions actually applied in the local steps.
  Vector step_i;
  Vector step_j;
  std::int64_t function_evals = 0;
  bool averaged = true;
};

/// One local step for a single agent: estimate at its current model, filter
/// through its momentum buffer, and move by -eta times the result. With
/// eta == 0 the agent is left untouched and no oracle is queried.
Vector local_step(const Objective& f, AgentState& agent, double eta, double momentum,
                  double nu, std::int64_t& function_evals);

/// Both agents take a local step from their own pre-interaction model, then
/// both adopt the average of the two results.
InteractionEvent hdo_interact(const Population& pop, AgentState& a, AgentState& b, double eta);

InteractionEvent step_uniform_pair(Population& pop, const Schedule& schedule);
std::vector<InteractionEvent> step_matching(Population& pop, const Schedule& schedule);

/// Draws a uniformly random unordered pair {i, j}, i != j, from n agents.
std::pair<int, int> draw_uniform_pair(int n, Rng& rng);
/// Uniformly random matching: a random permutation read off in consecutive
/// pairs. For odd n the last element of the permutation idles.
std::vector<std::pair<int, int>> draw_matching(int n, Rng& rng, int* idle = nullptr);

// ---------------------------------------------------------------------------
// Driving a run
// ---------------------------------------------------------------------------

struct StepInfo {
  std::int64_t step = 0;
  double eta = 0.0;
};

/// Hooks invoked by `run`. `on_interaction` fires after every pairwise
/// interaction; `on_checkpoint` at step 0, every `cadence` steps, and after
/// the last step.
class RunObserver {
 public:
  virtual ~RunObserver() = default;
  virtual void on_interaction(const Population& /*pop*/, const InteractionEvent& /*event*/) {}
  virtual void on_checkpoint(const Population& /*pop*/, const StepInfo& /*info*/) {}
};

struct RunOptions {
  std::int64_t steps = 1;
  std::int64_t cadence = 10;
  SchedulerMode scheduler = SchedulerMode::kUniformPair;
  Schedule schedule;
};

struct RunSummary {
  std::int64_t steps = 0;
  std::int64_t interactions = 0;
  std::int64_t function_evals = 0;
};

RunSummary run(Population& pop, const RunOptions& options, RunObserver* observer = nullptr);

}  // namespace hdo
