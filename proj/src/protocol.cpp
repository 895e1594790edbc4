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

#include "hdo/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hdo {

void validate(const Schedule& schedule) {
  if (!(schedule.eta_max >= 0.0) || !std::isfinite(schedule.eta_max)) {
    throw std::invalid_argument("eta must be a finite non-negative number");
  }
  if (schedule.mode == ScheduleMode::kWarmupCosine) {
    if (schedule.eta_min < 0.0 || schedule.eta_min > schedule.eta_max) {
      throw std::invalid_argument("eta_min must lie in [0, eta_max]");
    }
    if (schedule.warmup_steps < 0) throw std::invalid_argument("warmup_steps must be >= 0");
    if (schedule.total_steps < 1) throw std::invalid_argument("schedule total_steps must be >= 1");
  }
}

double eta_at(const Schedule& schedule, std::int64_t step) {
  if (step < 0) throw std::invalid_argument("eta_at needs step >= 0");
  if (schedule.mode == ScheduleMode::kConstant) return schedule.eta_max;
  if (step < schedule.warmup_steps) {
    return schedule.eta_max * static_cast<double>(step) /
           static_cast<double>(schedule.warmup_steps);
  }
  const std::int64_t span = schedule.total_steps - 1 - schedule.warmup_steps;
  if (span <= 0) return schedule.eta_min;
  const double progress =
      std::min(1.0, static_cast<double>(step - schedule.warmup_steps) / static_cast<double>(span));
  return schedule.eta_min + 0.5 * (schedule.eta_max - schedule.eta_min) *
                                (1.0 + std::cos(std::numbers::pi * progress));
}

std::string_view to_string(SchedulerMode mode) {
  return mode == SchedulerMode::kUniformPair ? "uniform_pair" : "random_matching";
}

SchedulerMode scheduler_mode_from_string(std::string_view name) {
  if (name == "uniform_pair") return SchedulerMode::kUniformPair;
  if (name == "random_matching" || name == "matching") return SchedulerMode::kRandomMatching;
  throw std::invalid_argument("unknown scheduler mode '" + std::string(name) + "'");
}

void validate(const PopulationConfig& cfg) {
  if (cfg.n0 < 0 || cfg.n1 < 0) throw std::invalid_argument("n0 and n1 must be non-negative");
  if (cfg.n0 + cfg.n1 < 2) throw std::invalid_argument("population needs at least two agents");
  if (cfg.n0 > 0) {
    validate(cfg.zo_estimator);
    if (!is_zeroth_order(cfg.zo_estimator.kind)) {
      throw std::invalid_argument("zeroth-order agents need a zeroth-order estimator kind");
    }
  }
  if (cfg.n1 > 0) {
    validate(cfg.fo_estimator);
    if (cfg.fo_estimator.kind != EstimatorKind::kFirstOrder) {
      throw std::invalid_argument("first-order agents need the first_order estimator kind");
    }
  }
  validate(cfg.schedule);
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
  if (cfg.steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (cfg.nu_c && !(*cfg.nu_c > 0.0)) throw std::invalid_argument("nu coupling c must be > 0");
}

int Population::n0() const {
  return static_cast<int>(std::count_if(agents.begin(), agents.end(),
                                        [](const AgentState& a) { return a.zeroth_order(); }));
}

Population init_population(const PopulationConfig& cfg, ObjectivePtr objective,
                           const DataPartition& partition, const Vector& x0) {
  validate(cfg);
  if (!objective) throw std::invalid_argument("population needs an objective");
  if (x0.size() != objective->dim()) {
    throw std::invalid_argument("initial model dimension does not match objective");
  }
  if (partition.zo_shards.size() != static_cast<std::size_t>(cfg.n0) ||
      partition.fo_shards.size() != static_cast<std::size_t>(cfg.n1)) {
    throw std::invalid_argument("partition has " + std::to_string(partition.zo_shards.size()) +
                                "+" + std::to_string(partition.fo_shards.size()) +
                                " shards for " + std::to_string(cfg.n0) + "+" +
                                std::to_string(cfg.n1) + " agents");
  }

  Population pop;
  pop.objective = std::move(objective);
  pop.momentum = cfg.momentum;
  pop.warmup_local_only = cfg.warmup_local_only;
  if (cfg.couple_nu) {
    pop.nu_c = cfg.nu_c.value_or(std::sqrt(static_cast<double>(pop.objective->dim())));
  }
  pop.scheduler_rng.seed(derive_seed(cfg.seed, 0, 0, StreamTag::kScheduler));

  const int n = cfg.n0 + cfg.n1;
  pop.agents.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const bool zo = i < cfg.n0;
    const auto& shard = zo ? partition.zo_shards[static_cast<std::size_t>(i)]
                           : partition.fo_shards[static_cast<std::size_t>(i - cfg.n0)];
    if (shard.empty()) throw std::invalid_argument("agent " + std::to_string(i) + " has no data");
    for (const std::size_t k : shard) {
      if (k >= pop.objective->num_samples()) {
        throw std::invalid_argument("shard index out of range for agent " + std::to_string(i));
      }
    }
    AgentState agent;
    agent.model = x0;
    agent.estimator = zo ? cfg.zo_estimator : cfg.fo_estimator;
    agent.shard = shard;
    agent.momentum_buffer = Vector::Zero(x0.size());
    agent.rng.seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(i), 0, StreamTag::kEstimator));
    agent.direction_rng.seed(
        derive_seed(cfg.seed, static_cast<std::uint64_t>(i), 1, StreamTag::kEstimator));
    pop.agents.push_back(std::move(agent));
  }
  return pop;
}

double effective_nu(const Population& pop, const EstimatorConfig& cfg, double eta) {
  if (!is_biased(cfg.kind) || !pop.nu_c || !(eta > 0.0)) return cfg.nu;
  return couple_nu(eta, *pop.nu_c);
}

Vector local_step(const Objective& f, AgentState& agent, double eta, double momentum, double nu,
                  std::int64_t& function_evals) {
  if (eta == 0.0) return Vector::Zero(agent.model.size());
  EstimatorConfig cfg = agent.estimator;
  cfg.nu = nu;
  GradientEstimate g = estimate(f, agent.shard, agent.model, cfg, agent.rng, agent.direction_rng);
  function_evals += g.function_evals;
  if (momentum != 0.0) {
    agent.momentum_buffer = momentum * agent.momentum_buffer + (1.0 - momentum) * g.vector;
    g.vector = agent.momentum_buffer;
  }
  agent.model.noalias() -= eta * g.vector;
  return std::move(g.vector);
}

InteractionEvent hdo_interact(const Population& pop, AgentState& a, AgentState& b, double eta) {
  if (a.model.size() != b.model.size()) {
    throw std::invalid_argument("interacting agents have different model dimensions");
  }
  const Objective& f = *pop.objective;
  InteractionEvent ev;
  ev.eta = eta;
  ev.step_i = local_step(f, a, eta, pop.momentum, effective_nu(pop, a.estimator, eta),
                         ev.function_evals);
  ev.step_j = local_step(f, b, eta, pop.momentum, effective_nu(pop, b.estimator, eta),
                         ev.function_evals);
  Vector avg = 0.5 * (a.model + b.model);
  a.model = avg;
  b.model = std::move(avg);
  ++a.interactions;
  ++b.interactions;
  return ev;
}

namespace {

bool in_local_warmup(const Population& pop, const Schedule& schedule) {
  return pop.warmup_local_only && schedule.mode == ScheduleMode::kWarmupCosine &&
         pop.steps < schedule.warmup_steps;
}

InteractionEvent local_only(Population& pop, int i, int j, double eta) {
  InteractionEvent ev;
  ev.i = i;
  ev.j = j;
  ev.eta = eta;
  ev.averaged = false;
  const Objective& f = *pop.objective;
  auto& a = pop.agents[static_cast<std::size_t>(i)];
  ev.step_i = local_step(f, a, eta, pop.momentum, effective_nu(pop, a.estimator, eta),
                         ev.function_evals);
  if (j >= 0) {
    auto& b = pop.agents[static_cast<std::size_t>(j)];
    ev.step_j = local_step(f, b, eta, pop.momentum, effective_nu(pop, b.estimator, eta),
                           ev.function_evals);
  }
  return ev;
}

}  // namespace

std::pair<int, int> draw_uniform_pair(int n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("need at least two agents to draw a pair");
  std::uniform_int_distribution<int> first(0, n - 1);
  std::uniform_int_distribution<int> second(0, n - 2);
  const int i = first(rng);
  int j = second(rng);
  if (j >= i) ++j;
  return {std::min(i, j), std::max(i, j)};
}

std::vector<std::pair<int, int>> draw_matching(int n, Rng& rng, int* idle) {
  if (n < 2) throw std::invalid_argument("need at least two agents to draw a matching");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(n / 2));
  for (int k = 0; k + 1 < n; k += 2) {
    const int a = perm[static_cast<std::size_t>(k)];
    const int b = perm[static_cast<std::size_t>(k + 1)];
    pairs.emplace_back(std::min(a, b), std::max(a, b));
  }
  if (idle) *idle = n % 2 == 1 ? perm.back() : -1;
  return pairs;
}

InteractionEvent step_uniform_pair(Population& pop, const Schedule& schedule) {
  const auto [i, j] = draw_uniform_pair(pop.size(), pop.scheduler_rng);
  const double eta = eta_at(schedule, pop.steps);
  InteractionEvent ev;
  if (in_local_warmup(pop, schedule)) {
    ev = local_only(pop, i, j, eta);
  } else {
    ev = hdo_interact(pop, pop.agents[static_cast<std::size_t>(i)],
                      pop.agents[static_cast<std::size_t>(j)], eta);
    ev.i = i;
    ev.j = j;
  }
  pop.function_evals += ev.function_evals;
  ++pop.steps;
  ++pop.interactions;
  return ev;
}

std::vector<InteractionEvent> step_matching(Population& pop, const Schedule& schedule) {
  int idle = -1;
  const auto pairs = draw_matching(pop.size(), pop.scheduler_rng, &idle);
  const double eta = eta_at(schedule, pop.steps);
  const bool warmup = in_local_warmup(pop, schedule);
  std::vector<InteractionEvent> events;
  events.reserve(pairs.size() + 1);
  // The pairs are disjoint, so their order does not affect the outcome.
  for (const auto& [i, j] : pairs) {
    InteractionEvent ev;
    if (warmup) {
      ev = local_only(pop, i, j, eta);
    } else {
      ev = hdo_interact(pop, pop.agents[static_cast<std::size_t>(i)],
                        pop.agents[static_cast<std::size_t>(j)], eta);
      ev.i = i;
      ev.j = j;
    }
    pop.function_evals += ev.function_evals;
    events.push_back(std::move(ev));
  }
  if (warmup && idle >= 0) {
    auto ev = local_only(pop, idle, -1, eta);
    pop.function_evals += ev.function_evals;
    events.push_back(std::move(ev));
  }
  ++pop.steps;
  pop.interactions += static_cast<std::int64_t>(pairs.size());
  return events;
}

RunSummary run(Population& pop, const RunOptions& options, RunObserver* observer) {
  if (options.steps < 0) throw std::invalid_argument("run needs steps >= 0");
  if (options.cadence < 1) throw std::invalid_argument("metric cadence must be >= 1");
  if (pop.size() < 2) throw std::invalid_argument("population needs at least two agents");
  validate(options.schedule);

  auto checkpoint = [&] {
    if (observer) observer->on_checkpoint(pop, {pop.steps, eta_at(options.schedule, pop.steps)});
  };
  checkpoint();
  for (std::int64_t s = 0; s < options.steps; ++s) {
    if (options.scheduler == SchedulerMode::kUniformPair) {
      const auto ev = step_uniform_pair(pop, options.schedule);
      if (observer) observer->on_interaction(pop, ev);
    } else {
      const auto events = step_matching(pop, options.schedule);
      if (observer) {
        for (const auto& ev : events) observer->on_interaction(pop, ev);
      }
    }
    if ((s + 1) % options.cadence == 0 || s + 1 == options.steps) checkpoint();
  }
  return {pop.steps, pop.interactions, pop.function_evals};
}

}  // namespace hdo
