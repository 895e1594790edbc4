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

#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "hdo/metrics.hpp"
#include "hdo/protocol.hpp"
#include "hdo/theory_checks.hpp"
#include "test_support.hpp"

namespace hdo {
namespace {

// 1/2 (x - x*)^2 in d = 1 with x* moved to the origin by construction below.
ObjectivePtr unit_quadratic(Eigen::Index d) {
  return make_quadratic(d, 1.0, 1, {.samples = 2, .hessian_spread = 0.0, .gradient_noise = 0.0});
}

Population make_population(ObjectivePtr f, int n0, int n1, std::uint64_t seed, const Vector& x0,
                           double momentum = 0.0) {
  PopulationConfig pc;
  pc.n0 = n0;
  pc.n1 = n1;
  pc.zo_estimator = {EstimatorKind::kZoUnbiasedForward, 4, 1e-3, 2};
  pc.fo_estimator = {EstimatorKind::kFirstOrder, 1, 1e-3, 2};
  pc.momentum = momentum;
  pc.seed = seed;
  const auto partition = partition_data(f->num_samples(), n0, n1, seed);
  return init_population(pc, std::move(f), partition, x0);
}

Population noisy_population(int n0, int n1, std::uint64_t seed, double momentum = 0.0) {
  auto f = make_quadratic(4, 5.0, 3, {.samples = 64, .hessian_spread = 0.5, .gradient_noise = 0.5});
  return make_population(f, n0, n1, seed, Vector::Ones(4), momentum);
}

void spread_models(Population& pop, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& a : pop.agents) a.model += gaussian_vector(a.model.size(), rng);
}

double chi_square(const std::map<std::pair<int, int>, long>& counts, double expected) {
  double chi = 0.0;
  for (const auto& [k, c] : counts) chi += (c - expected) * (c - expected) / expected;
  return chi;
}

TEST(Schedule, ConstantIsEtaMax) {
  const Schedule s{ScheduleMode::kConstant, 0.3, 0.0, 0, 1};
  for (std::int64_t t : {0, 1, 17, 100000}) EXPECT_EQ(eta_at(s, t), 0.3);
}

TEST(Schedule, WarmupMidpointAndCosineEnd) {
  const Schedule s{ScheduleMode::kWarmupCosine, 0.2, 0.01, 100, 500};
  EXPECT_DOUBLE_EQ(eta_at(s, 0), 0.0);
  EXPECT_DOUBLE_EQ(eta_at(s, 50), 0.1);
  EXPECT_DOUBLE_EQ(eta_at(s, 100), 0.2);
  EXPECT_NEAR(eta_at(s, 499), 0.01, 1e-15);
  EXPECT_THROW(eta_at(s, -1), std::invalid_argument);
}

TEST(Schedule, StaysWithinBounds) {
  const Schedule s{ScheduleMode::kWarmupCosine, 0.5, 0.1, 37, 300};
  for (std::int64_t t = 0; t < 400; ++t) {
    const double e = eta_at(s, t);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 0.5);
    if (t >= 37) EXPECT_GE(e, 0.1 - 1e-15);
  }
}

TEST(Schedule, RejectsInvalid) {
  EXPECT_THROW(validate(Schedule{ScheduleMode::kConstant, -0.1, 0.0, 0, 1}), std::invalid_argument);
  EXPECT_THROW(validate(Schedule{ScheduleMode::kWarmupCosine, 0.1, 0.2, 0, 10}),
               std::invalid_argument);
  EXPECT_THROW(validate(Schedule{ScheduleMode::kWarmupCosine, 0.1, 0.0, 0, 0}),
               std::invalid_argument);
}

TEST(Init, AllAgentsStartTogether) {
  auto pop = noisy_population(3, 5, 1);
  EXPECT_EQ(pop.size(), 8);
  EXPECT_EQ(pop.n0(), 3);
  EXPECT_EQ(compute_gamma(pop), 0.0);
  for (int i = 0; i < pop.size(); ++i) {
    EXPECT_EQ(pop.agents[static_cast<std::size_t>(i)].zeroth_order(), i < 3);
  }
}

TEST(Init, BoundaryPopulationsAccepted) {
  EXPECT_EQ(noisy_population(0, 4, 1).n0(), 0);
  EXPECT_EQ(noisy_population(4, 0, 1).n0(), 4);
}

TEST(Init, RejectsMismatches) {
  auto f = make_quadratic(3, 2.0, 1);
  PopulationConfig pc;
  pc.n0 = 1;
  pc.n1 = 2;
  EXPECT_THROW(init_population(pc, f, partition_data(f->num_samples(), 2, 2, 1), Vector::Zero(3)),
               std::invalid_argument);
  EXPECT_THROW(init_population(pc, f, partition_data(f->num_samples(), 1, 2, 1), Vector::Zero(2)),
               std::invalid_argument);
  pc.n0 = 0;
  pc.n1 = 1;
  EXPECT_THROW(init_population(pc, f, partition_data(f->num_samples(), 0, 2, 1), Vector::Zero(3)),
               std::invalid_argument);
  pc.n1 = 2;
  pc.momentum = 1.0;
  EXPECT_THROW(init_population(pc, f, partition_data(f->num_samples(), 0, 2, 1), Vector::Zero(3)),
               std::invalid_argument);
}

TEST(Interact, StaysAtNoiselessOptimum) {
  auto f = make_quadratic(3, 4.0, 2);
  PopulationConfig pc;
  pc.n1 = 2;
  pc.fo_estimator.batch_size = 100000;
  const auto partition = partition_data(f->num_samples(), 0, 2, 1);
  auto pop = init_population(pc, f, partition, *f->x_star());
  // Full-batch on each shard: zero gradient since all samples vanish at x*.
  hdo_interact(pop, pop.agents[0], pop.agents[1], 0.1);
  EXPECT_LT((pop.agents[0].model - *f->x_star()).norm(), 1e-14);
  EXPECT_LT((pop.agents[1].model - *f->x_star()).norm(), 1e-14);
}

TEST(Interact, PureAveraging) {
  auto f = unit_quadratic(2);
  auto pop = make_population(f, 0, 2, 1, Vector::Zero(2));
  pop.agents[0].model = Vector{{2.0, 0.0}};
  const auto ev = hdo_interact(pop, pop.agents[0], pop.agents[1], 0.0);
  EXPECT_EQ(pop.agents[0].model, (Vector{{1.0, 0.0}}));
  EXPECT_EQ(pop.agents[1].model, (Vector{{1.0, 0.0}}));
  EXPECT_EQ(ev.function_evals, 0);
  EXPECT_EQ(pop.agents[0].interactions, 1);
  EXPECT_EQ(pop.agents[1].interactions, 1);
}

TEST(Interact, HandArithmeticOneDimension) {
  auto f = unit_quadratic(1);
  const Vector x0 = Vector::Constant(1, 2.0) + *f->x_star();
  PopulationConfig pc;
  pc.n1 = 2;
  pc.fo_estimator.batch_size = 2;
  auto pop = init_population(pc, f, partition_data(2, 0, 2, 1), x0);
  hdo_interact(pop, pop.agents[0], pop.agents[1], 0.1);
  EXPECT_NEAR(pop.agents[0].model(0) - (*f->x_star())(0), 1.8, 1e-12);
  EXPECT_NEAR(pop.agents[1].model(0) - (*f->x_star())(0), 1.8, 1e-12);
}

TEST(Interact, DimensionMismatchRejected) {
  auto pop = noisy_population(0, 2, 1);
  pop.agents[1].model = Vector::Zero(3);
  EXPECT_THROW(hdo_interact(pop, pop.agents[0], pop.agents[1], 0.1), std::invalid_argument);
}

// mu_{t+1} = mu_t - (eta/n)(G_i + G_j), for every interaction of a hybrid run.
TEST(Interact, MeanUpdateIdentityProperty) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto pop = noisy_population(3, 3, seed, seed == 3 ? 0.5 : 0.0);
    spread_models(pop, seed);
    const Schedule schedule{ScheduleMode::kConstant, 0.05, 0.0, 0, 1};
    for (int t = 0; t < 200; ++t) {
      const Vector before = compute_mu(pop);
      const auto ev = step_uniform_pair(pop, schedule);
      const Vector expected = before - (0.05 / pop.size()) * (ev.step_i + ev.step_j);
      ASSERT_LT((compute_mu(pop) - expected).norm(), 1e-12);
    }
  }
}

// The averaging half of an interaction never raises Gamma.
TEST(Interact, AveragingDoesNotIncreaseGammaProperty) {
  auto pop = noisy_population(2, 4, 5);
  spread_models(pop, 5);
  Rng pairs(6);
  for (int t = 0; t < 300; ++t) {
    const auto [i, j] = draw_uniform_pair(pop.size(), pairs);
    auto& a = pop.agents[static_cast<std::size_t>(i)];
    auto& b = pop.agents[static_cast<std::size_t>(j)];
    std::int64_t evals = 0;
    local_step(*pop.objective, a, 0.1, 0.0, 1e-3, evals);
    local_step(*pop.objective, b, 0.1, 0.0, 1e-3, evals);
    const double after_steps = compute_gamma(pop);
    const Vector avg = 0.5 * (a.model + b.model);
    a.model = avg;
    b.model = avg;
    ASSERT_LE(compute_gamma(pop), after_steps + 1e-12);
  }
}

TEST(Interact, ZeroMomentumIsRawEstimate) {
  auto with = noisy_population(2, 2, 9, 0.0);
  auto raw = noisy_population(2, 2, 9, 0.0);
  const Schedule schedule{ScheduleMode::kConstant, 0.05, 0.0, 0, 1};
  for (int t = 0; t < 50; ++t) step_uniform_pair(with, schedule);
  // Replays the run by hand with plain estimates.
  for (int t = 0; t < 50; ++t) {
    const auto [i, j] = draw_uniform_pair(raw.size(), raw.scheduler_rng);
    auto& a = raw.agents[static_cast<std::size_t>(i)];
    auto& b = raw.agents[static_cast<std::size_t>(j)];
    const Vector ga = estimate(*raw.objective, a.shard, a.model, a.estimator, a.rng, a.direction_rng).vector;
    const Vector gb = estimate(*raw.objective, b.shard, b.model, b.estimator, b.rng, b.direction_rng).vector;
    const Vector avg = 0.5 * ((a.model - 0.05 * ga) + (b.model - 0.05 * gb));
    a.model = avg;
    b.model = avg;
  }
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(with.agents[static_cast<std::size_t>(i)].model, raw.agents[static_cast<std::size_t>(i)].model);
  }
}

TEST(Interact, MomentumBuffersPersistAndAreNotAveraged) {
  auto pop = noisy_population(0, 2, 4, 0.9);
  hdo_interact(pop, pop.agents[0], pop.agents[1], 0.1);
  EXPECT_GT(pop.agents[0].momentum_buffer.norm(), 0.0);
  EXPECT_NE(pop.agents[0].momentum_buffer, pop.agents[1].momentum_buffer);
}

TEST(UniformPair, TwoAgentsAlwaysPair) {
  Rng rng(1);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(draw_uniform_pair(2, rng), (std::pair{0, 1}));
  auto pop = noisy_population(1, 1, 2);
  const Schedule schedule;
  step_uniform_pair(pop, schedule);
  EXPECT_EQ(pop.interactions, 1);
  EXPECT_DOUBLE_EQ(pop.parallel_time(), 0.5);
}

TEST(UniformPair, FrequenciesPassChiSquare) {
  const int n = 5;
  const long draws = 1000000;
  Rng rng(3);
  std::map<std::pair<int, int>, long> counts;
  for (long k = 0; k < draws; ++k) ++counts[draw_uniform_pair(n, rng)];
  ASSERT_EQ(counts.size(), 10u);
  // 9 degrees of freedom, alpha = 0.01.
  EXPECT_LT(chi_square(counts, draws / 10.0), 21.666);
}

TEST(UniformPair, DeterministicGivenSeed) {
  auto a = noisy_population(2, 3, 7);
  auto b = noisy_population(2, 3, 7);
  const Schedule schedule{ScheduleMode::kConstant, 0.05, 0.0, 0, 1};
  for (int t = 0; t < 40; ++t) {
    step_uniform_pair(a, schedule);
    step_uniform_pair(b, schedule);
  }
  for (std::size_t i = 0; i < a.agents.size(); ++i) EXPECT_EQ(a.agents[i].model, b.agents[i].model);
}

TEST(Matching, TwoAgentsMatchesUniformPair) {
  auto a = noisy_population(1, 1, 3);
  auto b = noisy_population(1, 1, 3);
  const Schedule schedule{ScheduleMode::kConstant, 0.05, 0.0, 0, 1};
  step_matching(a, schedule);
  step_uniform_pair(b, schedule);
  EXPECT_EQ(a.agents[0].model, b.agents[0].model);
  EXPECT_EQ(a.interactions, 1);
}

TEST(Matching, FourAgentsMatchingsUniform) {
  Rng rng(4);
  const long draws = 100000;
  std::map<std::pair<int, int>, long> counts;  // keyed by agent 0's partner
  for (long k = 0; k < draws; ++k) {
    for (const auto& [i, j] : draw_matching(4, rng)) {
      if (i == 0) ++counts[{0, j}];
    }
  }
  ASSERT_EQ(counts.size(), 3u);
  // 2 degrees of freedom, alpha = 0.01.
  EXPECT_LT(chi_square(counts, draws / 3.0), 9.210);
}

TEST(Matching, OddPopulationIdlesOneUniformly) {
  Rng rng(5);
  const long draws = 100000;
  std::map<std::pair<int, int>, long> counts;
  for (long k = 0; k < draws; ++k) {
    int idle = -1;
    const auto pairs = draw_matching(5, rng, &idle);
    ASSERT_EQ(pairs.size(), 2u);
    std::set<int> seen{idle};
    for (const auto& [i, j] : pairs) {
      seen.insert(i);
      seen.insert(j);
    }
    ASSERT_EQ(seen.size(), 5u);
    ++counts[{idle, idle}];
  }
  EXPECT_LT(chi_square(counts, draws / 5.0), 13.277);  // 4 dof
}

TEST(Matching, IdleAgentUnchanged) {
  auto pop = noisy_population(2, 3, 8);
  spread_models(pop, 8);
  const Schedule schedule{ScheduleMode::kConstant, 0.05, 0.0, 0, 1};
  for (int t = 0; t < 20; ++t) {
    Rng peek = pop.scheduler_rng;
    int idle = -1;
    draw_matching(pop.size(), peek, &idle);
    const auto before = pop.agents[static_cast<std::size_t>(idle)];
    step_matching(pop, schedule);
    const auto& after = pop.agents[static_cast<std::size_t>(idle)];
    EXPECT_EQ(after.model, before.model);
    EXPECT_EQ(after.interactions, before.interactions);
  }
  EXPECT_EQ(pop.interactions, 40);
}

TEST(Warmup, LocalOnlyDuringWarmup) {
  auto pop = noisy_population(0, 4, 2);
  const Schedule schedule{ScheduleMode::kWarmupCosine, 0.1, 0.0, 3, 10};
  step_matching(pop, schedule);  // eta 0 at step 0
  const auto events = step_matching(pop, schedule);
  for (const auto& ev : events) EXPECT_FALSE(ev.averaged);
  EXPECT_GT(compute_gamma(pop), 0.0);
  pop.steps = 3;
  for (const auto& ev : step_matching(pop, schedule)) EXPECT_TRUE(ev.averaged);
}

TEST(Run, ZeroStepsRecordsInitialOnly) {
  auto pop = noisy_population(1, 2, 1);
  const auto result = run_with_metrics(pop, {.steps = 0, .cadence = 10}, {});
  ASSERT_EQ(result.series.size(), 1u);
  EXPECT_EQ(result.series[0].step, 0);
  EXPECT_EQ(result.summary.interactions, 0);
}

TEST(Run, CheckpointCadence) {
  auto pop = noisy_population(1, 3, 1);
  const auto result = run_with_metrics(
      pop, {.steps = 25, .cadence = 10, .scheduler = SchedulerMode::kRandomMatching}, {});
  std::vector<std::int64_t> steps;
  for (const auto& r : result.series) steps.push_back(r.step);
  EXPECT_EQ(steps, (std::vector<std::int64_t>{0, 10, 20, 25}));
  EXPECT_EQ(result.summary.interactions, 50);
}

TEST(Run, PureAveragingKeepsMeanAndContracts) {
  auto pop = noisy_population(2, 4, 3);
  spread_models(pop, 3);
  const Vector mu0 = compute_mu(pop);
  RunOptions options{.steps = 60, .cadence = 1, .scheduler = SchedulerMode::kRandomMatching};
  options.schedule.eta_max = 0.0;
  const auto result = run_with_metrics(pop, options, {});
  EXPECT_LT((compute_mu(pop) - mu0).norm(), 1e-12);
  for (std::size_t k = 1; k < result.series.size(); ++k) {
    EXPECT_LE(result.series[k].gamma, result.series[k - 1].gamma + 1e-15);
  }
  EXPECT_LT(result.series.back().gamma, 1e-6 * result.series.front().gamma);
  EXPECT_EQ(result.summary.function_evals, 0);
}

TEST(Run, SameSeedBitIdentical) {
  auto a = noisy_population(2, 2, 11);
  auto b = noisy_population(2, 2, 11);
  RunOptions options{.steps = 100, .cadence = 7, .scheduler = SchedulerMode::kRandomMatching};
  options.schedule.eta_max = 0.05;
  const auto ra = run_with_metrics(a, options, {});
  const auto rb = run_with_metrics(b, options, {});
  ASSERT_EQ(ra.series.size(), rb.series.size());
  for (std::size_t k = 0; k < ra.series.size(); ++k) {
    EXPECT_EQ(ra.series[k].gamma, rb.series[k].gamma);
    EXPECT_EQ(ra.series[k].mu_loss_gap, rb.series[k].mu_loss_gap);
  }
}

TEST(Run, InteractionCountersMonotone) {
  auto pop = noisy_population(2, 3, 12);
  const Schedule schedule{ScheduleMode::kConstant, 0.05, 0.0, 0, 1};
  std::vector<std::int64_t> last(5, 0);
  for (int t = 0; t < 100; ++t) {
    step_uniform_pair(pop, schedule);
    for (std::size_t i = 0; i < 5; ++i) {
      ASSERT_GE(pop.agents[i].interactions, last[i]);
      ASSERT_EQ(pop.agents[i].model.size(), 4);
      last[i] = pop.agents[i].interactions;
    }
  }
}

// E[Gamma_{t+1}] = Gamma_t (n-2)/(n-1) for pure averaging, by enumeration.
TEST(Gamma, PureAveragingContractionExact) {
  for (int n : {3, 4, 5}) {
    auto pop = noisy_population(1, n - 1, static_cast<std::uint64_t>(n));
    spread_models(pop, static_cast<std::uint64_t>(n));
    const double g = compute_gamma(pop);
    EXPECT_NEAR(exact_gamma_after_averaging(pop), g * (n - 2) / (n - 1), 1e-12 * g);
  }
}

TEST(SchedulerNames, RoundTrip) {
  for (auto m : {SchedulerMode::kUniformPair, SchedulerMode::kRandomMatching}) {
    EXPECT_EQ(scheduler_mode_from_string(to_string(m)), m);
  }
  EXPECT_THROW(scheduler_mode_from_string("ring"), std::invalid_argument);
}

}  // namespace
}  // namespace hdo
