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
#include <string>
#include <vector>

#include "hdo/common.hpp"
#include "hdo/objectives.hpp"
#include "hdo/protocol.hpp"

namespace hdo {

/// Outcome of comparing a measured quantity against an analytic upper bound.
/// pass == (measured <= bound + 3 * stderr). Checks over several probe points
/// report the probe with the least slack.
struct BoundCheckReport {
  std::string name;
  double measured = 0.0;
  double bound = 0.0;
  double stderr_ = 0.0;
  std::int64_t samples = 0;
  std::uint64_t seed = 0;
  bool pass = false;

  double slack() const { return bound + 3.0 * stderr_ - measured; }
};

BoundCheckReport make_report(std::string name, double measured, double bound, double stderr_,
                             std::int64_t samples, std::uint64_t seed);

/// Folds per-probe reports into one: pass iff all pass; the values shown are
/// those of the tightest probe.
BoundCheckReport worst_of(std::string name, const std::vector<BoundCheckReport>& probes);

/// Probe points: x* + N(0, I) when x* is known, else N(0, I).
std::vector<Vector> draw_probes(const Objective& f, int count, std::uint64_t seed);

struct MonteCarloOptions {
  std::int64_t samples = 1'000'000;
  std::uint64_t seed = 1;
};

/// |f_nu(x) - f(x)| <= (nu^2 / 2) L d. Quadratics use the exact gap
/// nu^2 tr(A) / 2; other objectives average antithetic pairs
/// (f(x + nu u) + f(x - nu u)) / 2 - f(x).
BoundCheckReport check_smoothing_value_gap(const Objective& f, double nu,
                                           const std::vector<Vector>& probes,
                                           const MonteCarloOptions& mc = {});

/// ||grad f_nu(x) - grad f(x)|| <= (nu / 2) L (d + 3)^{3/2}. Quadratics have
/// zero bias; otherwise grad f_nu is estimated by the central-difference
/// identity E[(f(x + nu u) - f(x - nu u)) / (2 nu) u].
BoundCheckReport check_smoothing_grad_bias(const Objective& f, double nu,
                                           const std::vector<Vector>& probes,
                                           const MonteCarloOptions& mc = {});

struct SmoothingReports {
  BoundCheckReport value_gap;
  BoundCheckReport grad_bias;
};

/// Both smoothing checks from one pass: `mc.samples` antithetic pairs per
/// probe feed the value gap and the gradient estimate alike. Each report is
/// identical to the one its standalone function returns.
SmoothingReports check_smoothing_bounds(const Objective& f, double nu,
                                        const std::vector<Vector>& probes,
                                        const MonteCarloOptions& mc = {});

/// E||G_nu||^2 <= nu^2 L^2 (d+6)^3 / 2 + 2 (d+4) E||grad F(x, xi)||^2 for the
/// single-direction one-sided estimator on one-sample batches drawn from
/// `shard`. The last expectation is computed exactly over the shard, which
/// equals ||grad f_i(x)||^2 + s_i^2.
BoundCheckReport check_zo_second_moment(const Objective& f, std::span<const std::size_t> shard,
                                        double nu, const Vector& x,
                                        const MonteCarloOptions& mc = {});

/// E||G_nu - grad f_i(x)||^2 <= 3 nu^2 L^2 (d+6)^3 / 2 + 4 (d+4) E||grad F||^2.
BoundCheckReport check_zo_variance_bound(const Objective& f, std::span<const std::size_t> shard,
                                         double nu, const Vector& x,
                                         const MonteCarloOptions& mc = {});

/// Average estimator bias B = (1/n) sum_i ||grad f_i(X_i) - E G_i(X_i)|| against
/// eta n_b L (d+3)^{3/2} / (2 c n), where n_b counts agents with biased
/// estimators and nu = eta / c. E G_i is a Monte-Carlo mean of `mc.samples`
/// estimates per agent.
BoundCheckReport check_bias_aggregate(const Population& pop, double eta,
                                      const MonteCarloOptions& mc = {});

/// Exact E[Gamma_{t+1}] after one pure-averaging uniform-pair step, by
/// enumerating every pair.
double exact_gamma_after_averaging(const Population& pop);

/// E[Gamma_{t+1}] <= (1 - 1/(2n)) Gamma_t + (4/n) eta^2 E[M_t^G] over
/// `replicas` independent one-step continuations of a frozen population.
/// With eta == 0 the expectation is computed exactly by enumeration; otherwise
/// at least 1000 replicas are required. Momentum must be 0.
BoundCheckReport check_gamma_recursion(const Population& snapshot, double eta, int replicas,
                                       std::uint64_t seed);

/// ||E G(x) - grad f_shard(x)|| for any estimator, with E G(x) a Monte-Carlo
/// mean over `mc.samples` draws; bound 0, so pass means the deviation is
/// within 3 standard errors. Biased kinds use cfg.nu as given.
BoundCheckReport check_estimator_unbiasedness(const Objective& f, std::span<const std::size_t> shard,
                                              const EstimatorConfig& cfg, const Vector& x,
                                              const MonteCarloOptions& mc = {});

struct VarianceEstimate {
  double value = 0.0;   // E||G - E G||^2
  double stderr_ = 0.0;
  std::int64_t samples = 0;
};

/// Monte-Carlo trace variance of an estimator at a fixed point.
VarianceEstimate measure_estimator_variance(const Objective& f, std::span<const std::size_t> shard,
                                            const EstimatorConfig& cfg, const Vector& x,
                                            const MonteCarloOptions& mc);

/// Central finite differences (step 1e-6) against analytic gradients at
/// `points` random points; measured = worst relative error, bound = 1e-4.
BoundCheckReport check_gradcheck_all(const Objective& f, int points = 100,
                                     std::uint64_t seed = 1);

/// Finite-difference gradient of the full objective.
Vector finite_difference_gradient(const Objective& f, const Vector& x, double h = 1e-6);

void write_reports_json(std::ostream& out, const std::vector<BoundCheckReport>& reports);
std::vector<BoundCheckReport> read_reports_json(std::istream& in);
/// One "PASS name measured=... bound=..." line.
void print_report(std::ostream& out, const BoundCheckReport& report);
/// One line per report followed by a pass count.
void print_summary(std::ostream& out, const std::vector<BoundCheckReport>& reports);

}  // namespace hdo
