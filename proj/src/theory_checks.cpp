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

#include "hdo/theory_checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "hdo/metrics.hpp"

namespace hdo {
namespace {

// Running mean and variance (Welford).
class Moments {
 public:
  void add(double v) {
    ++n_;
    const double delta = v - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (v - mean_);
  }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stderr_() const { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }
  std::int64_t count() const { return n_; }

 private:
  std::int64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Mean of a vector-valued sample with the standard error of the mean taken
// as sqrt(trace(Cov) / N).
class VectorMoments {
 public:
  explicit VectorMoments(Eigen::Index d) : mean_(Vector::Zero(d)), m2_(Vector::Zero(d)) {}
  void add(const Vector& v) {
    ++n_;
    const Vector delta = v - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta.cwiseProduct(v - mean_);
  }
  const Vector& mean() const { return mean_; }
  double stderr_() const {
    if (n_ < 2) return 0.0;
    return std::sqrt(m2_.sum() / static_cast<double>(n_ - 1) / static_cast<double>(n_));
  }

 private:
  std::int64_t n_ = 0;
  Vector mean_;
  Vector m2_;
};

double pow15(double v) { return v * std::sqrt(v); }

constexpr std::int64_t kBlock = 128;

// Visits `pairs` antithetic draws x +- nu u in blocks so the losses come from
// one batched evaluation. Directions are drawn in the same order as a
// one-at-a-time loop would.
template <typename Visit>
void antithetic_pairs(const Objective& f, const Vector& x, double nu, std::int64_t pairs, Rng& rng,
                      Visit&& visit) {
  const Eigen::Index d = f.dim();
  Matrix dirs(d, kBlock);
  Matrix points(d, 2 * kBlock);
  for (std::int64_t start = 0; start < pairs; start += kBlock) {
    const auto m = static_cast<Eigen::Index>(std::min(kBlock, pairs - start));
    for (Eigen::Index j = 0; j < m; ++j) {
      dirs.col(j) = gaussian_vector(d, rng);
      points.col(2 * j) = x + nu * dirs.col(j);
      points.col(2 * j + 1) = x - nu * dirs.col(j);
    }
    const Vector losses = f.full_losses(points.leftCols(2 * m));
    for (Eigen::Index j = 0; j < m; ++j) visit(dirs.col(j), losses(2 * j), losses(2 * j + 1));
  }
}

std::int64_t checked_samples(const MonteCarloOptions& mc) {
  if (mc.samples < 2) throw std::invalid_argument("Monte-Carlo checks need at least 2 samples");
  return mc.samples;
}

}  // namespace

BoundCheckReport make_report(std::string name, double measured, double bound, double stderr_,
                             std::int64_t samples, std::uint64_t seed) {
  BoundCheckReport r;
  r.name = std::move(name);
  r.measured = measured;
  r.bound = bound;
  r.stderr_ = stderr_;
  r.samples = samples;
  r.seed = seed;
  r.pass = measured <= bound + 3.0 * stderr_;
  return r;
}

BoundCheckReport worst_of(std::string name, const std::vector<BoundCheckReport>& probes) {
  if (probes.empty()) throw std::invalid_argument("worst_of needs at least one probe");
  const auto it = std::min_element(probes.begin(), probes.end(),
                                   [](const auto& a, const auto& b) { return a.slack() < b.slack(); });
  BoundCheckReport out = *it;
  out.name = std::move(name);
  out.samples = 0;
  for (const auto& p : probes) out.samples += p.samples;
  out.pass = std::all_of(probes.begin(), probes.end(), [](const auto& p) { return p.pass; });
  return out;
}

std::vector<Vector> draw_probes(const Objective& f, int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("need at least one probe");
  Rng rng(derive_seed(seed, 0, 0, StreamTag::kProbe));
  std::vector<Vector> probes;
  probes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Vector x = gaussian_vector(f.dim(), rng);
    if (f.x_star()) x += *f.x_star();
    probes.push_back(std::move(x));
  }
  return probes;
}

SmoothingReports check_smoothing_bounds(const Objective& f, double nu,
                                        const std::vector<Vector>& probes,
                                        const MonteCarloOptions& mc) {
  if (probes.empty()) throw std::invalid_argument("smoothing check needs probes");
  if (!(nu > 0.0)) throw std::invalid_argument("smoothing check needs nu > 0");
  const double d = static_cast<double>(f.dim());
  const double gap_bound = 0.5 * nu * nu * f.L() * d;
  const double bias_bound = 0.5 * nu * f.L() * pow15(d + 3.0);
  const std::string gap_name = "smoothing_value_gap";
  const std::string bias_name = "smoothing_grad_bias";

  if (const auto* quad = dynamic_cast<const QuadraticObjective*>(&f)) {
    // f_nu(x) = f(x) + nu^2 tr(A) / 2 for every x, so the gradients agree.
    const double gap = 0.5 * nu * nu * quad->hessian_trace();
    return {make_report(gap_name, gap, gap_bound, 0.0, 0, mc.seed),
            make_report(bias_name, 0.0, bias_bound, 0.0, 0, mc.seed)};
  }

  const std::int64_t pairs = checked_samples(mc);
  std::vector<BoundCheckReport> gaps;
  std::vector<BoundCheckReport> biases;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const Vector& x = probes[p];
    Rng rng(derive_seed(mc.seed, p, 0, StreamTag::kProbe));
    const double fx = f.full_loss(x);
    Moments gap;
    VectorMoments grad(f.dim());
    antithetic_pairs(f, x, nu, pairs, rng, [&](const auto& u, double up, double down) {
      gap.add(0.5 * (up + down) - fx);
      grad.add(((up - down) / (2.0 * nu)) * u);
    });
    gaps.push_back(
        make_report(gap_name, std::abs(gap.mean()), gap_bound, gap.stderr_(), 2 * pairs, mc.seed));
    const double bias = (grad.mean() - f.full_gradient(x)).norm();
    biases.push_back(make_report(bias_name, bias, bias_bound, grad.stderr_(), pairs, mc.seed));
  }
  return {worst_of(gap_name, gaps), worst_of(bias_name, biases)};
}

BoundCheckReport check_smoothing_value_gap(const Objective& f, double nu,
                                           const std::vector<Vector>& probes,
                                           const MonteCarloOptions& mc) {
  return check_smoothing_bounds(f, nu, probes, mc).value_gap;
}

BoundCheckReport check_smoothing_grad_bias(const Objective& f, double nu,
                                           const std::vector<Vector>& probes,
                                           const MonteCarloOptions& mc) {
  return check_smoothing_bounds(f, nu, probes, mc).grad_bias;
}

namespace {

struct ZoMomentSample {
  Moments second_moment;
  Moments centered;
  double grad_sq_mean = 0.0;  // E_xi ||grad F(x, xi)||^2, exact over the shard
};

ZoMomentSample sample_zo_moments(const Objective& f, std::span<const std::size_t> shard,
                                 double nu, const Vector& x, const MonteCarloOptions& mc) {
  if (shard.empty()) throw std::invalid_argument("agent shard is empty");
  if (!(nu > 0.0)) throw std::invalid_argument("zeroth-order moment check needs nu > 0");
  if (x.size() != f.dim()) throw std::invalid_argument("probe dimension mismatch");
  const std::int64_t samples = checked_samples(mc);

  ZoMomentSample out;
  std::vector<double> base(shard.size());
  for (std::size_t k = 0; k < shard.size(); ++k) {
    const std::size_t idx[1] = {shard[k]};
    out.grad_sq_mean += f.batch_gradient(x, idx).squaredNorm();
    base[k] = f.batch_loss(x, idx);
  }
  out.grad_sq_mean /= static_cast<double>(shard.size());
  const Vector local_grad = stochastic_gradient(f, x, shard);

  Rng rng(derive_seed(mc.seed, 0, 2, StreamTag::kProbe));
  std::uniform_int_distribution<std::size_t> pick(0, shard.size() - 1);
  Vector shifted(f.dim());
  for (std::int64_t s = 0; s < samples; ++s) {
    const std::size_t k = pick(rng);
    const std::size_t idx[1] = {shard[k]};
    const Vector u = gaussian_vector(f.dim(), rng);
    shifted = x + nu * u;
    const Vector g = ((f.batch_loss(shifted, idx) - base[k]) / nu) * u;
    out.second_moment.add(g.squaredNorm());
    out.centered.add((g - local_grad).squaredNorm());
  }
  return out;
}

}  // namespace

BoundCheckReport check_zo_second_moment(const Objective& f, std::span<const std::size_t> shard,
                                        double nu, const Vector& x, const MonteCarloOptions& mc) {
  const auto m = sample_zo_moments(f, shard, nu, x, mc);
  const double d = static_cast<double>(f.dim());
  const double L = f.L();
  const double bound =
      0.5 * nu * nu * L * L * std::pow(d + 6.0, 3) + 2.0 * (d + 4.0) * m.grad_sq_mean;
  return make_report("zo_second_moment", m.second_moment.mean(), bound, m.second_moment.stderr_(),
                     m.second_moment.count(), mc.seed);
}

BoundCheckReport check_zo_variance_bound(const Objective& f, std::span<const std::size_t> shard,
                                         double nu, const Vector& x, const MonteCarloOptions& mc) {
  const auto m = sample_zo_moments(f, shard, nu, x, mc);
  const double d = static_cast<double>(f.dim());
  const double L = f.L();
  const double bound =
      1.5 * nu * nu * L * L * std::pow(d + 6.0, 3) + 4.0 * (d + 4.0) * m.grad_sq_mean;
  return make_report("zo_variance", m.centered.mean(), bound, m.centered.stderr_(),
                     m.centered.count(), mc.seed);
}

BoundCheckReport check_bias_aggregate(const Population& pop, double eta,
                                      const MonteCarloOptions& mc) {
  if (pop.agents.empty()) throw std::invalid_argument("population is empty");
  const Objective& f = *pop.objective;
  const double n = static_cast<double>(pop.size());
  const double d = static_cast<double>(f.dim());
  const std::int64_t samples = checked_samples(mc);

  double measured = 0.0;
  double stderr_sum = 0.0;
  double bound = 0.0;
  std::int64_t total = 0;
  for (std::size_t i = 0; i < pop.agents.size(); ++i) {
    const AgentState& agent = pop.agents[i];
    if (!agent.zeroth_order()) continue;  // first-order estimators are unbiased
    EstimatorConfig cfg = agent.estimator;
    cfg.nu = effective_nu(pop, agent.estimator, eta);
    if (is_biased(cfg.kind)) bound += 0.5 * cfg.nu * f.L() * pow15(d + 3.0);

    Rng rng(derive_seed(mc.seed, i, 3, StreamTag::kProbe));
    VectorMoments mean(f.dim());
    for (std::int64_t s = 0; s < samples; ++s) {
      mean.add(estimate(f, agent.shard, agent.model, cfg, rng).vector);
    }
    const Vector local_grad = stochastic_gradient(f, agent.model, agent.shard);
    measured += (mean.mean() - local_grad).norm();
    // Each b_i is a norm of a noisy mean, so its noise floor is positive;
    // the per-agent errors are summed rather than added in quadrature.
    stderr_sum += mean.stderr_();
    total += samples;
  }
  return make_report("bias_aggregate", measured / n, bound / n, stderr_sum / n, total, mc.seed);
}

double exact_gamma_after_averaging(const Population& pop) {
  const int n = pop.size();
  if (n < 2) throw std::invalid_argument("need at least two agents");
  double total = 0.0;
  std::int64_t pairs = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      Population copy = pop;
      Vector avg = 0.5 * (copy.agents[static_cast<std::size_t>(i)].model +
                          copy.agents[static_cast<std::size_t>(j)].model);
      copy.agents[static_cast<std::size_t>(i)].model = avg;
      copy.agents[static_cast<std::size_t>(j)].model = avg;
      total += compute_gamma(copy);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

BoundCheckReport check_gamma_recursion(const Population& snapshot, double eta, int replicas,
                                       std::uint64_t seed) {
  if (snapshot.momentum != 0.0) {
    throw std::invalid_argument("gamma recursion check assumes momentum 0");
  }
  if (eta < 0.0) throw std::invalid_argument("eta must be >= 0");
  const double n = static_cast<double>(snapshot.size());
  const double gamma_t = compute_gamma(snapshot);
  const std::string name = "gamma_recursion";
  if (eta == 0.0) {
    const double expected = exact_gamma_after_averaging(snapshot);
    return make_report(name, expected, (1.0 - 1.0 / (2.0 * n)) * gamma_t, 0.0,
                       static_cast<std::int64_t>(n * (n - 1) / 2), seed);
  }
  if (replicas < 1000) throw std::invalid_argument("gamma recursion check needs replicas >= 1000");

  Schedule constant;
  constant.eta_max = eta;
  Moments next_gamma;
  Moments mtg;
  for (int r = 0; r < replicas; ++r) {
    Population copy = snapshot;
    copy.warmup_local_only = false;
    const auto rr = static_cast<std::uint64_t>(r);
    copy.scheduler_rng.seed(derive_seed(seed, rr, 0xffff, StreamTag::kReplica));
    for (std::size_t i = 0; i < copy.agents.size(); ++i) {
      copy.agents[i].rng.seed(derive_seed(seed, rr, i, StreamTag::kReplica));
    }
    Rng mtg_rng(derive_seed(seed, rr, 0xfffe, StreamTag::kReplica));
    mtg.add(compute_mtg(copy, eta, mtg_rng));
    step_uniform_pair(copy, constant);
    next_gamma.add(compute_gamma(copy));
  }
  const double coeff = 4.0 / n * eta * eta;
  const double bound = (1.0 - 1.0 / (2.0 * n)) * gamma_t + coeff * mtg.mean();
  const double se = std::sqrt(next_gamma.stderr_() * next_gamma.stderr_() +
                              coeff * coeff * mtg.stderr_() * mtg.stderr_());
  return make_report(name, next_gamma.mean(), bound, se, replicas, seed);
}

BoundCheckReport check_estimator_unbiasedness(const Objective& f, std::span<const std::size_t> shard,
                                              const EstimatorConfig& cfg, const Vector& x,
                                              const MonteCarloOptions& mc) {
  if (shard.empty()) throw std::invalid_argument("shard is empty");
  const std::int64_t samples = checked_samples(mc);
  Rng rng(derive_seed(mc.seed, 0, 4, StreamTag::kProbe));
  VectorMoments mean(f.dim());
  for (std::int64_t s = 0; s < samples; ++s) mean.add(estimate(f, shard, x, cfg, rng).vector);
  const double deviation = (mean.mean() - stochastic_gradient(f, x, shard)).norm();
  return make_report("estimator_unbiasedness[" + std::string(to_string(cfg.kind)) + "]",
                     deviation, 0.0, mean.stderr_(), samples, mc.seed);
}

VarianceEstimate measure_estimator_variance(const Objective& f, std::span<const std::size_t> shard,
                                            const EstimatorConfig& cfg, const Vector& x,
                                            const MonteCarloOptions& mc) {
  const std::int64_t samples = checked_samples(mc);
  Rng rng(derive_seed(mc.seed, 0, 5, StreamTag::kProbe));
  std::vector<Vector> draws;
  draws.reserve(static_cast<std::size_t>(samples));
  Vector mean = Vector::Zero(f.dim());
  for (std::int64_t s = 0; s < samples; ++s) {
    draws.push_back(estimate(f, shard, x, cfg, rng).vector);
    mean += draws.back();
  }
  mean /= static_cast<double>(samples);
  Moments dev;
  for (const auto& g : draws) dev.add((g - mean).squaredNorm());
  // Bessel correction for the estimated mean.
  const double scale = static_cast<double>(samples) / static_cast<double>(samples - 1);
  return {dev.mean() * scale, dev.stderr_() * scale, samples};
}

Vector finite_difference_gradient(const Objective& f, const Vector& x, double h) {
  Vector g(f.dim());
  Vector probe = x;
  for (Eigen::Index j = 0; j < f.dim(); ++j) {
    probe[j] = x[j] + h;
    const double up = f.full_loss(probe);
    probe[j] = x[j] - h;
    const double down = f.full_loss(probe);
    probe[j] = x[j];
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

BoundCheckReport check_gradcheck_all(const Objective& f, int points, std::uint64_t seed) {
  constexpr double kTolerance = 1e-4;
  double worst = 0.0;
  for (const Vector& x : draw_probes(f, points, seed)) {
    const Vector analytic = f.full_gradient(x);
    const Vector numeric = finite_difference_gradient(f, x);
    // Relative error with a 1e-3 floor on the gradient scale.
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-3});
    worst = std::max(worst, (analytic - numeric).norm() / scale);
  }
  return make_report("gradcheck_" + std::string(to_string(f.kind())), worst, kTolerance, 0.0,
                     points, seed);
}

void write_reports_json(std::ostream& out, const std::vector<BoundCheckReport>& reports) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : reports) {
    doc.push_back({{"name", r.name},
                   {"measured", r.measured},
                   {"bound", r.bound},
                   {"stderr", r.stderr_},
                   {"samples", r.samples},
                   {"seed", r.seed},
                   {"pass", r.pass}});
  }
  out << doc.dump(2) << '\n';
}

std::vector<BoundCheckReport> read_reports_json(std::istream& in) {
  const nlohmann::json doc = nlohmann::json::parse(in);
  std::vector<BoundCheckReport> reports;
  for (const auto& item : doc) {
    BoundCheckReport r;
    r.name = item.at("name").get<std::string>();
    r.measured = item.at("measured").get<double>();
    r.bound = item.at("bound").get<double>();
    r.stderr_ = item.at("stderr").get<double>();
    r.samples = item.at("samples").get<std::int64_t>();
    r.seed = item.at("seed").get<std::uint64_t>();
    r.pass = item.at("pass").get<bool>();
    reports.push_back(std::move(r));
  }
  return reports;
}

void print_report(std::ostream& out, const BoundCheckReport& r) {
  char line[320];
  std::snprintf(line, sizeof line, "%-4s %-48s measured=%-12.5g bound=%-12.5g stderr=%-10.3g n=%lld\n",
                r.pass ? "PASS" : "FAIL", r.name.c_str(), r.measured, r.bound, r.stderr_,
                static_cast<long long>(r.samples));
  out << line;
}

void print_summary(std::ostream& out, const std::vector<BoundCheckReport>& reports) {
  std::size_t passed = 0;
  for (const auto& r : reports) {
    print_report(out, r);
    if (r.pass) ++passed;
  }
  out << passed << "/" << reports.size() << " checks passed\n";
}

}  // namespace hdo
