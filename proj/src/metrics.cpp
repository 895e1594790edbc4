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

#include "hdo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace hdo {

Vector compute_mu(const Population& pop) {
  if (pop.agents.empty()) throw std::invalid_argument("population is empty");
  Vector mu = Vector::Zero(pop.agents.front().model.size());
  for (const auto& a : pop.agents) mu += a.model;
  return mu / static_cast<double>(pop.agents.size());
}

double compute_gamma(const Population& pop) {
  const Vector mu = compute_mu(pop);
  double total = 0.0;
  for (const auto& a : pop.agents) total += (a.model - mu).squaredNorm();
  return total / static_cast<double>(pop.agents.size());
}

double compute_mtg(const Population& pop, double eta, Rng& rng) {
  if (pop.agents.empty()) throw std::invalid_argument("population is empty");
  double total = 0.0;
  for (const auto& a : pop.agents) {
    EstimatorConfig cfg = a.estimator;
    cfg.nu = effective_nu(pop, a.estimator, eta);
    total += estimate(*pop.objective, a.shard, a.model, cfg, rng).vector.squaredNorm();
  }
  return total / static_cast<double>(pop.agents.size());
}

double WeightedAverageState::weight() const { return std::exp(log_w); }
double WeightedAverageState::total() const { return std::exp(log_w) / rho; }

WeightedAverageState weighted_average_update(WeightedAverageState state, const Vector& mu_prev,
                                             double eta, double ell, int n) {
  if (!(ell > 0.0)) throw std::invalid_argument("weighted average needs ell > 0");
  if (n < 1) throw std::invalid_argument("weighted average needs n >= 1");
  if (eta < 0.0) throw std::invalid_argument("weighted average needs eta >= 0");
  const double q = 1.0 - eta * ell / (2.0 * n);
  if (!(q > 0.0)) throw std::invalid_argument("eta * ell / (2n) must be below 1");
  if (state.t == 0) {
    state.t = 1;
    state.log_w = -std::log(q);
    state.rho = 1.0;
    state.y = mu_prev;
    return state;
  }
  if (mu_prev.size() != state.y.size()) {
    throw std::invalid_argument("weighted average dimension mismatch");
  }
  ++state.t;
  state.log_w -= std::log(q);
  state.rho = state.rho / (q + state.rho);
  state.y += state.rho * (mu_prev - state.y);
  return state;
}

ValidationResult evaluate_validation(const Population& pop, const Objective& validation) {
  if (validation.num_samples() == 0) throw std::invalid_argument("validation set is empty");
  if (pop.agents.empty()) throw std::invalid_argument("population is empty");
  double loss = 0.0;
  double acc = 0.0;
  bool has_acc = true;
  for (const auto& a : pop.agents) {
    loss += validation.full_loss(a.model);
    const auto agent_acc = validation.accuracy(a.model);
    if (agent_acc) {
      acc += *agent_acc;
    } else {
      has_acc = false;
    }
  }
  const double n = static_cast<double>(pop.agents.size());
  ValidationResult out;
  out.mean_loss = loss / n;
  if (has_acc) out.mean_acc = acc / n;
  return out;
}

const std::vector<std::string> kAggregatedFields = {
    "eta",           "gamma",        "mu_loss_gap", "grad_norm_sq_mu",
    "mean_val_loss", "mean_val_acc", "mt_g",        "function_evals_total"};

namespace {

std::vector<std::optional<double>> field_values(const MetricsRecord& r) {
  return {r.eta,
          r.gamma,
          r.mu_loss_gap,
          r.grad_norm_sq_mu,
          r.mean_val_loss,
          r.mean_val_acc,
          r.mt_g,
          static_cast<double>(r.function_evals_total)};
}

void put(std::ostream& out, const std::optional<double>& v) {
  if (v) out << format_double(*v);
}

}  // namespace

std::vector<AggregateRecord> aggregate_seeds(const std::vector<MetricsSeries>& series) {
  if (series.empty()) throw std::invalid_argument("aggregate_seeds needs at least one series");
  const std::size_t len = series.front().size();
  for (const auto& s : series) {
    if (s.size() != len) throw std::invalid_argument("series have different lengths");
  }
  const std::size_t k = series.size();
  std::vector<AggregateRecord> out(len);
  for (std::size_t r = 0; r < len; ++r) {
    const auto& first = series.front()[r];
    for (const auto& s : series) {
      if (s[r].step != first.step) {
        throw std::invalid_argument("series steps are misaligned at record " + std::to_string(r));
      }
    }
    AggregateRecord& agg = out[r];
    agg.step = first.step;
    agg.parallel_time = first.parallel_time;
    agg.mean.resize(kAggregatedFields.size());
    agg.stderr_.resize(kAggregatedFields.size());
    for (std::size_t f = 0; f < kAggregatedFields.size(); ++f) {
      std::vector<double> values;
      values.reserve(k);
      for (const auto& s : series) {
        const auto v = field_values(s[r])[f];
        if (!v) break;
        values.push_back(*v);
      }
      if (values.size() != k) continue;
      // Sorting makes the result independent of the order of the seeds.
      std::sort(values.begin(), values.end());
      double sum = 0.0;
      for (double v : values) sum += v;
      const double mean = sum / static_cast<double>(k);
      double sq = 0.0;
      for (double v : values) sq += (v - mean) * (v - mean);
      agg.mean[f] = mean;
      agg.stderr_[f] = k > 1 ? std::sqrt(sq / static_cast<double>(k - 1)) /
                                   std::sqrt(static_cast<double>(k))
                             : 0.0;
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_metrics_csv(std::ostream& out, const MetricsSeries& series) {
  out << "step,parallel_time,eta,gamma,mu_loss_gap,grad_norm_sq_mu,mean_val_loss,"
         "mean_val_acc,mt_g,function_evals_total\n";
  for (const auto& r : series) {
    out << r.step << ',' << format_double(r.parallel_time) << ',' << format_double(r.eta) << ','
        << format_double(r.gamma) << ',';
    put(out, r.mu_loss_gap);
    out << ',' << format_double(r.grad_norm_sq_mu) << ',';
    put(out, r.mean_val_loss);
    out << ',';
    put(out, r.mean_val_acc);
    out << ',';
    put(out, r.mt_g);
    out << ',' << r.function_evals_total << '\n';
  }
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRecord>& records) {
  out << "step,parallel_time";
  for (const auto& name : kAggregatedFields) out << ',' << name << "_mean," << name << "_stderr";
  out << '\n';
  for (const auto& r : records) {
    out << r.step << ',' << format_double(r.parallel_time);
    for (std::size_t f = 0; f < kAggregatedFields.size(); ++f) {
      out << ',';
      put(out, r.mean[f]);
      out << ',';
      put(out, r.stderr_[f]);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

MetricsRecorder::MetricsRecorder(const Population& pop, MetricsOptions options)
    : options_(std::move(options)),
      rng_(derive_seed(options_.seed, 0, 0, StreamTag::kMetrics)),
      mu_(compute_mu(pop)) {
  if (!options_.validation) options_.validation = pop.objective;
  if (options_.track_weighted_average && !(pop.objective->ell() > 0.0)) {
    throw std::invalid_argument("weighted average tracking needs a strongly convex objective");
  }
}

void MetricsRecorder::on_interaction(const Population& pop, const InteractionEvent& event) {
  if (!options_.track_weighted_average) return;
  const int n = pop.size();
  weighted_ = weighted_average_update(weighted_.value_or(WeightedAverageState{}), mu_, event.eta,
                                      pop.objective->ell(), n);
  const double scale = event.eta / static_cast<double>(n);
  if (event.step_i.size() > 0) mu_.noalias() -= scale * event.step_i;
  if (event.step_j.size() > 0) mu_.noalias() -= scale * event.step_j;
}

void MetricsRecorder::on_checkpoint(const Population& pop, const StepInfo& info) {
  const Objective& f = *pop.objective;
  mu_ = compute_mu(pop);
  MetricsRecord r;
  r.step = info.step;
  r.parallel_time = pop.parallel_time();
  r.eta = info.eta;
  r.gamma = compute_gamma(pop);
  const double f_mu = f.full_loss(mu_);
  if (f.f_star()) r.mu_loss_gap = f_mu - *f.f_star();
  r.grad_norm_sq_mu = f.full_gradient(mu_).squaredNorm();
  const ValidationResult val = evaluate_validation(pop, *options_.validation);
  r.mean_val_loss = val.mean_loss;
  r.mean_val_acc = val.mean_acc;
  if (options_.sample_mtg) r.mt_g = compute_mtg(pop, info.eta, rng_);
  r.function_evals_total = pop.function_evals;
  series_.push_back(std::move(r));
}

RunResult run_with_metrics(Population& pop, const RunOptions& run_options,
                           const MetricsOptions& metrics_options) {
  MetricsRecorder recorder(pop, metrics_options);
  RunResult result;
  result.summary = run(pop, run_options, &recorder);
  result.series = recorder.series();
  if (recorder.weighted_average()) result.weighted_average = recorder.weighted_average()->y;
  return result;
}

}  // namespace hdo
