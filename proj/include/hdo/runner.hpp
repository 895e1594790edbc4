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
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hdo/dataset.hpp"
#include "hdo/estimators.hpp"
#include "hdo/metrics.hpp"
#include "hdo/objectives.hpp"
#include "hdo/protocol.hpp"
#include "hdo/theory_checks.hpp"

namespace hdo {

/// Schema violation in an experiment config. `key()` is the dotted path of
/// the offending entry, e.g. "populations[1].eta".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what);
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct ObjectiveDescriptor {
  ObjectiveKind kind = ObjectiveKind::kLogisticL2;
  // quadratic
  Eigen::Index dim = 10;
  double cond = 10.0;
  std::uint64_t seed = 1;
  QuadraticOptions quadratic;
  // logistic_l2
  double lambda = 1e-3;
};

struct DatasetSource {
  enum class Kind { kSynthetic, kCsv };
  Kind kind = Kind::kSynthetic;
  SyntheticClassificationParams synthetic;
  std::size_t validation_samples = 1000;  // synthetic held-out set
  std::filesystem::path path;
  std::filesystem::path validation_path;  // optional for CSV sources
  CsvFormat csv;
};

struct PopulationSpec {
  std::string label;
  int n0 = 0;
  int n1 = 0;
  EstimatorConfig zo{EstimatorKind::kZoUnbiasedForward, 128, 1e-3, 2};
  EstimatorConfig fo{EstimatorKind::kFirstOrder, 1, 1e-3, 2};
  ScheduleMode schedule = ScheduleMode::kConstant;
  double eta = 0.01;
  double eta_min = 0.0;
  double momentum = 0.0;
};

enum class InitMode { kZero, kGaussian };

struct TheorySettings {
  std::uint64_t seed = 7;
  std::vector<ObjectiveKind> objectives{ObjectiveKind::kQuadratic, ObjectiveKind::kLogisticL2};
  std::vector<Eigen::Index> dims{5, 20};
  std::vector<double> nus{0.01, 0.1};
  int probes = 10;
  std::int64_t smoothing_samples = 1'000'000;
  std::int64_t moment_samples = 200'000;
  std::int64_t bias_samples = 20'000;
  int replicas = 2000;
  int snapshots = 20;
  int gamma_agents = 8;
  int gradcheck_points = 100;
  std::size_t logistic_samples = 32;
  double eta = 0.05;
  // Multiplies every smoothing radius in the suite: the nus above and the
  // coupled radius eta / sqrt(d) of the bias check.
  double nu_scale = 1.0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ObjectiveDescriptor objective;
  DatasetSource dataset;
  std::vector<PopulationSpec> populations;
  std::int64_t steps = 500;
  std::int64_t metric_cadence = 10;
  std::uint64_t master_seed = 1;
  int seeds = 10;
  SchedulerMode scheduler = SchedulerMode::kRandomMatching;
  std::int64_t warmup_steps = 0;
  PartitionMode partition = PartitionMode::kPerSubpopulation;
  InitMode init = InitMode::kZero;
  double init_scale = 1.0;
  std::optional<double> nu_c;
  bool couple_nu = true;
  // Populations of one seed share their random streams (paired comparison).
  bool common_random_numbers = true;
  bool sample_mtg = false;
  bool track_weighted_average = false;
  std::filesystem::path output_dir = "out";
  int threads = 1;
  TheorySettings theory;
};

/// Reads and validates a YAML config. Unknown keys are rejected.
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_string(std::string_view text);
void validate(const ExperimentConfig& cfg);

/// Serializes the config back to YAML; parse_config_string(to_yaml(c))
/// reproduces c.
std::string to_yaml(const ExperimentConfig& cfg);

/// Training and (optional) validation objectives built from the config.
struct ObjectivePair {
  ObjectivePtr train;
  ObjectivePtr validation;
};
ObjectivePair build_objectives(const ExperimentConfig& cfg);

/// Seed of the k-th replicate; shared by all populations so that they see the
/// same partition shuffle and initial point.
std::uint64_t cell_seed(const ExperimentConfig& cfg, int k);

/// Runs population `index` with the k-th seed.
RunResult run_cell(const ExperimentConfig& cfg, const ObjectivePair& objectives,
                   std::size_t index, int k);

struct ExperimentOutputs {
  std::map<std::string, std::vector<MetricsSeries>> series;  // by label, seed order
  std::map<std::string, std::vector<AggregateRecord>> aggregates;
  std::vector<std::filesystem::path> files;  // every CSV written
  std::filesystem::path manifest;
};

/// Runs every (population, seed) cell on `cfg.threads` workers and writes
///   <output_dir>/<label>/seed_<k>.csv, <output_dir>/<label>/aggregate.csv,
///   <output_dir>/manifest.json.
/// Throws std::runtime_error on I/O failure.
ExperimentOutputs run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// Small instances the theory checks run on: the quadratic has cond 10 and
/// gradient noise 0.5; logistic and non-convex objectives use
/// `logistic_samples` synthetic points (logistic with lambda 0.01).
ObjectivePtr make_theory_objective(ObjectiveKind kind, Eigen::Index d, const TheorySettings& t);

// The families of checks making up the suite.
std::vector<BoundCheckReport> theory_gradchecks(const TheorySettings& t);
/// Value gap and gradient bias for every (objective, d, nu).
std::vector<BoundCheckReport> theory_smoothing_checks(const TheorySettings& t);
/// Zeroth-order second moment and variance, worst probe per (objective, d, nu).
std::vector<BoundCheckReport> theory_moment_checks(const TheorySettings& t);
std::vector<BoundCheckReport> theory_bias_checks(const TheorySettings& t);
/// One recursion report per snapshot, then the exact pure-averaging cases.
std::vector<BoundCheckReport> theory_gamma_checks(const TheorySettings& t);

/// Runs the theory checks configured in cfg.theory, writes
/// <output_dir>/theory_report.json and returns the reports.
std::vector<BoundCheckReport> run_theory_suite(const ExperimentConfig& cfg,
                                               std::ostream* log = nullptr);

/// git's object id for a blob: SHA-1 of "blob <size>\0" + content, in hex.
std::string git_blob_sha1(std::string_view content);

}  // namespace hdo
