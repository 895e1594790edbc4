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

#include "hdo/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

namespace hdo {

ConfigError::ConfigError(std::string key, const std::string& what)
    : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}

namespace {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// YAML reading with unknown-key detection
// ---------------------------------------------------------------------------

class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(path_, "expected a mapping");
  }

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!has(key)) return fallback;
    return convert<T>(node_[key], key_path(key));
  }

  template <typename T>
  std::optional<T> maybe(const std::string& key) {
    used_.insert(key);
    if (!has(key)) return std::nullopt;
    return convert<T>(node_[key], key_path(key));
  }

  Section child(const std::string& key) {
    used_.insert(key);
    return Section(has(key) ? node_[key] : YAML::Node(), key_path(key));
  }

  std::vector<Section> list(const std::string& key) {
    used_.insert(key);
    std::vector<Section> out;
    if (!has(key)) return out;
    const YAML::Node seq = node_[key];
    if (!seq.IsSequence()) throw ConfigError(key_path(key), "expected a list");
    for (std::size_t i = 0; i < seq.size(); ++i) {
      out.emplace_back(seq[i], key_path(key) + "[" + std::to_string(i) + "]");
    }
    return out;
  }

  template <typename T>
  std::vector<T> values(const std::string& key, std::vector<T> fallback) {
    used_.insert(key);
    if (!has(key)) return fallback;
    const YAML::Node seq = node_[key];
    if (!seq.IsSequence()) throw ConfigError(key_path(key), "expected a list");
    std::vector<T> out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      out.push_back(convert<T>(seq[i], key_path(key) + "[" + std::to_string(i) + "]"));
    }
    return out;
  }

  // Rejects keys that were never read.
  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!used_.count(key)) throw ConfigError(key_path(key), "unknown key");
    }
  }

  const std::string& path() const { return path_; }

 private:
  template <typename T>
  static T convert(const YAML::Node& node, const std::string& path) {
    if (!node.IsScalar()) throw ConfigError(path, "expected a scalar value");
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(path, "cannot convert '" + node.Scalar() + "'");
    }
  }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
};

// Runs `parse` and rewraps std::invalid_argument from enum lookups as a
// ConfigError on `key`.
template <typename F>
auto keyed(const std::string& key, F&& parse) {
  try {
    return parse();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

std::string_view to_string(ScheduleMode mode) {
  return mode == ScheduleMode::kConstant ? "constant" : "warmup_cosine";
}
ScheduleMode schedule_mode_from_string(std::string_view name) {
  if (name == "constant") return ScheduleMode::kConstant;
  if (name == "warmup_cosine" || name == "cosine") return ScheduleMode::kWarmupCosine;
  throw std::invalid_argument("unknown schedule '" + std::string(name) + "'");
}

std::string_view to_string(PartitionMode mode) {
  return mode == PartitionMode::kPerSubpopulation ? "per_subpopulation" : "whole_population";
}
PartitionMode partition_mode_from_string(std::string_view name) {
  if (name == "per_subpopulation") return PartitionMode::kPerSubpopulation;
  if (name == "whole_population") return PartitionMode::kWholePopulation;
  throw std::invalid_argument("unknown partition mode '" + std::string(name) + "'");
}

std::string_view to_string(InitMode mode) { return mode == InitMode::kZero ? "zero" : "gaussian"; }
InitMode init_mode_from_string(std::string_view name) {
  if (name == "zero") return InitMode::kZero;
  if (name == "gaussian") return InitMode::kGaussian;
  throw std::invalid_argument("unknown init mode '" + std::string(name) + "'");
}

EstimatorConfig parse_estimator(Section s, EstimatorConfig fallback) {
  EstimatorConfig e = fallback;
  const auto kind = s.get<std::string>("kind", std::string(to_string(fallback.kind)));
  e.kind = keyed(s.key_path("kind"), [&] { return estimator_kind_from_string(kind); });
  e.rv = s.get("rv", e.rv);
  e.nu = s.get("nu", e.nu);
  e.batch_size = s.get("batch_size", e.batch_size);
  s.finish();
  return e;
}

void parse_objective(Section s, ObjectiveDescriptor& o) {
  const auto kind = s.get<std::string>("kind", std::string(to_string(o.kind)));
  o.kind = keyed(s.key_path("kind"), [&] { return objective_kind_from_string(kind); });
  o.dim = s.get<Eigen::Index>("dim", o.dim);
  o.cond = s.get("cond", o.cond);
  o.seed = s.get("seed", o.seed);
  o.quadratic.samples = s.get("samples", o.quadratic.samples);
  o.quadratic.hessian_spread = s.get("hessian_spread", o.quadratic.hessian_spread);
  o.quadratic.gradient_noise = s.get("gradient_noise", o.quadratic.gradient_noise);
  o.lambda = s.get("lambda", o.lambda);
  s.finish();
}

void parse_dataset(Section s, DatasetSource& d) {
  const auto source = s.get<std::string>("source", "synthetic");
  if (source == "synthetic") {
    d.kind = DatasetSource::Kind::kSynthetic;
  } else if (source == "csv") {
    d.kind = DatasetSource::Kind::kCsv;
  } else {
    throw ConfigError(s.key_path("source"), "expected 'synthetic' or 'csv'");
  }
  auto& p = d.synthetic;
  p.samples = s.get("samples", p.samples);
  p.dim = s.get<Eigen::Index>("dim", p.dim);
  p.feature_scale = s.get("feature_scale", p.feature_scale);
  p.signal = s.get("signal", p.signal);
  p.label_flip = s.get("label_flip", p.label_flip);
  p.seed = s.get("seed", p.seed);
  d.validation_samples = s.get("validation_samples", d.validation_samples);
  d.path = s.get<std::string>("path", d.path.string());
  d.validation_path = s.get<std::string>("validation_path", d.validation_path.string());
  d.csv.header = s.get("header", d.csv.header);
  const auto delim = s.get<std::string>("delimiter", std::string(1, d.csv.delimiter));
  if (delim.size() != 1) throw ConfigError(s.key_path("delimiter"), "expected one character");
  d.csv.delimiter = delim[0];
  s.finish();
}

PopulationSpec parse_population(Section s) {
  PopulationSpec p;
  p.label = s.get<std::string>("label", "");
  p.n0 = s.get("n0", p.n0);
  p.n1 = s.get("n1", p.n1);
  p.eta = s.get("eta", p.eta);
  p.eta_min = s.get("eta_min", p.eta_min);
  p.momentum = s.get("momentum", p.momentum);
  const auto schedule = s.get<std::string>("schedule", std::string(to_string(p.schedule)));
  p.schedule = keyed(s.key_path("schedule"), [&] { return schedule_mode_from_string(schedule); });
  if (s.has("zo")) p.zo = parse_estimator(s.child("zo"), p.zo);
  if (s.has("fo")) p.fo = parse_estimator(s.child("fo"), p.fo);
  s.finish();
  return p;
}

void parse_run(Section s, ExperimentConfig& c) {
  c.steps = s.get("steps", c.steps);
  c.metric_cadence = s.get("metric_cadence", c.metric_cadence);
  c.master_seed = s.get("master_seed", c.master_seed);
  c.seeds = s.get("seeds", c.seeds);
  const auto scheduler = s.get<std::string>("scheduler", std::string(to_string(c.scheduler)));
  c.scheduler = keyed(s.key_path("scheduler"), [&] { return scheduler_mode_from_string(scheduler); });
  c.warmup_steps = s.get("warmup_steps", c.warmup_steps);
  const auto partition = s.get<std::string>("partition", std::string(to_string(c.partition)));
  c.partition = keyed(s.key_path("partition"), [&] { return partition_mode_from_string(partition); });
  const auto init = s.get<std::string>("init", std::string(to_string(c.init)));
  c.init = keyed(s.key_path("init"), [&] { return init_mode_from_string(init); });
  c.init_scale = s.get("init_scale", c.init_scale);
  c.nu_c = s.maybe<double>("nu_c");
  c.couple_nu = s.get("couple_nu", c.couple_nu);
  c.common_random_numbers = s.get("common_random_numbers", c.common_random_numbers);
  c.sample_mtg = s.get("sample_mtg", c.sample_mtg);
  c.track_weighted_average = s.get("track_weighted_average", c.track_weighted_average);
  c.threads = s.get("threads", c.threads);
  s.finish();
}

void parse_theory(Section s, TheorySettings& t) {
  t.seed = s.get("seed", t.seed);
  std::vector<std::string> kinds;
  for (auto k : t.objectives) kinds.emplace_back(to_string(k));
  kinds = s.values<std::string>("objectives", kinds);
  t.objectives.clear();
  for (const auto& k : kinds) {
    t.objectives.push_back(keyed(s.key_path("objectives"), [&] { return objective_kind_from_string(k); }));
  }
  t.dims = s.values<Eigen::Index>("dims", t.dims);
  t.nus = s.values<double>("nus", t.nus);
  t.probes = s.get("probes", t.probes);
  t.smoothing_samples = s.get("smoothing_samples", t.smoothing_samples);
  t.moment_samples = s.get("moment_samples", t.moment_samples);
  t.bias_samples = s.get("bias_samples", t.bias_samples);
  t.replicas = s.get("replicas", t.replicas);
  t.snapshots = s.get("snapshots", t.snapshots);
  t.gamma_agents = s.get("gamma_agents", t.gamma_agents);
  t.gradcheck_points = s.get("gradcheck_points", t.gradcheck_points);
  t.logistic_samples = s.get("logistic_samples", t.logistic_samples);
  t.eta = s.get("eta", t.eta);
  t.nu_scale = s.get("nu_scale", t.nu_scale);
  s.finish();
}

bool valid_label(const std::string& label) {
  if (label.empty() || label == "." || label == "..") return false;
  return std::all_of(label.begin(), label.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.' ||
           ch == '+';
  });
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

ExperimentConfig parse_config_string(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError("", std::string("malformed config: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigError("", "config must be a mapping");
  Section top(root, "");
  ExperimentConfig c;
  c.name = top.get("name", c.name);
  parse_objective(top.child("objective"), c.objective);
  parse_dataset(top.child("dataset"), c.dataset);
  for (auto& p : top.list("populations")) c.populations.push_back(parse_population(p));
  parse_run(top.child("run"), c);
  c.output_dir = top.get<std::string>("output_dir", c.output_dir.string());
  parse_theory(top.child("theory"), c.theory);
  top.finish();
  validate(c);
  return c;
}

ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_string(buf.str());
}

void validate(const ExperimentConfig& c) {
  const auto& o = c.objective;
  if (o.kind == ObjectiveKind::kQuadratic) {
    require(o.dim >= 1, "objective.dim", "must be >= 1");
    require(o.cond >= 1.0, "objective.cond", "must be >= 1");
    require(o.quadratic.samples >= 1, "objective.samples", "must be >= 1");
    require(o.quadratic.hessian_spread >= 0.0 && o.quadratic.hessian_spread < 1.0,
            "objective.hessian_spread", "must lie in [0, 1)");
    require(o.quadratic.gradient_noise >= 0.0, "objective.gradient_noise", "must be >= 0");
  } else {
    if (o.kind == ObjectiveKind::kLogisticL2) require(o.lambda > 0.0, "objective.lambda", "must be > 0");
    const auto& d = c.dataset;
    if (d.kind == DatasetSource::Kind::kSynthetic) {
      require(d.synthetic.samples >= 1, "dataset.samples", "must be >= 1");
      require(d.synthetic.dim >= 1, "dataset.dim", "must be >= 1");
      require(d.synthetic.feature_scale > 0.0, "dataset.feature_scale", "must be > 0");
      require(d.synthetic.label_flip >= 0.0 && d.synthetic.label_flip <= 0.5, "dataset.label_flip",
              "must lie in [0, 0.5]");
    } else {
      require(!d.path.empty(), "dataset.path", "required for csv sources");
    }
  }

  std::set<std::string> labels;
  for (std::size_t i = 0; i < c.populations.size(); ++i) {
    const auto& p = c.populations[i];
    const std::string key = "populations[" + std::to_string(i) + "]";
    require(valid_label(p.label), key + ".label", "must be a non-empty file-name-safe string");
    require(labels.insert(p.label).second, key + ".label", "duplicate label '" + p.label + "'");
    require(p.n0 >= 0, key + ".n0", "must be >= 0");
    require(p.n1 >= 0, key + ".n1", "must be >= 0");
    require(p.n0 + p.n1 >= 2, key + ".n0", "n0 + n1 must be at least 2");
    require(p.eta >= 0.0, key + ".eta", "must be >= 0");
    require(p.eta_min >= 0.0 && p.eta_min <= p.eta, key + ".eta_min", "must lie in [0, eta]");
    require(p.momentum >= 0.0 && p.momentum < 1.0, key + ".momentum", "must lie in [0, 1)");
    keyed(key + ".zo", [&] { validate(p.zo); return 0; });
    keyed(key + ".fo", [&] { validate(p.fo); return 0; });
    require(is_zeroth_order(p.zo.kind), key + ".zo.kind", "must be a zeroth-order estimator");
    require(!is_zeroth_order(p.fo.kind), key + ".fo.kind", "must be first_order");
  }

  require(c.steps >= 1, "run.steps", "must be >= 1");
  require(c.metric_cadence >= 1, "run.metric_cadence", "must be >= 1");
  require(c.seeds >= 1, "run.seeds", "must be >= 1");
  require(c.threads >= 1, "run.threads", "must be >= 1");
  require(c.warmup_steps >= 0 && c.warmup_steps < c.steps, "run.warmup_steps",
          "must lie in [0, steps)");
  require(c.init_scale >= 0.0, "run.init_scale", "must be >= 0");
  if (c.nu_c) require(*c.nu_c > 0.0, "run.nu_c", "must be > 0");
  if (c.track_weighted_average) {
    require(c.objective.kind != ObjectiveKind::kSigmoidSquaredNonconvex,
            "run.track_weighted_average", "needs a strongly convex objective");
  }

  const auto& t = c.theory;
  require(!t.objectives.empty(), "theory.objectives", "must not be empty");
  require(!t.dims.empty(), "theory.dims", "must not be empty");
  for (auto d : t.dims) require(d >= 1, "theory.dims", "entries must be >= 1");
  require(!t.nus.empty(), "theory.nus", "must not be empty");
  for (double nu : t.nus) require(nu > 0.0, "theory.nus", "entries must be > 0");
  require(t.probes >= 1, "theory.probes", "must be >= 1");
  require(t.smoothing_samples >= 2, "theory.smoothing_samples", "must be >= 2");
  require(t.moment_samples >= 2, "theory.moment_samples", "must be >= 2");
  require(t.bias_samples >= 2, "theory.bias_samples", "must be >= 2");
  require(t.replicas >= 1000, "theory.replicas", "must be >= 1000");
  require(t.snapshots >= 1, "theory.snapshots", "must be >= 1");
  require(t.gamma_agents >= 3, "theory.gamma_agents", "must be >= 3");
  require(t.gradcheck_points >= 1, "theory.gradcheck_points", "must be >= 1");
  require(t.logistic_samples >= 4, "theory.logistic_samples", "must be >= 4");
  require(t.eta > 0.0, "theory.eta", "must be > 0");
  require(t.nu_scale > 0.0, "theory.nu_scale", "must be > 0");
}

std::string to_yaml(const ExperimentConfig& c) {
  YAML::Emitter y;
  y.SetDoublePrecision(17);
  auto estimator = [&](const char* key, const EstimatorConfig& e) {
    y << YAML::Key << key << YAML::Value << YAML::BeginMap;
    y << YAML::Key << "kind" << YAML::Value << std::string(to_string(e.kind));
    y << YAML::Key << "rv" << YAML::Value << e.rv;
    y << YAML::Key << "nu" << YAML::Value << e.nu;
    y << YAML::Key << "batch_size" << YAML::Value << e.batch_size;
    y << YAML::EndMap;
  };

  y << YAML::BeginMap;
  y << YAML::Key << "name" << YAML::Value << c.name;

  const auto& o = c.objective;
  y << YAML::Key << "objective" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "kind" << YAML::Value << std::string(to_string(o.kind));
  y << YAML::Key << "dim" << YAML::Value << o.dim;
  y << YAML::Key << "cond" << YAML::Value << o.cond;
  y << YAML::Key << "seed" << YAML::Value << o.seed;
  y << YAML::Key << "samples" << YAML::Value << o.quadratic.samples;
  y << YAML::Key << "hessian_spread" << YAML::Value << o.quadratic.hessian_spread;
  y << YAML::Key << "gradient_noise" << YAML::Value << o.quadratic.gradient_noise;
  y << YAML::Key << "lambda" << YAML::Value << o.lambda;
  y << YAML::EndMap;

  const auto& d = c.dataset;
  y << YAML::Key << "dataset" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "source" << YAML::Value
    << (d.kind == DatasetSource::Kind::kSynthetic ? "synthetic" : "csv");
  y << YAML::Key << "samples" << YAML::Value << d.synthetic.samples;
  y << YAML::Key << "dim" << YAML::Value << d.synthetic.dim;
  y << YAML::Key << "feature_scale" << YAML::Value << d.synthetic.feature_scale;
  y << YAML::Key << "signal" << YAML::Value << d.synthetic.signal;
  y << YAML::Key << "label_flip" << YAML::Value << d.synthetic.label_flip;
  y << YAML::Key << "seed" << YAML::Value << d.synthetic.seed;
  y << YAML::Key << "validation_samples" << YAML::Value << d.validation_samples;
  y << YAML::Key << "path" << YAML::Value << d.path.string();
  y << YAML::Key << "validation_path" << YAML::Value << d.validation_path.string();
  y << YAML::Key << "header" << YAML::Value << d.csv.header;
  y << YAML::Key << "delimiter" << YAML::Value << std::string(1, d.csv.delimiter);
  y << YAML::EndMap;

  y << YAML::Key << "populations" << YAML::Value << YAML::BeginSeq;
  for (const auto& p : c.populations) {
    y << YAML::BeginMap;
    y << YAML::Key << "label" << YAML::Value << p.label;
    y << YAML::Key << "n0" << YAML::Value << p.n0;
    y << YAML::Key << "n1" << YAML::Value << p.n1;
    y << YAML::Key << "eta" << YAML::Value << p.eta;
    y << YAML::Key << "eta_min" << YAML::Value << p.eta_min;
    y << YAML::Key << "momentum" << YAML::Value << p.momentum;
    y << YAML::Key << "schedule" << YAML::Value << std::string(to_string(p.schedule));
    estimator("zo", p.zo);
    estimator("fo", p.fo);
    y << YAML::EndMap;
  }
  y << YAML::EndSeq;

  y << YAML::Key << "run" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "steps" << YAML::Value << c.steps;
  y << YAML::Key << "metric_cadence" << YAML::Value << c.metric_cadence;
  y << YAML::Key << "master_seed" << YAML::Value << c.master_seed;
  y << YAML::Key << "seeds" << YAML::Value << c.seeds;
  y << YAML::Key << "scheduler" << YAML::Value << std::string(to_string(c.scheduler));
  y << YAML::Key << "warmup_steps" << YAML::Value << c.warmup_steps;
  y << YAML::Key << "partition" << YAML::Value << std::string(to_string(c.partition));
  y << YAML::Key << "init" << YAML::Value << std::string(to_string(c.init));
  y << YAML::Key << "init_scale" << YAML::Value << c.init_scale;
  if (c.nu_c) y << YAML::Key << "nu_c" << YAML::Value << *c.nu_c;
  y << YAML::Key << "couple_nu" << YAML::Value << c.couple_nu;
  y << YAML::Key << "common_random_numbers" << YAML::Value << c.common_random_numbers;
  y << YAML::Key << "sample_mtg" << YAML::Value << c.sample_mtg;
  y << YAML::Key << "track_weighted_average" << YAML::Value << c.track_weighted_average;
  y << YAML::Key << "threads" << YAML::Value << c.threads;
  y << YAML::EndMap;

  y << YAML::Key << "output_dir" << YAML::Value << c.output_dir.string();

  const auto& t = c.theory;
  y << YAML::Key << "theory" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "seed" << YAML::Value << t.seed;
  y << YAML::Key << "objectives" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto k : t.objectives) y << std::string(to_string(k));
  y << YAML::EndSeq;
  y << YAML::Key << "dims" << YAML::Value << YAML::Flow << t.dims;
  y << YAML::Key << "nus" << YAML::Value << YAML::Flow << t.nus;
  y << YAML::Key << "probes" << YAML::Value << t.probes;
  y << YAML::Key << "smoothing_samples" << YAML::Value << t.smoothing_samples;
  y << YAML::Key << "moment_samples" << YAML::Value << t.moment_samples;
  y << YAML::Key << "bias_samples" << YAML::Value << t.bias_samples;
  y << YAML::Key << "replicas" << YAML::Value << t.replicas;
  y << YAML::Key << "snapshots" << YAML::Value << t.snapshots;
  y << YAML::Key << "gamma_agents" << YAML::Value << t.gamma_agents;
  y << YAML::Key << "gradcheck_points" << YAML::Value << t.gradcheck_points;
  y << YAML::Key << "logistic_samples" << YAML::Value << t.logistic_samples;
  y << YAML::Key << "eta" << YAML::Value << t.eta;
  y << YAML::Key << "nu_scale" << YAML::Value << t.nu_scale;
  y << YAML::EndMap;

  y << YAML::EndMap;
  return std::string(y.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

ObjectivePair build_objectives(const ExperimentConfig& cfg) {
  const auto& o = cfg.objective;
  if (o.kind == ObjectiveKind::kQuadratic) {
    auto f = make_quadratic(o.dim, o.cond, o.seed, o.quadratic);
    return {f, f};
  }
  const auto& src = cfg.dataset;
  Dataset train;
  std::optional<Dataset> held_out;
  if (src.kind == DatasetSource::Kind::kSynthetic) {
    train = make_synthetic_classification(src.synthetic);
    if (src.validation_samples > 0) {
      auto p = src.synthetic;
      p.samples = src.validation_samples;
      p.sample_stream = 1;
      held_out = make_synthetic_classification(p);
    }
  } else {
    train = load_csv_dataset(src.path, src.csv);
    if (!src.validation_path.empty()) held_out = load_csv_dataset(src.validation_path, src.csv);
  }
  auto build = [&](Dataset d) {
    return o.kind == ObjectiveKind::kLogisticL2 ? make_logistic(std::move(d), o.lambda)
                                                : make_nonconvex(std::move(d));
  };
  ObjectivePair out;
  out.train = build(std::move(train));
  out.validation = held_out ? build(std::move(*held_out)) : out.train;
  return out;
}

std::uint64_t cell_seed(const ExperimentConfig& cfg, int k) {
  return derive_seed(cfg.master_seed, static_cast<std::uint64_t>(k), 0, StreamTag::kCell);
}

RunResult run_cell(const ExperimentConfig& cfg, const ObjectivePair& objectives,
                   std::size_t index, int k) {
  const PopulationSpec& spec = cfg.populations.at(index);
  const Objective& f = *objectives.train;
  const std::uint64_t seed = cell_seed(cfg, k);

  PopulationConfig pc;
  pc.n0 = spec.n0;
  pc.n1 = spec.n1;
  pc.zo_estimator = spec.zo;
  pc.fo_estimator = spec.fo;
  pc.schedule.mode = spec.schedule;
  pc.schedule.eta_max = spec.eta;
  pc.schedule.eta_min = spec.eta_min;
  pc.schedule.warmup_steps = cfg.warmup_steps;
  pc.schedule.total_steps = cfg.steps;
  pc.momentum = spec.momentum;
  pc.scheduler = cfg.scheduler;
  pc.steps = cfg.steps;
  pc.nu_c = cfg.nu_c;
  pc.couple_nu = cfg.couple_nu;
  // With common random numbers every population of a cell shares scheduler
  // and per-agent streams, so equal-sized populations are paired draws.
  pc.seed = cfg.common_random_numbers ? seed : derive_seed(seed, index, 0, StreamTag::kCell);

  const DataPartition partition =
      partition_data(f.num_samples(), spec.n0, spec.n1, seed, cfg.partition);
  Vector x0 = Vector::Zero(f.dim());
  if (cfg.init == InitMode::kGaussian) {
    Rng rng(derive_seed(seed, 0, 0, StreamTag::kInit));
    x0 = cfg.init_scale * gaussian_vector(f.dim(), rng);
  }
  Population pop = init_population(pc, objectives.train, partition, x0);

  RunOptions ro;
  ro.steps = cfg.steps;
  ro.cadence = cfg.metric_cadence;
  ro.scheduler = cfg.scheduler;
  ro.schedule = pc.schedule;
  MetricsOptions mo;
  mo.validation = objectives.validation;
  mo.sample_mtg = cfg.sample_mtg;
  mo.seed = derive_seed(seed, index, 0, StreamTag::kMetrics);
  mo.track_weighted_average = cfg.track_weighted_average;
  return run_with_metrics(pop, ro, mo);
}

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-1 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw std::runtime_error("cannot create directory '" + path.parent_path().string() + "'");
  std::ofstream out(path, std::ios::binary);
  out << content;
  out.close();
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ExperimentOutputs run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  validate(cfg);
  if (cfg.populations.empty()) throw ConfigError("populations", "no populations to run");
  const ObjectivePair objectives = build_objectives(cfg);

  struct Cell {
    std::size_t population;
    int k;
  };
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < cfg.populations.size(); ++p) {
    for (int k = 0; k < cfg.seeds; ++k) cells.push_back({p, k});
  }
  std::vector<MetricsSeries> results(cells.size());
  std::vector<std::string> csv(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;

  auto worker = [&] {
    for (std::size_t c = next++; c < cells.size(); c = next++) {
      try {
        const auto& cell = cells[c];
        results[c] = run_cell(cfg, objectives, cell.population, cell.k).series;
        std::ostringstream out;
        write_metrics_csv(out, results[c]);
        csv[c] = out.str();
        write_file(cfg.output_dir / cfg.populations[cell.population].label /
                       ("seed_" + std::to_string(cell.k) + ".csv"),
                   csv[c]);
        if (log) {
          std::lock_guard<std::mutex> lock(log_mutex);
          *log << "done " << cfg.populations[cell.population].label << " seed " << cell.k << '\n';
        }
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(cfg.threads, static_cast<int>(cells.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ExperimentOutputs out;
  std::vector<std::pair<std::string, std::string>> files;  // relative path, content
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& label = cfg.populations[cells[c].population].label;
    out.series[label].push_back(std::move(results[c]));
    const fs::path rel = fs::path(label) / ("seed_" + std::to_string(cells[c].k) + ".csv");
    files.emplace_back(rel.generic_string(), std::move(csv[c]));
    out.files.push_back(cfg.output_dir / rel);
  }
  for (const auto& spec : cfg.populations) {
    auto agg = aggregate_seeds(out.series[spec.label]);
    std::ostringstream text;
    write_aggregate_csv(text, agg);
    const fs::path rel = fs::path(spec.label) / "aggregate.csv";
    write_file(cfg.output_dir / rel, text.str());
    files.emplace_back(rel.generic_string(), text.str());
    out.files.push_back(cfg.output_dir / rel);
    out.aggregates[spec.label] = std::move(agg);
  }

  std::sort(files.begin(), files.end());
  nlohmann::json manifest;
  manifest["name"] = cfg.name;
  manifest["created_at"] = utc_timestamp();
  manifest["config"] = to_yaml(cfg);
  manifest["outputs"] = nlohmann::json::array();
  for (const auto& [path, content] : files) {
    manifest["outputs"].push_back(
        {{"path", path}, {"bytes", content.size()}, {"git_blob_sha1", git_blob_sha1(content)}});
  }
  out.manifest = cfg.output_dir / "manifest.json";
  write_file(out.manifest, manifest.dump(2) + "\n");
  if (log) *log << "wrote " << files.size() << " files and " << out.manifest.string() << '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Theory suite
// ---------------------------------------------------------------------------

namespace {

std::string tag(ObjectiveKind kind, Eigen::Index d, std::optional<double> nu = std::nullopt) {
  std::ostringstream s;
  s << '[' << to_string(kind) << ",d=" << d;
  if (nu) s << ",nu=" << *nu;
  s << ']';
  return s.str();
}

// Half zeroth-order (one-sided, biased), half first-order, all at x0.
Population theory_population(ObjectivePtr f, int n, const TheorySettings& t, const Vector& x0,
                             std::uint64_t seed) {
  PopulationConfig pc;
  pc.n0 = n / 2;
  pc.n1 = n - n / 2;
  pc.zo_estimator = {EstimatorKind::kZoBiasedOneSided, 4, 1e-3, 1};
  pc.fo_estimator = {EstimatorKind::kFirstOrder, 1, 1e-3, 1};
  pc.schedule.eta_max = t.eta;
  pc.nu_c = std::sqrt(static_cast<double>(f->dim())) / t.nu_scale;
  pc.seed = seed;
  const auto partition = partition_data(f->num_samples(), pc.n0, pc.n1, seed);
  return init_population(pc, std::move(f), partition, x0);
}

}  // namespace

ObjectivePtr make_theory_objective(ObjectiveKind kind, Eigen::Index d, const TheorySettings& t) {
  if (kind == ObjectiveKind::kQuadratic) {
    QuadraticOptions q;
    q.gradient_noise = 0.5;
    return make_quadratic(d, 10.0, t.seed, q);
  }
  SyntheticClassificationParams p;
  p.samples = t.logistic_samples;
  p.dim = d;
  p.seed = t.seed;
  Dataset data = make_synthetic_classification(p);
  return kind == ObjectiveKind::kLogisticL2 ? make_logistic(std::move(data), 0.01)
                                            : make_nonconvex(std::move(data));
}

std::vector<BoundCheckReport> theory_gradchecks(const TheorySettings& t) {
  const Eigen::Index d = *std::max_element(t.dims.begin(), t.dims.end());
  std::vector<BoundCheckReport> out;
  for (auto kind : {ObjectiveKind::kQuadratic, ObjectiveKind::kLogisticL2,
                    ObjectiveKind::kSigmoidSquaredNonconvex}) {
    out.push_back(check_gradcheck_all(*make_theory_objective(kind, d, t), t.gradcheck_points, t.seed));
  }
  return out;
}

std::vector<BoundCheckReport> theory_smoothing_checks(const TheorySettings& t) {
  std::vector<BoundCheckReport> out;
  for (auto kind : t.objectives) {
    for (auto d : t.dims) {
      const ObjectivePtr f = make_theory_objective(kind, d, t);
      const auto probes = draw_probes(*f, t.probes, t.seed);
      for (double base_nu : t.nus) {
        const double nu = base_nu * t.nu_scale;
        const MonteCarloOptions mc{t.smoothing_samples, t.seed};
        auto both = check_smoothing_bounds(*f, nu, probes, mc);
        for (auto* r : {&both.value_gap, &both.grad_bias}) {
          r->name += tag(kind, d, nu);
          out.push_back(std::move(*r));
        }
      }
    }
  }
  return out;
}

std::vector<BoundCheckReport> theory_moment_checks(const TheorySettings& t) {
  std::vector<BoundCheckReport> out;
  for (auto kind : t.objectives) {
    for (auto d : t.dims) {
      const ObjectivePtr f = make_theory_objective(kind, d, t);
      const auto probes = draw_probes(*f, t.probes, t.seed);
      // The shard of the first of four zeroth-order agents.
      const auto shard = partition_data(f->num_samples(), 4, 0, t.seed).zo_shards.front();
      for (double base_nu : t.nus) {
        const double nu = base_nu * t.nu_scale;
        std::vector<BoundCheckReport> second, variance;
        for (std::size_t p = 0; p < probes.size(); ++p) {
          const MonteCarloOptions mc{t.moment_samples, derive_seed(t.seed, p, 0, StreamTag::kProbe)};
          second.push_back(check_zo_second_moment(*f, shard, nu, probes[p], mc));
          variance.push_back(check_zo_variance_bound(*f, shard, nu, probes[p], mc));
        }
        out.push_back(worst_of("zo_second_moment" + tag(kind, d, nu), second));
        out.push_back(worst_of("zo_variance" + tag(kind, d, nu), variance));
      }
    }
  }
  return out;
}

std::vector<BoundCheckReport> theory_bias_checks(const TheorySettings& t) {
  std::vector<BoundCheckReport> out;
  for (auto kind : t.objectives) {
    for (auto d : t.dims) {
      const ObjectivePtr f = make_theory_objective(kind, d, t);
      const Vector x0 = draw_probes(*f, 1, t.seed).front();
      const Population pop = theory_population(
          f, t.gamma_agents, t, x0, derive_seed(t.seed, static_cast<std::uint64_t>(d), 1, StreamTag::kCell));
      out.push_back(check_bias_aggregate(pop, t.eta, {t.bias_samples, t.seed}));
      out.back().name += tag(kind, d);
    }
  }
  return out;
}

std::vector<BoundCheckReport> theory_gamma_checks(const TheorySettings& t) {
  std::vector<BoundCheckReport> out;
  // Snapshots along one hybrid quadratic trajectory, started with spread-out
  // models so that the variance potential is not zero.
  const ObjectivePtr f = make_theory_objective(ObjectiveKind::kQuadratic, 10, t);
  Rng rng(derive_seed(t.seed, 0, 0, StreamTag::kInit));
  Population pop = theory_population(f, t.gamma_agents, t, *f->x_star(),
                                     derive_seed(t.seed, 0, 2, StreamTag::kCell));
  for (auto& a : pop.agents) a.model += 2.0 * gaussian_vector(f->dim(), rng);
  Schedule constant;
  constant.eta_max = t.eta;
  for (int s = 0; s < t.snapshots; ++s) {
    for (int k = 0; k < 5; ++k) step_uniform_pair(pop, constant);
    out.push_back(check_gamma_recursion(
        pop, t.eta, t.replicas, derive_seed(t.seed, static_cast<std::uint64_t>(s), 3, StreamTag::kReplica)));
    out.back().name += "[quadratic,n=" + std::to_string(t.gamma_agents) + ",snapshot=" +
                       std::to_string(s) + "]";
  }

  // Pure averaging: E[Gamma_{t+1}] = Gamma_t (n-2)/(n-1) exactly.
  for (int n : {3, 4, 5}) {
    const ObjectivePtr g = make_theory_objective(ObjectiveKind::kQuadratic, 5, t);
    Rng init(derive_seed(t.seed, static_cast<std::uint64_t>(n), 0, StreamTag::kInit));
    Population p = theory_population(g, n, t, Vector::Zero(5), t.seed);
    for (auto& a : p.agents) a.model = gaussian_vector(5, init);
    const double gamma = compute_gamma(p);
    const double target = gamma * (n - 2) / (n - 1);
    out.push_back(make_report("gamma_pure_averaging[n=" + std::to_string(n) + "]",
                              std::abs(exact_gamma_after_averaging(p) - target),
                              1e-12 * std::max(1.0, gamma), 0.0,
                              static_cast<std::int64_t>(n * (n - 1) / 2), t.seed));
  }
  return out;
}

std::vector<BoundCheckReport> run_theory_suite(const ExperimentConfig& cfg, std::ostream* log) {
  validate(cfg);
  const TheorySettings& t = cfg.theory;
  std::vector<BoundCheckReport> reports;
  for (auto part : {theory_gradchecks, theory_smoothing_checks, theory_moment_checks,
                    theory_bias_checks, theory_gamma_checks}) {
    for (auto& r : part(t)) {
      if (log) print_report(*log, r);
      reports.push_back(std::move(r));
    }
  }
  std::ostringstream json;
  write_reports_json(json, reports);
  write_file(cfg.output_dir / "theory_report.json", json.str());
  if (log) {
    const auto passed = std::count_if(reports.begin(), reports.end(), [](const auto& r) { return r.pass; });
    *log << passed << "/" << reports.size() << " checks passed\n";
  }
  return reports;
}

}  // namespace hdo
