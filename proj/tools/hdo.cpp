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

// hdo: command-line driver for the hybrid decentralized optimization simulator.
//
//   hdo run <config>                      run every population x seed cell
//   hdo verify <config>                   run the theory-check suite
//   hdo gen-data <kind> <k=v,...> <out>   write a synthetic dataset as CSV
//
// Exit codes: 0 success, 1 config error, 2 runtime error, 3 theory failure.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "hdo/runner.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;
constexpr int kTheoryFailure = 3;

struct Overrides {
  int seeds = 0;
  std::string out_dir;
  int threads = 0;
  std::int64_t cadence = 0;
};

hdo::ExperimentConfig load(const std::string& path, const Overrides& o) {
  hdo::ExperimentConfig cfg = hdo::parse_config(path);
  if (o.seeds > 0) cfg.seeds = o.seeds;
  if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
  if (o.threads > 0) cfg.threads = o.threads;
  if (o.cadence > 0) cfg.metric_cadence = o.cadence;
  hdo::validate(cfg);
  return cfg;
}

// "samples=500,dim=5" -> synthetic parameters. Unknown keys are errors.
hdo::SyntheticClassificationParams parse_params(const std::string& text) {
  hdo::SyntheticClassificationParams p;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw hdo::ConfigError(item, "expected key=value");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    try {
      if (key == "samples") p.samples = std::stoull(value);
      else if (key == "dim") p.dim = std::stol(value);
      else if (key == "feature_scale") p.feature_scale = std::stod(value);
      else if (key == "signal") p.signal = std::stod(value);
      else if (key == "label_flip") p.label_flip = std::stod(value);
      else if (key == "seed") p.seed = std::stoull(value);
      else if (key == "stream") p.sample_stream = std::stoull(value);
      else throw hdo::ConfigError(key, "unknown parameter");
    } catch (const std::logic_error&) {
      throw hdo::ConfigError(key, "cannot parse '" + value + "'");
    }
  }
  if (p.samples < 1 || p.dim < 1) throw hdo::ConfigError("samples", "samples and dim must be >= 1");
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid decentralized optimization simulator"};
  app.require_subcommand(1);
  Overrides overrides;
  app.add_option("--seeds", overrides.seeds, "Number of seeds (overrides run.seeds)")
      ->check(CLI::PositiveNumber);
  app.add_option("--out-dir", overrides.out_dir, "Output directory (overrides output_dir)");
  app.add_option("--threads", overrides.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--metric-cadence", overrides.cadence, "Steps between metric records")
      ->check(CLI::PositiveNumber);

  std::string config;
  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("config", config, "YAML config")->required();
  auto* verify = app.add_subcommand("verify", "Run the theory-check suite");
  verify->add_option("config", config, "YAML config")->required();

  std::string kind, params, out_csv;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset");
  gen->add_option("kind", kind, "Dataset kind (classification)")->required();
  gen->add_option("params", params, "Comma-separated key=value parameters")->required();
  gen->add_option("out", out_csv, "Output CSV path")->required();

  for (auto* sub : {run, verify, gen}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) {
      const auto cfg = load(config, overrides);
      hdo::run_experiment(cfg, &std::cerr);
      return kOk;
    }
    if (*verify) {
      const auto cfg = load(config, overrides);
      const auto reports = hdo::run_theory_suite(cfg, &std::cout);
      bool failed = false;
      for (const auto& r : reports) {
        if (!r.pass) {
          std::cerr << "failed: " << r.name << '\n';
          failed = true;
        }
      }
      return failed ? kTheoryFailure : kOk;
    }
    if (*gen) {
      if (kind != "classification" && kind != "logistic") {
        throw hdo::ConfigError("kind", "unknown dataset kind '" + kind + "'");
      }
      const auto data = hdo::make_synthetic_classification(parse_params(params));
      std::ofstream out(out_csv);
      hdo::write_csv_dataset(out, data);
      out.close();
      if (!out) throw std::runtime_error("cannot write '" + out_csv + "'");
      return kOk;
    }
  } catch (const hdo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
