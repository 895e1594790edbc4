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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "hdo/runner.hpp"

namespace hdo {
namespace {

namespace fs = std::filesystem;

const fs::path kSource = HDO_SOURCE_DIR;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("hdo_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Two small populations on a noisy quadratic.
std::string small_config(const fs::path& out, int seeds = 3) {
  return "name: small\n"
         "objective: {kind: quadratic, dim: 4, cond: 5, seed: 3, samples: 64, gradient_noise: 0.3}\n"
         "populations:\n"
         "  - {label: fo2, n0: 0, n1: 2, eta: 0.05}\n"
         "  - {label: hybrid, n0: 2, n1: 2, eta: 0.05, zo: {kind: zo_biased_one_sided, rv: 4}}\n"
         "run: {steps: 40, metric_cadence: 10, master_seed: 5, seeds: " +
         std::to_string(seeds) +
         ", scheduler: uniform_pair}\n"
         "output_dir: " +
         out.string() + "\n";
}

std::string error_key(const std::string& text) {
  try {
    parse_config_string(text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<accepted>";
}

TEST(Config, ShippedExamplesParse) {
  const auto fig2 = parse_config(kSource / "configs" / "fig2-desk.cfg");
  ASSERT_EQ(fig2.populations.size(), 4u);
  EXPECT_EQ(fig2.populations[3].label, "hybrid_fo4_zo16");
  EXPECT_EQ(fig2.populations[3].n0, 16);
  EXPECT_EQ(fig2.populations[3].n1, 4);
  EXPECT_EQ(fig2.populations[1].zo.rv, 128);
  EXPECT_EQ(fig2.steps, 500);
  EXPECT_EQ(fig2.scheduler, SchedulerMode::kRandomMatching);
  EXPECT_NO_THROW(parse_config(kSource / "configs" / "theory-default.cfg"));
}

TEST(Config, EmptyPopulationRejected) {
  EXPECT_EQ(error_key("populations: [{label: a, n0: 0, n1: 0}]\n"), "populations[0].n0");
}

TEST(Config, NegativeEtaRejected) {
  EXPECT_EQ(error_key("populations: [{label: a, n1: 2}, {label: b, n1: 2, eta: -0.1}]\n"),
            "populations[1].eta");
}

TEST(Config, UnknownKeysNamed) {
  EXPECT_EQ(error_key("populations: [{label: a, n1: 2, lr: 0.1}]\n"), "populations[0].lr");
  EXPECT_EQ(error_key("run: {stepz: 3}\n"), "run.stepz");
  EXPECT_EQ(error_key("colour: red\n"), "colour");
}

TEST(Config, OtherViolations) {
  EXPECT_EQ(error_key("populations: [{label: a, n1: 2}, {label: a, n1: 2}]\n"), "populations[1].label");
  EXPECT_EQ(error_key("populations: [{label: a, n1: 2, momentum: 1.0}]\n"), "populations[0].momentum");
  EXPECT_EQ(error_key("populations: [{label: a, n0: 2, zo: {kind: first_order}}]\n"),
            "populations[0].zo.kind");
  EXPECT_EQ(error_key("populations: [{label: a, n1: 2, fo: {rv: 0}}]\n"), "populations[0].fo");
  EXPECT_EQ(error_key("run: {steps: 10, warmup_steps: 10}\n"), "run.warmup_steps");
  EXPECT_EQ(error_key("run: {steps: ten}\n"), "run.steps");
  EXPECT_EQ(error_key("objective: {kind: quadratic, cond: 0.5}\n"), "objective.cond");
  EXPECT_EQ(error_key("theory: {replicas: 10}\n"), "theory.replicas");
  EXPECT_EQ(error_key("[1, 2]\n"), "");
}

TEST(Config, YamlRoundTrip) {
  ExperimentConfig c = parse_config(kSource / "configs" / "fig2-desk.cfg");
  c.nu_c = 0.7;
  c.theory.nus = {0.3, 1.0 / 3.0};
  c.populations[0].schedule = ScheduleMode::kWarmupCosine;
  c.populations[0].eta_min = 1e-4;
  c.warmup_steps = 7;
  const ExperimentConfig back = parse_config_string(to_yaml(c));
  EXPECT_EQ(to_yaml(back), to_yaml(c));
  EXPECT_EQ(back.theory.nus, c.theory.nus);
  EXPECT_EQ(*back.nu_c, 0.7);
  EXPECT_EQ(back.populations[0].schedule, ScheduleMode::kWarmupCosine);
  EXPECT_EQ(back.dataset.synthetic.feature_scale, c.dataset.synthetic.feature_scale);
}

TEST(Seeds, DerivationIsStableAndSpread) {
  EXPECT_EQ(derive_seed(1, 2, 3, StreamTag::kCell), derive_seed(1, 2, 3, StreamTag::kCell));
  EXPECT_NE(derive_seed(1, 2, 3, StreamTag::kCell), derive_seed(1, 2, 3, StreamTag::kInit));
  EXPECT_NE(derive_seed(1, 2, 3, StreamTag::kCell), derive_seed(1, 3, 2, StreamTag::kCell));
  ExperimentConfig c;
  EXPECT_NE(cell_seed(c, 0), cell_seed(c, 1));
}

TEST(Experiment, FileCountAndManifest) {
  const fs::path out = scratch("files");
  const auto cfg = parse_config_string(small_config(out));
  const auto result = run_experiment(cfg);
  int per_seed = 0, aggregates = 0;
  for (const auto& entry : fs::recursive_directory_iterator(out)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("seed_", 0) == 0) ++per_seed;
    if (name == "aggregate.csv") ++aggregates;
  }
  EXPECT_EQ(per_seed, 6);
  EXPECT_EQ(aggregates, 2);
  EXPECT_EQ(result.files.size(), 8u);
  ASSERT_TRUE(fs::exists(out / "manifest.json"));
  const std::string manifest = slurp(out / "manifest.json");
  EXPECT_NE(manifest.find("git_blob_sha1"), std::string::npos);
  EXPECT_NE(manifest.find(git_blob_sha1(slurp(out / "fo2" / "aggregate.csv"))), std::string::npos);
  EXPECT_EQ(result.series.at("hybrid").size(), 3u);
}

TEST(Experiment, RerunIsByteIdentical) {
  const fs::path a = scratch("rerun_a"), b = scratch("rerun_b");
  auto cfg = parse_config_string(small_config(a, 2));
  run_experiment(cfg);
  cfg.output_dir = b;
  cfg.threads = 3;
  run_experiment(cfg);
  for (const auto* rel : {"fo2/seed_0.csv", "fo2/seed_1.csv", "hybrid/seed_1.csv",
                          "fo2/aggregate.csv", "hybrid/aggregate.csv"}) {
    EXPECT_EQ(slurp(a / rel), slurp(b / rel)) << rel;
  }
}

TEST(Experiment, UnwritableOutputFails) {
  const fs::path blocker = scratch("blocked") / "file";
  std::ofstream(blocker) << "x";
  const auto cfg = parse_config_string(small_config(blocker / "sub", 1));
  EXPECT_ANY_THROW(run_experiment(cfg));
}

TEST(GitBlob, KnownHashes) {
  // `git hash-object` of the empty file and of "hello\n".
  EXPECT_EQ(git_blob_sha1(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_sha1("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

ExperimentConfig small_theory(const fs::path& out) {
  ExperimentConfig c;
  c.output_dir = out;
  c.theory.dims = {3};
  c.theory.nus = {0.05};
  c.theory.probes = 2;
  c.theory.smoothing_samples = 20000;
  c.theory.moment_samples = 20000;
  c.theory.bias_samples = 2000;
  c.theory.replicas = 1000;
  c.theory.snapshots = 2;
  c.theory.gamma_agents = 4;
  c.theory.gradcheck_points = 10;
  return c;
}

TEST(TheorySuite, SmallSuitePassesAndReportRoundTrips) {
  const fs::path out = scratch("theory");
  const auto reports = run_theory_suite(small_theory(out));
  for (const auto& r : reports) EXPECT_TRUE(r.pass) << r.name;
  std::ifstream in(out / "theory_report.json");
  const auto back = read_reports_json(in);
  ASSERT_EQ(back.size(), reports.size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    EXPECT_EQ(back[k].name, reports[k].name);
    EXPECT_EQ(back[k].measured, reports[k].measured);
  }
}

TEST(TheorySuite, LargeNuRaisesBiasAndBound) {
  auto t = small_theory(scratch("theory_nu")).theory;
  t.objectives = {ObjectiveKind::kLogisticL2};
  const auto base = theory_smoothing_checks(t);
  t.nu_scale = 100.0;
  const auto scaled = theory_smoothing_checks(t);
  ASSERT_EQ(base.size(), scaled.size());
  bool saw_bias = false;
  for (std::size_t k = 0; k < base.size(); ++k) {
    if (base[k].name.rfind("smoothing_grad_bias", 0) != 0) continue;
    saw_bias = true;
    EXPECT_GT(scaled[k].measured, base[k].measured);
    EXPECT_GT(scaled[k].bound, base[k].bound);
    EXPECT_TRUE(scaled[k].pass) << scaled[k].measured << " vs " << scaled[k].bound;
  }
  EXPECT_TRUE(saw_bias);
}

// ---------------------------------------------------------------------------
// CLI exit codes
// ---------------------------------------------------------------------------

int cli(const std::string& args) {
  const std::string cmd = std::string(HDO_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  std::ofstream(dir / "ok.cfg") << small_config(dir / "out", 1);
  std::ofstream(dir / "bad.cfg") << "populations: [{label: a, n0: 0, n1: 0}]\n";
  std::ofstream(dir / "blocked.cfg") << small_config(dir / "ok.cfg" / "sub", 1);

  EXPECT_EQ(cli("run " + (dir / "ok.cfg").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
  EXPECT_EQ(cli("run " + (dir / "ok.cfg").string() + " --seeds 2 --out-dir " +
                (dir / "out2").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "out2" / "fo2" / "seed_1.csv"));
  EXPECT_EQ(cli("run " + (dir / "bad.cfg").string()), 1);
  EXPECT_EQ(cli("run " + (dir / "missing.cfg").string()), 1);
  EXPECT_EQ(cli("frobnicate"), 1);
  EXPECT_EQ(cli("run " + (dir / "blocked.cfg").string()), 2);
  EXPECT_EQ(cli("gen-data classification samples=20,dim=3 " + (dir / "d.csv").string()), 0);
  EXPECT_EQ(load_csv_dataset(dir / "d.csv").size(), 20u);
  EXPECT_EQ(cli("gen-data classification colour=3 " + (dir / "e.csv").string()), 1);
}

TEST(Cli, VerifyPassesAndWritesReport) {
  const fs::path dir = scratch("cli_theory");
  std::ofstream(dir / "pass.cfg")
      << "theory: {objectives: [quadratic], dims: [3], nus: [0.05], probes: 1, "
         "smoothing_samples: 1000, moment_samples: 2000, bias_samples: 200, replicas: 1000, "
         "snapshots: 1, gamma_agents: 3, gradcheck_points: 5}\n"
         "output_dir: " + (dir / "out").string() + "\n";
  EXPECT_EQ(cli("verify " + (dir / "pass.cfg").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "theory_report.json"));
}

}  // namespace
}  // namespace hdo
