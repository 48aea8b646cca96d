// Copyright 2026 The fairall-cpp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// fairall run --config PATH [--seed N] [--out DIR]
// fairall summarize --runs DIR... [--window T1:T2] [--out FILE]
// fairall synthetic --n N --seed S --out FILE

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fairall/fairall.hpp"

namespace {

int cmd_run(const std::string& config, const std::optional<std::uint64_t>& seed, const std::string& out) {
  auto cfg = fairall::load_config(config);
  if (seed) cfg.seeds = {*seed};
  if (!out.empty()) cfg.out_dir = out;
  const auto outcomes = fairall::run_experiment(cfg);
  int failed = 0;
  for (const auto& o : outcomes) {
    if (o.ok) {
      std::cout << "seed " << o.seed << ": ok -> " << o.dir.string() << '\n';
    } else {
      std::cout << "seed " << o.seed << ": FAILED (" << o.error << ")\n";
      ++failed;
    }
  }
  return failed == 0 ? 0 : 1;
}

int cmd_summarize(const std::vector<std::string>& runs, const std::string& window, const std::string& out) {
  const auto colon = window.find(':');
  if (colon == std::string::npos) throw fairall::ConfigError("--window expects T1:T2");
  const int t1 = std::stoi(window.substr(0, colon));
  const int t2 = std::stoi(window.substr(colon + 1));
  std::vector<fairall::fs::path> dirs(runs.begin(), runs.end());
  const auto summary = fairall::summarize_runs(dirs, t1, t2);
  for (const auto& m : summary.missing) std::cerr << "missing: " << m << '\n';
  fairall::write_summary_csv(std::cout, summary);
  std::ofstream f(out);
  if (!f) throw fairall::ConfigError("cannot write '" + out + "'");
  fairall::write_summary_csv(f, summary);
  return summary.rows.empty() ? 1 : 0;
}

int cmd_synthetic(std::size_t n, std::uint64_t seed, const std::string& out) {
  const auto draws = fairall::sample_population(n, seed);
  const auto rows = fairall::to_examples(draws);
  std::ofstream f(out);
  if (!f) throw fairall::ConfigError("cannot write '" + out + "'");
  fairall::write_dataset(f, fairall::FeatureSchema::synthetic(), rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair decision-making with unlabeled data: experiment runner"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run every seed of an experiment config");
  std::string config, run_out;
  std::optional<std::uint64_t> seed;
  run->add_option("--config", config, "Flat key = value config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Run only this seed");
  run->add_option("--out", run_out, "Output directory (overrides out_dir)");

  auto* sum = app.add_subcommand("summarize", "Summarize run directories across seeds");
  std::vector<std::string> runs;
  std::string window = "125:200", sum_out = "summary.csv";
  sum->add_option("--runs", runs, "Run directories")->required();
  sum->add_option("--window", window, "Inclusive step window T1:T2");
  sum->add_option("--out", sum_out, "Summary CSV path");

  auto* syn = app.add_subcommand("synthetic", "Write a synthetic sample as CSV");
  std::size_t n = 1000;
  std::uint64_t syn_seed = 0;
  std::string syn_out;
  syn->add_option("--n", n, "Rows")->check(CLI::PositiveNumber);
  syn->add_option("--seed", syn_seed, "Seed");
  syn->add_option("--out", syn_out, "Output CSV")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(config, seed, run_out);
    if (sum->parsed()) return cmd_summarize(runs, window, sum_out);
    if (syn->parsed()) return cmd_synthetic(n, syn_seed, syn_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
