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

// Runs the end-to-end checks and prints one PASS/FAIL line per criterion.
// Exits nonzero if any criterion fails.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairall/fairall.hpp"
#include "property_suite.hpp"

namespace fa = fairall;
namespace fs = std::filesystem;

namespace {

struct Options {
  fs::path work = "acceptance_runs";
  int synthetic_seeds = 5;
  int compas_seeds = 10;
  int eval_every = 10;
  bool reuse = false;
  bool quiet = false;
  std::vector<int> only;
};

bool selected(const Options& o, int c) { return o.only.empty() || std::find(o.only.begin(), o.only.end(), c) != o.only.end(); }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

/// Per-seed metric rows of one method, running seeds that have no metrics yet
/// when `reuse` is set and all of them otherwise.
std::vector<std::vector<fa::MetricRow>> run_method(const fa::ExperimentConfig& cfg, const Options& o) {
  std::vector<std::vector<fa::MetricRow>> out;
  for (const auto seed : cfg.seeds) {
    const fs::path csv = fa::seed_dir(cfg, seed) / "metrics.csv";
    if (o.reuse && fs::exists(csv)) {
      auto rows = fa::read_metrics_csv(csv);
      if (static_cast<int>(rows.size()) == cfg.steps) {
        out.push_back(std::move(rows));
        continue;
      }
    }
    const auto r = fa::run_seed(cfg, seed, o.quiet ? nullptr : &std::cerr);
    if (!r.ok) throw std::runtime_error(fa::to_string(cfg.method) + " seed " + std::to_string(seed) + ": " + r.error);
    out.push_back(r.rows);
  }
  return out;
}

/// Mean over seeds of the per-seed mean of `col` over t in [t1, t2].
double window_mean(const std::vector<std::vector<fa::MetricRow>>& runs, double fa::MetricRow::*col, int t1, int t2) {
  double acc = 0.0;
  for (const auto& rows : runs) acc += fa::window_stats(rows, col, t1, t2).mean;
  return acc / static_cast<double>(runs.size());
}

/// Mean over seeds of `col` at step t.
double at_step(const std::vector<std::vector<fa::MetricRow>>& runs, double fa::MetricRow::*col, int t) {
  double acc = 0.0;
  for (const auto& rows : runs) {
    const auto it = std::find_if(rows.begin(), rows.end(), [&](const fa::MetricRow& r) { return r.t == t; });
    if (it == rows.end()) throw fa::RangeError("step " + std::to_string(t) + " missing");
    acc += (*it).*col;
  }
  return acc / static_cast<double>(runs.size());
}

struct OptimalEndpoints {
  double fair_ut = 0.0, fair_dpu = 0.0, unfair_ut = 0.0, unfair_dpu = 0.0;
};

/// Fits both optimal policies on five experiment seeds and scores them on
/// each seed's test set.
OptimalEndpoints optimal_endpoints() {
  OptimalEndpoints e;
  const int fits = 5;
  const auto cfg = fa::default_config("synthetic", fa::Method::unfairlog);
  for (int i = 0; i < fits; ++i) {
    const auto data = fa::prepare_data(cfg, static_cast<std::uint64_t>(i));
    const auto opt = fa::fit_optimal_policies(cfg.synthetic_train, fa::derive_seed(static_cast<std::uint64_t>(i), "optimal"),
                                              data.stats);
    e.fair_ut += fa::utility_of_policy(opt.fair, data.test, fa::UtilityLabel::proxy, cfg.cost);
    e.fair_dpu += fa::dpu_of_policy(opt.fair, data.test);
    e.unfair_ut += fa::utility_of_policy(opt.unfair, data.test, fa::UtilityLabel::proxy, cfg.cost);
    e.unfair_dpu += fa::dpu_of_policy(opt.unfair, data.test);
  }
  e.fair_ut /= fits, e.fair_dpu /= fits, e.unfair_ut /= fits, e.unfair_dpu /= fits;
  return e;
}

bool report(int criterion, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << criterion << ": " << detail << std::endl;
  return ok;
}

fa::ExperimentConfig synthetic_config(fa::Method m, const Options& o) {
  auto c = fa::default_config("synthetic", m);
  c.eval_every = o.eval_every;
  c.seeds.clear();
  for (int s = 0; s < o.synthetic_seeds; ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
  c.out_dir = (o.work / "synthetic").string();
  return c;
}

fa::ExperimentConfig compas_config(fa::Method m, const Options& o) {
  auto c = fa::default_config("compas", m);
  c.eval_every = c.steps;
  c.eval_tail = 1;
  c.seeds.clear();
  for (int s = 0; s < o.compas_seeds; ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
  c.out_dir = (o.work / "compas").string();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"End-to-end acceptance checks"};
  app.add_option("--work", o.work, "Directory for run outputs");
  app.add_option("--synthetic-seeds", o.synthetic_seeds, "Seeds per synthetic method")->check(CLI::PositiveNumber);
  app.add_option("--compas-seeds", o.compas_seeds, "Seeds per COMPAS method")->check(CLI::PositiveNumber);
  app.add_option("--eval-every", o.eval_every, "Synthetic test-set evaluation interval")->check(CLI::PositiveNumber);
  app.add_option("--only", o.only, "Run only these criteria");
  app.add_flag("--reuse", o.reuse, "Reuse complete metrics.csv files from an earlier run");
  app.add_flag("--quiet", o.quiet, "Suppress per-seed progress");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(o.work);

  bool all = true;
  const int steps = 200;
  try {
    const bool need_synthetic = selected(o, 1) || selected(o, 2) || selected(o, 3) || selected(o, 4);
    std::vector<std::vector<fa::MetricRow>> fairall, unfairlog, fairlog;
    if (need_synthetic) {
      if (selected(o, 1) || selected(o, 3) || selected(o, 4))
        fairall = run_method(synthetic_config(fa::Method::fairall_i_ii, o), o);
      if (selected(o, 2) || selected(o, 3)) unfairlog = run_method(synthetic_config(fa::Method::unfairlog, o), o);
      if (selected(o, 4)) fairlog = run_method(synthetic_config(fa::Method::fairlog, o), o);
    }
    const bool need_opt = selected(o, 1) || selected(o, 5);
    const OptimalEndpoints opt = need_opt ? optimal_endpoints() : OptimalEndpoints{};

    if (selected(o, 1)) {
      const double ut = window_mean(fairall, &fa::MetricRow::ut_proxy, 190, steps);
      const double dpu = window_mean(fairall, &fa::MetricRow::dpu, 190, steps);
      const double cfu = window_mean(fairall, &fa::MetricRow::cfu, 190, steps);
      const bool ok = std::abs(ut - opt.fair_ut) <= 0.02 && dpu <= 0.03 && cfu <= 0.05;
      all &= report(1, ok,
                    "FairAll_I_II proxy utility " + fmt(ut) + " (OPT-FAIR " + fmt(opt.fair_ut) + ", need within 0.02), DPU " +
                        fmt(dpu) + " (need <= 0.03), CFU " + fmt(cfu) + " (need <= 0.05)");
    }
    if (selected(o, 2)) {
      const double ut = window_mean(unfairlog, &fa::MetricRow::ut_proxy, 190, steps);
      const double dpu = window_mean(unfairlog, &fa::MetricRow::dpu, 190, steps);
      const bool ok = std::abs(ut - 0.24) <= 0.03 && std::abs(dpu - 0.31) <= 0.04;
      all &= report(2, ok,
                    "UnfairLog proxy utility " + fmt(ut) + " (need 0.24 +- 0.03), DPU " + fmt(dpu) + " (need 0.31 +- 0.04)");
    }
    if (selected(o, 3)) {
      const double gt_a = at_step(fairall, &fa::MetricRow::ut_gt, steps);
      const double gt_u = at_step(unfairlog, &fa::MetricRow::ut_gt, steps);
      const double dpu_a = at_step(fairall, &fa::MetricRow::dpu, steps);
      const double dpu_u = at_step(unfairlog, &fa::MetricRow::dpu, steps);
      const bool ok = std::abs(gt_a - gt_u) <= 0.02 && dpu_u - dpu_a >= 0.20;
      all &= report(3, ok,
                    "ground-truth utility FairAll_I_II " + fmt(gt_a) + " vs UnfairLog " + fmt(gt_u) +
                        " (need gap <= 0.02), DPU " + fmt(dpu_a) + " vs " + fmt(dpu_u) + " (need >= 0.20 lower)");
    }
    if (selected(o, 4)) {
      const double cfu_l = at_step(fairlog, &fa::MetricRow::cfu, steps);
      const double cfu_a = at_step(fairall, &fa::MetricRow::cfu, steps);
      all &= report(4, cfu_l - cfu_a >= 0.10,
                    "CFU at t=200 FairLog " + fmt(cfu_l) + " vs FairAll_I_II " + fmt(cfu_a) + " (need gap >= 0.10)");
    }
    if (selected(o, 5)) {
      const bool ok = std::abs(opt.unfair_ut - 0.24) <= 0.02 && std::abs(opt.unfair_dpu - 0.31) <= 0.02 &&
                      std::abs(opt.fair_ut - 0.17) <= 0.02 && opt.fair_dpu <= 0.02;
      all &= report(5, ok,
                    "OPT-UNFAIR utility " + fmt(opt.unfair_ut) + " DPU " + fmt(opt.unfair_dpu) +
                        " (need 0.24 / 0.31 +- 0.02), OPT-FAIR utility " + fmt(opt.fair_ut) + " DPU " +
                        fmt(opt.fair_dpu) + " (need 0.17 +- 0.02 / <= 0.02)");
    }
    if (selected(o, 6)) {
      const auto a = run_method(compas_config(fa::Method::fairall_i_ii, o), o);
      const auto l = run_method(compas_config(fa::Method::fairlog, o), o);
      const auto u = run_method(compas_config(fa::Method::unfairlog, o), o);
      const int t = compas_config(fa::Method::fairall_i_ii, o).steps;
      const double ut_a = at_step(a, &fa::MetricRow::eff_ut, t), dpu_a = at_step(a, &fa::MetricRow::eff_dpu, t);
      const double ut_l = at_step(l, &fa::MetricRow::eff_ut, t);
      const double dpu_u = at_step(u, &fa::MetricRow::eff_dpu, t);
      const bool ok = std::abs(ut_a - 0.062) <= 0.020 && std::abs(dpu_a - 0.104) <= 0.025 && ut_a > ut_l && dpu_u > dpu_a;
      all &= report(6, ok,
                    "COMPAS FairAll_I_II effective utility " + fmt(ut_a) + " (need 0.062 +- 0.020), effective DPU " +
                        fmt(dpu_a) + " (need 0.104 +- 0.025), FairLog effective utility " + fmt(ut_l) +
                        " (need lower), UnfairLog effective DPU " + fmt(dpu_u) + " (need higher)");
    }
    if (selected(o, 7)) {
      std::vector<fa::testing::PropertyResult> props = fa::testing::gradient_properties();
      props.push_back(fa::testing::mixture_kl_property());
      props.push_back(fa::testing::counterfactual_property());
      props.push_back(fa::testing::ips_unbiasedness_property());
      props.push_back(fa::testing::temporal_stats_property());
      props.push_back(fa::testing::rerun_property(o.work / "properties"));
      bool ok = true;
      std::string failed;
      for (const auto& p : props) {
        if (!o.quiet) std::cerr << "  property " << p.name << ": " << (p.ok ? "ok" : "FAILED") << " (" << p.detail << ")\n";
        if (!p.ok) failed += p.name + " (" + p.detail + "); ";
        ok = ok && p.ok;
      }
      all &= report(7, ok, ok ? std::to_string(props.size()) + " properties hold" : "failed: " + failed);
    }
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 2;
  }
  return all ? 0 : 1;
}
