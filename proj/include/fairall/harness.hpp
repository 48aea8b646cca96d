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

// Experiment orchestration: configuration, the per-seed two-phase pipeline,
// and the across-seed summary.
//
// Output layout of `run_experiment`:
//   <out>/<method>/seed_<n>/metrics.csv    one row per step t = 1..steps
//   <out>/<method>/seed_<n>/snapshot.json  final networks and diagnostics
//   <out>/<method>/seed_<n>/error.txt      only when the seed failed

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fairall/approximator.hpp"
#include "fairall/common.hpp"
#include "fairall/dataset.hpp"
#include "fairall/fairvae.hpp"
#include "fairall/metrics.hpp"
#include "fairall/policies.hpp"
#include "fairall/snapshot.hpp"
#include "fairall/synthetic_scm.hpp"

#ifndef FAIRALL_DEFAULT_DATA_DIR
#define FAIRALL_DEFAULT_DATA_DIR "data"
#endif

namespace fairall {

namespace fs = std::filesystem;

enum class Method { fairall_i_ii, fairall_ii, fairlab_i_ii, fairlog, unfairlog };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::fairall_i_ii: return "FairAll_I_II";
    case Method::fairall_ii: return "FairAll_II";
    case Method::fairlab_i_ii: return "FairLab_I_II";
    case Method::fairlog: return "FairLog";
    case Method::unfairlog: return "UnfairLog";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::fairall_i_ii, Method::fairall_ii, Method::fairlab_i_ii, Method::fairlog, Method::unfairlog})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown method '" + s + "'");
}

inline bool uses_vae(Method m) { return m != Method::fairlog && m != Method::unfairlog; }
inline bool uses_phase1(Method m) { return m == Method::fairall_i_ii || m == Method::fairlab_i_ii; }

struct ExperimentConfig {
  Method method = Method::fairall_i_ii;
  std::string dataset = "synthetic";  // synthetic | compas | csv
  std::string data_csv;
  std::string schema_path;
  std::string initial_policy = "HARSH";
  std::string initial_table;  // row of the initial-rate table; defaults to `dataset`
  std::optional<double> initial_rate_positive;
  std::optional<double> initial_rate_negative;
  double cost = 0.5;

  int steps = 200;
  std::size_t batch_size = 64;
  std::size_t warmup_samples = 128;
  int warmup_steps = 50;

  // Phase I
  int phase1_epochs = 2000;
  std::size_t phase1_batch = 64;
  double phase1_lr = 5e-3;
  double phase1_beta = 0.8;

  // Phase II model and policies
  std::vector<std::size_t> vae_hidden{64, 64};
  std::size_t latent_dim = 2;
  std::vector<std::size_t> clf_hidden{32, 32, 32};
  double lr = 1e-2;
  double alpha = 5.0;
  double beta = 0.7;
  double lambda = 3.0;
  std::string policy_variant = "dec";
  int policy_epochs = 1;
  int latent_samples = 10;
  int unlabeled_samples = 50;
  int kl_samples = 100;

  // Data sizes
  std::size_t synthetic_train = 5000;
  std::size_t synthetic_validation = 2500;
  std::size_t synthetic_test = 5000;
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
  double phase1_fraction = 0.7;

  // Evaluation thinning: test metrics every `eval_every` steps and on the
  // last `eval_tail` steps; other rows carry NaN test metrics.
  int eval_every = 1;
  int eval_tail = 11;

  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "runs";

  void validate() const {
    if (!(cost > 0.0 && cost < 1.0)) throw ConfigError("cost must lie in (0,1)");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (warmup_steps < 0 || phase1_epochs < 0 || policy_epochs < 0) throw ConfigError("epoch counts must be >= 0");
    if (seeds.empty()) throw ConfigError("seeds must be nonempty");
    if (initial_policy != "HARSH" && initial_policy != "LENI") throw ConfigError("initial_policy must be HARSH or LENI");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (lambda < 0) throw ConfigError("lambda must be >= 0");
    parse_latent_variant(policy_variant);
    if (dataset != "synthetic" && (data_csv.empty() || schema_path.empty()))
      throw ConfigError("dataset '" + dataset + "' needs data_csv and schema_path");
  }
};

/// Best-hyperparameter defaults for (dataset, method). Unknown datasets keep
/// the synthetic values.
inline ExperimentConfig default_config(const std::string& dataset, Method method) {
  ExperimentConfig c;
  c.dataset = dataset;
  c.method = method;
  if (dataset == "compas") {
    c.data_csv = std::string(FAIRALL_DEFAULT_DATA_DIR) + "/compas.csv";
    c.schema_path = std::string(FAIRALL_DEFAULT_DATA_DIR) + "/compas.schema";
    c.phase1_batch = 256;
    c.phase1_lr = 5e-3;
    c.phase1_beta = 0.8;
    c.vae_hidden = {32, 32};
    c.latent_dim = 3;
    c.lambda = 4.0;
    switch (method) {
      case Method::fairall_i_ii:
        c.lr = 1e-3, c.clf_hidden = {32, 32, 32}, c.alpha = 1.0, c.beta = 0.7;
        break;
      case Method::fairall_ii:
        c.lr = 1e-2, c.vae_hidden = {64, 64, 64}, c.clf_hidden = {64, 64, 64}, c.latent_dim = 2, c.alpha = 10.0,
        c.beta = 1.0;
        break;
      case Method::fairlab_i_ii:
        c.lr = 1e-3, c.clf_hidden = {32, 32, 32}, c.alpha = 1.0, c.beta = 0.85;
        break;
      case Method::unfairlog:
      case Method::fairlog:
        c.lr = 1e-2, c.clf_hidden = {32, 32, 32};
        break;
    }
    return c;
  }
  switch (method) {
    case Method::fairall_i_ii:
      c.lr = 1e-2, c.clf_hidden = {32, 32, 32}, c.alpha = 5.0, c.beta = 0.7;
      break;
    case Method::fairall_ii:
      c.lr = 1e-2, c.vae_hidden = {64, 64}, c.clf_hidden = {64, 64}, c.latent_dim = 2, c.alpha = 5.0, c.beta = 0.85;
      break;
    case Method::fairlab_i_ii:
      c.lr = 1e-3, c.clf_hidden = {32, 32, 32}, c.alpha = 1.0, c.beta = 0.7;
      break;
    case Method::unfairlog:
    case Method::fairlog:
      c.lr = 1e-2, c.clf_hidden = {64, 64, 64};
      break;
  }
  return c;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  const auto d = parse_real(v);
  if (!d) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return *d;
}

inline long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long n = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  const long n = to_long(key, v);
  if (n < 0) throw ConfigError("config: '" + key + "' must be >= 0");
  return static_cast<std::size_t>(n);
}

/// "64x64x64" -> {64, 64, 64}; "" or "none" -> {}.
inline std::vector<std::size_t> to_arch(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty() || v == "none") return out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    const std::size_t n = to_size(key, trim(part));
    if (n == 0) throw ConfigError("config: '" + key + "' has a zero-width layer");
    out.push_back(n);
  }
  return out;
}

/// "0,1,2" or "0..9" (inclusive) or a mix of both.
inline std::vector<std::uint64_t> to_seeds(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    const auto dots = part.find("..");
    if (dots == std::string::npos) {
      out.push_back(to_size(key, part));
    } else {
      const std::size_t a = to_size(key, part.substr(0, dots)), b = to_size(key, part.substr(dots + 2));
      if (b < a) throw ConfigError("config: empty seed range '" + part + "'");
      for (std::size_t s = a; s <= b; ++s) out.push_back(s);
    }
  }
  return out;
}

inline std::string arch_string(const std::vector<std::size_t>& a) {
  std::string s;
  for (std::size_t i = 0; i < a.size(); ++i) s += (i ? "x" : "") + std::to_string(a[i]);
  return s.empty() ? "none" : s;
}

}  // namespace detail

/// Flat `key = value` document; '#' starts a comment. `dataset` and `method`
/// select the defaults, every other key overrides one field.
inline ExperimentConfig parse_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    kv.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  std::string dataset = "synthetic";
  Method method = Method::fairall_i_ii;
  for (const auto& [k, v] : kv) {
    if (k == "dataset") dataset = v;
    if (k == "method") method = parse_method(v);
  }
  ExperimentConfig c = default_config(dataset, method);

  using detail::to_arch, detail::to_double, detail::to_long, detail::to_seeds, detail::to_size;
  for (const auto& [k, v] : kv) {
    if (k == "dataset" || k == "method") continue;
    if (k == "data_csv") c.data_csv = v;
    else if (k == "schema_path") c.schema_path = v;
    else if (k == "initial_policy") c.initial_policy = v;
    else if (k == "initial_table") c.initial_table = v;
    else if (k == "initial_rate_positive") c.initial_rate_positive = to_double(k, v);
    else if (k == "initial_rate_negative") c.initial_rate_negative = to_double(k, v);
    else if (k == "cost") c.cost = to_double(k, v);
    else if (k == "steps") c.steps = static_cast<int>(to_long(k, v));
    else if (k == "batch_size") c.batch_size = to_size(k, v);
    else if (k == "warmup_samples") c.warmup_samples = to_size(k, v);
    else if (k == "warmup_steps") c.warmup_steps = static_cast<int>(to_long(k, v));
    else if (k == "phase1_epochs") c.phase1_epochs = static_cast<int>(to_long(k, v));
    else if (k == "phase1_batch") c.phase1_batch = to_size(k, v);
    else if (k == "phase1_lr") c.phase1_lr = to_double(k, v);
    else if (k == "phase1_beta") c.phase1_beta = to_double(k, v);
    else if (k == "vae_hidden") c.vae_hidden = to_arch(k, v);
    else if (k == "latent_dim") c.latent_dim = to_size(k, v);
    else if (k == "clf_hidden") c.clf_hidden = to_arch(k, v);
    else if (k == "lr") c.lr = to_double(k, v);
    else if (k == "alpha") c.alpha = to_double(k, v);
    else if (k == "beta") c.beta = to_double(k, v);
    else if (k == "lambda") c.lambda = to_double(k, v);
    else if (k == "policy_variant") c.policy_variant = v;
    else if (k == "policy_epochs") c.policy_epochs = static_cast<int>(to_long(k, v));
    else if (k == "latent_samples") c.latent_samples = static_cast<int>(to_long(k, v));
    else if (k == "unlabeled_samples") c.unlabeled_samples = static_cast<int>(to_long(k, v));
    else if (k == "kl_samples") c.kl_samples = static_cast<int>(to_long(k, v));
    else if (k == "synthetic_train") c.synthetic_train = to_size(k, v);
    else if (k == "synthetic_validation") c.synthetic_validation = to_size(k, v);
    else if (k == "synthetic_test") c.synthetic_test = to_size(k, v);
    else if (k == "train_fraction") c.train_fraction = to_double(k, v);
    else if (k == "validation_fraction") c.validation_fraction = to_double(k, v);
    else if (k == "phase1_fraction") c.phase1_fraction = to_double(k, v);
    else if (k == "eval_every") c.eval_every = static_cast<int>(to_long(k, v));
    else if (k == "eval_tail") c.eval_tail = static_cast<int>(to_long(k, v));
    else if (k == "seeds") c.seeds = to_seeds(k, v);
    else if (k == "out_dir") c.out_dir = v;
    else throw ConfigError("config: unknown key '" + k + "'");
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in);
}

inline Json to_json(const ExperimentConfig& c) {
  return Json{{"method", to_string(c.method)},
              {"dataset", c.dataset},
              {"initial_policy", c.initial_policy},
              {"cost", c.cost},
              {"steps", c.steps},
              {"batch_size", c.batch_size},
              {"warmup_samples", c.warmup_samples},
              {"warmup_steps", c.warmup_steps},
              {"phase1_epochs", c.phase1_epochs},
              {"phase1_batch", c.phase1_batch},
              {"phase1_lr", c.phase1_lr},
              {"phase1_beta", c.phase1_beta},
              {"vae_hidden", detail::arch_string(c.vae_hidden)},
              {"latent_dim", c.latent_dim},
              {"clf_hidden", detail::arch_string(c.clf_hidden)},
              {"lr", c.lr},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"lambda", c.lambda},
              {"policy_variant", c.policy_variant},
              {"policy_epochs", c.policy_epochs}};
}

// ---------------------------------------------------------------------------
// Data preparation

struct PreparedData {
  FeatureSchema schema;
  std::vector<Example> phase1_pool;  // unlabeled pre-training pool
  std::vector<Example> stream_pool;  // candidates for warmup and the online steps
  std::vector<Example> validation;
  std::vector<Example> test;
  std::vector<Example> test_counterfactual;  // synthetic only, aligned with `test`
  StandardizeStats stats;
};

/// Synthetic: independent draws for every split; the stream pool holds
/// exactly the records the run will consume. Real data: seeded
/// train/validation/test split, Phase I takes the first `phase1_fraction` of
/// train and the stream draws from the rest.
inline PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  PreparedData d;
  if (cfg.dataset == "synthetic") {
    d.schema = FeatureSchema::synthetic();
    const auto train = sample_population(cfg.synthetic_train, derive_seed(seed, "scm-train"));
    const auto val = sample_population(cfg.synthetic_validation, derive_seed(seed, "scm-validation"));
    const auto test = sample_population(cfg.synthetic_test, derive_seed(seed, "scm-test"));
    const auto stream = sample_population(cfg.warmup_samples + cfg.batch_size * static_cast<std::size_t>(cfg.steps),
                                          derive_seed(seed, "scm-stream"));
    d.phase1_pool = to_examples(train);
    d.validation = to_examples(val);
    d.test = to_examples(test);
    d.stream_pool = to_examples(stream);
    for (const auto& draw : test) d.test_counterfactual.push_back(to_example(counterfactual_of(draw, -draw.s)));
    d.stats = standardize_fit(d.schema, d.phase1_pool);
  } else {
    d.schema = load_schema(cfg.schema_path);
    auto rows = load_dataset(cfg.data_csv, d.schema);
    const double fr[3] = {cfg.train_fraction, cfg.validation_fraction,
                          1.0 - cfg.train_fraction - cfg.validation_fraction};
    auto parts = split_by_fractions(std::move(rows), fr, derive_seed(seed, "split"));
    auto& train = parts[0];
    d.validation = std::move(parts[1]);
    d.test = std::move(parts[2]);
    d.stats = standardize_fit(d.schema, train);
    const auto n1 = static_cast<std::size_t>(std::floor(cfg.phase1_fraction * static_cast<double>(train.size())));
    d.phase1_pool.assign(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n1));
    d.stream_pool.assign(train.begin() + static_cast<std::ptrdiff_t>(n1), train.end());
  }
  for (const auto& w : d.stats.warnings) std::cerr << "warning: " << w << '\n';
  for (auto* part : {&d.phase1_pool, &d.stream_pool, &d.validation, &d.test, &d.test_counterfactual})
    d.stats.apply(*part);
  if (d.stream_pool.empty()) throw ConfigError("stream pool is empty");
  if (d.test.empty()) throw ConfigError("test split is empty");
  return d;
}

// ---------------------------------------------------------------------------
// Training primitives

/// Mean Phase-I loss of the final epoch.
inline double train_phase1(FairVae& m, std::span<const Example> pool, int epochs, std::size_t batch, double lr,
                           Rng& rng) {
  if (pool.empty()) throw ConfigError("Phase I pool is empty");
  if (batch < 1) throw ConfigError("phase1_batch must be >= 1");
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Example> mb;
  double last = 0.0;
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      mb.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i) mb.push_back(pool[order[i]]);
      auto g = FairVaeGrads::zeros_like(m);
      sum += phase1_loss(m, mb, rng, &g) * static_cast<double>(mb.size());
      apply_update(m, g, lr);
    }
    last = sum / static_cast<double>(pool.size());
  }
  return last;
}

/// Splits a step's records into three contiguous mini-batches of
/// ceil(n / 3) records.
inline std::vector<std::span<const Record>> step_minibatches(std::span<const Record> records) {
  std::vector<std::span<const Record>> out;
  if (records.empty()) return out;
  const std::size_t mb = (records.size() + 2) / 3;
  for (std::size_t s = 0; s < records.size(); s += mb) out.push_back(records.subspan(s, std::min(mb, records.size() - s)));
  return out;
}

// ---------------------------------------------------------------------------
// Per-seed run

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  fs::path dir;
  std::vector<MetricRow> rows;
  double phase1_probe = kNaN;
  double final_probe = kNaN;
};

class SeedRun {
 public:
  SeedRun(const ExperimentConfig& cfg, std::uint64_t seed, std::ostream* log)
      : cfg_(cfg), seed_(seed), log_(log), train_rng_(derive_seed(seed, "train")),
        policy_rng_(derive_seed(seed, "policy-train")) {}

  SeedOutcome run() {
    SeedOutcome out;
    out.seed = seed_;
    data_ = prepare_data(cfg_, seed_);
    const FeatureLayout layout(data_.schema);
    const std::string name = to_string(cfg_.method);

    if (uses_vae(cfg_.method)) {
      VaeHyper h2;
      h2.vae_hidden = cfg_.vae_hidden;
      h2.latent_dim = cfg_.latent_dim;
      h2.clf_hidden = cfg_.clf_hidden;
      h2.beta = cfg_.beta;
      h2.alpha = cfg_.alpha;
      h2.cost = cfg_.cost;
      h2.unlabeled_samples = cfg_.unlabeled_samples;
      h2.kl_samples = cfg_.kl_samples;
      if (uses_phase1(cfg_.method)) {
        VaeHyper h1 = h2;
        h1.beta = cfg_.phase1_beta;
        FairVae p1 = make_phase1_vae(layout, h1, derive_seed(seed_, "phase1-init"));
        Rng rng(derive_seed(seed_, "phase1-train"));
        const double loss = train_phase1(p1, data_.phase1_pool, cfg_.phase1_epochs, cfg_.phase1_batch, cfg_.phase1_lr, rng);
        out.phase1_probe = latent_sensitive_probe(p1, data_.test, derive_seed(seed_, "probe"));
        note("Phase I done: loss " + format_metric(loss) + ", probe " + format_metric(out.phase1_probe));
        model_ = transfer_params(p1, h2, derive_seed(seed_, "transfer"));
      } else {
        model_ = make_phase2_vae(layout, h2, derive_seed(seed_, "phase2-init"));
      }
      policy_ = make_latent_policy(*model_, cfg_.method == Method::fairlab_i_ii ? PolicyKind::fairlab : PolicyKind::latent,
                                   derive_seed(seed_, "policy-init"));
      policy_.latent_samples = cfg_.latent_samples;
    } else {
      policy_ = make_feature_policy(cfg_.method == Method::fairlog ? PolicyKind::fairlog : PolicyKind::unfairlog,
                                    cfg_.clf_hidden, layout.width, derive_seed(seed_, "policy-init"));
    }

    // Warmup: label a first batch with the initial policy and fit on it.
    const Policy initial = initial_policy();
    StreamSampler sampler(data_.stream_pool, derive_seed(seed_, "stream"));
    const std::uint64_t decide_seed = derive_seed(seed_, "decide");
    const std::uint64_t eval_seed = derive_seed(seed_, "eval");
    if (cfg_.warmup_samples > 0) {
      const CandidateBatch warm{0, sampler.next(cfg_.warmup_samples), "warmup"};
      const auto decided = decide_batch(initial, warm, nullptr, cfg_.cost, derive_seed(decide_seed, std::uint64_t{0}));
      for (int e = 0; e < cfg_.warmup_steps; ++e) update_epoch(decided.records);
      refresh_policy(decided.records, cfg_.warmup_steps);
    }
    note("warmup done");

    std::vector<DecidedBatch> history;
    std::size_t accepted_total = 0;
    std::ostringstream csv;
    csv << kMetricsHeader << '\n';
    for (int t = 1; t <= cfg_.steps; ++t) {
      const CandidateBatch batch{t, sampler.next(cfg_.batch_size), "stream"};
      history.push_back(decide_batch(policy_, batch, model_ ? &*model_ : nullptr, cfg_.cost,
                                     derive_seed(decide_seed, static_cast<std::uint64_t>(t))));
      const auto& records = history.back().records;
      accepted_total += history.back().accepted();
      update_epoch(records);
      refresh_policy(records, cfg_.policy_epochs);

      std::size_t labeled = 0;
      for (const auto& h : history)
        for (const auto& r : h.records) labeled += r.y_tilde().has_value();
      if (labeled != accepted_total) throw ContractError("labeled-record count diverged from accepted decisions");

      MetricRow row;
      row.method = name;
      row.seed = seed_;
      row.t = t;
      const auto eff = effective_stats(history, static_cast<std::size_t>(t), cfg_.cost);
      row.eff_ut = eff.utility;
      row.eff_dpu = eff.dpu;
      if (t % cfg_.eval_every == 0 || t > cfg_.steps - cfg_.eval_tail || t == cfg_.steps) {
        const auto m = evaluate_policy(policy_, data_.test, data_.test_counterfactual, cfg_.cost,
                                       model_ ? &*model_ : nullptr, eval_seed);
        row.ut_proxy = m.ut_proxy;
        row.ut_gt = m.ut_gt;
        row.dpu = m.dpu;
        row.cfu = m.cfu;
      }
      write_metric_row(csv, row);
      out.rows.push_back(row);
      if (t % 20 == 0 || t == cfg_.steps)
        note("t=" + std::to_string(t) + " ut=" + format_metric(row.ut_proxy) + " dpu=" + format_metric(row.dpu) +
             " cfu=" + format_metric(row.cfu) + " eff_ut=" + format_metric(row.eff_ut));
    }
    if (model_) out.final_probe = latent_sensitive_probe(*model_, data_.test, derive_seed(seed_, "probe"));

    metrics_csv_ = csv.str();
    snapshot_ = Json{{"seed", seed_},
                     {"config", to_json(cfg_)},
                     {"policy", to_json(policy_)},
                     {"phase1_probe", json_number(out.phase1_probe)},
                     {"final_probe", json_number(out.final_probe)}};
    if (model_) snapshot_["model"] = to_json(*model_);
    out.ok = true;
    return out;
  }

  const std::string& metrics_csv() const { return metrics_csv_; }
  const Json& snapshot() const { return snapshot_; }

 private:
  static Json json_number(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }

  /// Table rates for the dataset key, unless both rates are given explicitly.
  Policy initial_policy() const {
    Policy p;
    if (cfg_.initial_rate_positive && cfg_.initial_rate_negative) {
      p.rates = {*cfg_.initial_rate_positive, *cfg_.initial_rate_negative};
      return p;
    }
    p = make_initial_policy(cfg_.initial_policy == "HARSH" ? InitialPolicyKind::harsh : InitialPolicyKind::leni,
                            cfg_.initial_table.empty() ? cfg_.dataset : cfg_.initial_table);
    if (cfg_.initial_rate_positive) p.rates.positive = *cfg_.initial_rate_positive;
    if (cfg_.initial_rate_negative) p.rates.negative = *cfg_.initial_rate_negative;
    return p;
  }

  void note(const std::string& msg) const {
    if (log_) *log_ << "[" << to_string(cfg_.method) << " seed " << seed_ << "] " << msg << std::endl;
  }

  /// One epoch of three mini-batches over a step's records.
  void update_epoch(std::span<const Record> records) {
    for (const auto mb : step_minibatches(records)) {
      std::vector<Record> lab, unl;
      for (const auto& r : mb) (r.labeled() ? lab : unl).push_back(r);
      switch (cfg_.method) {
        case Method::fairall_i_ii:
        case Method::fairall_ii: {
          auto g = FairVaeGrads::zeros_like(*model_);
          phase2_objective(*model_, lab, unl, train_rng_, &g);
          apply_update(*model_, g, cfg_.lr);
          break;
        }
        case Method::fairlab_i_ii: fairlab_update(*model_, lab, train_rng_, cfg_.lr); break;
        case Method::fairlog:
        case Method::unfairlog: baseline_update(policy_, lab, mb, cfg_.cost, cfg_.lambda, cfg_.lr); break;
      }
    }
  }

  void refresh_policy(std::span<const Record> records, int epochs) {
    if (!policy_.reads_latent() || epochs == 0) return;
    const LatentVariant v =
        cfg_.method == Method::fairlab_i_ii ? LatentVariant::label : parse_latent_variant(cfg_.policy_variant);
    if (v == LatentVariant::label &&
        std::none_of(records.begin(), records.end(), [](const Record& r) { return r.labeled(); }))
      return;
    train_policy_from_latent(policy_, *model_, records, v, epochs, cfg_.lr, cfg_.cost, policy_rng_);
  }

  const ExperimentConfig& cfg_;
  std::uint64_t seed_;
  std::ostream* log_;
  Rng train_rng_;
  Rng policy_rng_;
  PreparedData data_;
  std::optional<FairVae> model_;
  Policy policy_;
  std::string metrics_csv_;
  Json snapshot_;
};

inline fs::path seed_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.out_dir) / to_string(cfg.method) / ("seed_" + std::to_string(seed));
}

/// Runs one seed and writes its files. Module errors are caught and recorded
/// in error.txt; the outcome carries the diagnostic.
inline SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed, std::ostream* log = &std::cerr) {
  const fs::path dir = seed_dir(cfg, seed);
  fs::create_directories(dir);
  fs::remove(dir / "metrics.csv");
  fs::remove(dir / "snapshot.json");
  fs::remove(dir / "error.txt");
  SeedOutcome out;
  try {
    SeedRun run(cfg, seed, log);
    out = run.run();
    std::ofstream(dir / "metrics.csv", std::ios::binary) << run.metrics_csv();
    std::ofstream(dir / "snapshot.json", std::ios::binary) << run.snapshot().dump(1) << '\n';
  } catch (const std::exception& e) {
    out = SeedOutcome{};
    out.seed = seed;
    out.error = e.what();
    std::ofstream(dir / "error.txt") << e.what() << '\n';
    if (log) *log << "[" << to_string(cfg.method) << " seed " << seed << "] failed: " << e.what() << std::endl;
  }
  out.dir = dir;
  return out;
}

inline std::vector<SeedOutcome> run_experiment(const ExperimentConfig& cfg, std::ostream* log = &std::cerr) {
  cfg.validate();
  std::vector<SeedOutcome> out;
  for (const auto seed : cfg.seeds) out.push_back(run_seed(cfg, seed, log));
  return out;
}

// ---------------------------------------------------------------------------
// Summary

inline std::vector<MetricRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kMetricsHeader)
    throw ParseError("'" + path.string() + "': unexpected header");
  std::vector<MetricRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 9) throw ParseError("'" + path.string() + "' row " + std::to_string(lineno) + ": expected 9 cells");
    auto num = [&](const std::string& c) -> double {
      if (c == "nan") return kNaN;
      const auto v = detail::parse_real(c);
      if (!v) throw ParseError("'" + path.string() + "' row " + std::to_string(lineno) + ": bad number '" + c + "'");
      return *v;
    };
    MetricRow r;
    r.method = cells[0];
    r.seed = static_cast<std::uint64_t>(num(cells[1]));
    r.t = static_cast<int>(num(cells[2]));
    r.ut_proxy = num(cells[3]);
    r.ut_gt = num(cells[4]);
    r.dpu = num(cells[5]);
    r.cfu = num(cells[6]);
    r.eff_ut = num(cells[7]);
    r.eff_dpu = num(cells[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

struct MeanStd {
  double mean = kNaN;
  double sd = kNaN;
};

/// Mean and population standard deviation of the finite entries.
inline MeanStd mean_std(std::span<const double> v) {
  std::vector<double> f;
  for (double x : v)
    if (std::isfinite(x)) f.push_back(x);
  if (f.empty()) return {};
  const double n = static_cast<double>(f.size());
  MeanStd out;
  out.mean = std::accumulate(f.begin(), f.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : f) ss += (x - out.mean) * (x - out.mean);
  out.sd = std::sqrt(ss / n);
  return out;
}

/// Temporal mean/TV of one column over the evaluated steps of [t1, t2].
inline TemporalStats window_stats(std::span<const MetricRow> rows, double MetricRow::*column, int t1, int t2) {
  if (rows.empty()) throw RangeError("window_stats: empty series");
  int lo = rows.front().t, hi = rows.front().t;
  for (const auto& r : rows) lo = std::min(lo, r.t), hi = std::max(hi, r.t);
  if (!(t1 < t2)) throw RangeError("window: need t1 < t2");
  if (t1 < lo || t2 > hi)
    throw RangeError("window [" + std::to_string(t1) + ", " + std::to_string(t2) + "] outside series [" +
                     std::to_string(lo) + ", " + std::to_string(hi) + "]");
  std::vector<double> vals;
  for (const auto& r : rows)
    if (r.t >= t1 && r.t <= t2 && std::isfinite(r.*column)) vals.push_back(r.*column);
  if (vals.empty()) return {kNaN, kNaN};
  const auto ms = mean_std(vals);
  return {ms.sd, ms.mean};
}

struct SummaryRow {
  std::string method;
  std::size_t seeds = 0;
  std::map<std::string, MeanStd> cells;  // column -> across-seed mean/std
};

inline const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols = {"eff_ut",    "eff_dpu", "ut_proxy_mu", "ut_proxy_tv", "ut_gt_mu",
                                                "ut_gt_tv",  "dpu_mu",  "dpu_tv",      "cfu_mu",      "cfu_tv"};
  return cols;
}

struct Summary {
  std::vector<SummaryRow> rows;
  std::vector<std::string> missing;  // seed directories without metrics
};

/// Collects every seed's metrics.csv under `run_dirs` and reduces them per
/// method: effective metrics at each seed's final step, temporal mean and TV
/// over [t1, t2], then mean and population std across seeds.
inline Summary summarize_runs(const std::vector<fs::path>& run_dirs, int t1, int t2) {
  std::map<std::string, std::vector<std::vector<MetricRow>>> per_method;
  Summary out;
  std::vector<fs::path> files;
  for (const auto& dir : run_dirs) {
    if (!fs::exists(dir)) {
      out.missing.push_back(dir.string());
      continue;
    }
    if (fs::is_regular_file(dir)) {
      files.push_back(dir);
      continue;
    }
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().filename() == "metrics.csv") files.push_back(entry.path());
      if (entry.is_directory() && entry.path().filename().string().rfind("seed_", 0) == 0 &&
          !fs::exists(entry.path() / "metrics.csv"))
        out.missing.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  std::sort(out.missing.begin(), out.missing.end());
  for (const auto& f : files) {
    auto rows = read_metrics_csv(f);
    if (rows.empty()) {
      out.missing.push_back(f.string());
      continue;
    }
    std::sort(rows.begin(), rows.end(), [](const MetricRow& a, const MetricRow& b) { return a.t < b.t; });
    per_method[rows.front().method].push_back(std::move(rows));
  }
  for (const auto& [method, seeds] : per_method) {
    SummaryRow row;
    row.method = method;
    row.seeds = seeds.size();
    std::map<std::string, std::vector<double>> vals;
    for (const auto& rows : seeds) {
      vals["eff_ut"].push_back(rows.back().eff_ut);
      vals["eff_dpu"].push_back(rows.back().eff_dpu);
      const std::pair<const char*, double MetricRow::*> temporal[] = {
          {"ut_proxy", &MetricRow::ut_proxy}, {"ut_gt", &MetricRow::ut_gt}, {"dpu", &MetricRow::dpu}, {"cfu", &MetricRow::cfu}};
      for (const auto& [name, col] : temporal) {
        const auto ts = window_stats(rows, col, t1, t2);
        vals[std::string(name) + "_mu"].push_back(ts.mean);
        vals[std::string(name) + "_tv"].push_back(ts.tv);
      }
    }
    for (const auto& col : summary_columns()) row.cells[col] = mean_std(vals[col]);
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline void write_summary_csv(std::ostream& out, const Summary& s) {
  out << "method,n_seeds";
  for (const auto& c : summary_columns()) out << ',' << c;
  out << '\n';
  for (const auto& r : s.rows) {
    out << r.method << ',' << r.seeds;
    for (const auto& c : summary_columns()) {
      const auto& ms = r.cells.at(c);
      out << ',' << (std::isnan(ms.mean) ? std::string("nan") : format_mean_std(ms.mean, ms.sd));
    }
    out << '\n';
  }
}

}  // namespace fairall
