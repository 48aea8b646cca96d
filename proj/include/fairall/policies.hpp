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

// Decision-makers: biased initial policies, latent-space policies, and the
// logistic baselines. Every acceptance probability is clamped to
// [1e-4, 1 - 1e-4] and is exactly the number recorded as propensity.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairall/approximator.hpp"
#include "fairall/common.hpp"
#include "fairall/dataset.hpp"
#include "fairall/fairvae.hpp"

namespace fairall {

enum class PolicyKind { initial, latent, unfairlog, fairlog, fairlab, optimal };

inline std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::initial: return "initial";
    case PolicyKind::latent: return "latent";
    case PolicyKind::unfairlog: return "unfairlog";
    case PolicyKind::fairlog: return "fairlog";
    case PolicyKind::fairlab: return "fairlab";
    case PolicyKind::optimal: return "optimal";
  }
  return "?";
}

/// What an optimal reference policy reads.
enum class OracleInput { talent, features };

struct GroupRates {
  double positive = 0.5;  // p(d=1 | S=+1)
  double negative = 0.5;  // p(d=1 | S=-1)
};

struct Policy {
  PolicyKind kind = PolicyKind::initial;
  GroupRates rates;            // initial
  ParamBundle scorer;          // everything else; outputs one logit
  OracleInput oracle_input = OracleInput::features;
  bool thresholded = false;    // optimal policies decide deterministically
  int latent_samples = 10;     // latent policies average over encoder draws

  bool reads_latent() const { return kind == PolicyKind::latent || kind == PolicyKind::fairlab; }
};

enum class InitialPolicyKind { harsh, leni };

/// Group-conditional Bernoulli policies with the per-group acceptance rates
/// of the reference initial policies. S=1 in the source table is s=+1.
inline Policy make_initial_policy(InitialPolicyKind kind, const std::string& dataset) {
  struct Row {
    const char* name;
    GroupRates leni, harsh;
  };
  static const Row table[] = {
      {"synthetic", {0.7642, 0.3297}, {0.1581, 0.0979}},
      {"compas", {0.7664, 0.3274}, {0.1519, 0.0705}},
      {"credit", {0.5846, 0.2909}, {0.2123, 0.1091}},
      {"meps", {0.7826, 0.2724}, {0.1925, 0.0617}},
  };
  for (const auto& row : table) {
    if (dataset == row.name) {
      Policy p;
      p.kind = PolicyKind::initial;
      p.rates = kind == InitialPolicyKind::harsh ? row.harsh : row.leni;
      return p;
    }
  }
  throw ConfigError("unknown dataset key '" + dataset + "' for initial policy");
}

inline Policy make_latent_policy(const FairVae& model, PolicyKind kind, std::uint64_t seed) {
  if (kind != PolicyKind::latent && kind != PolicyKind::fairlab) throw ConfigError("not a latent policy kind");
  Policy p;
  p.kind = kind;
  p.scorer = mlp_init(model.clf_hidden, model.latent_dim, 1, seed);
  return p;
}

/// Logistic-style baseline over (x, s).
inline Policy make_feature_policy(PolicyKind kind, std::span<const std::size_t> hidden, std::size_t x_dim,
                                  std::uint64_t seed) {
  if (kind != PolicyKind::unfairlog && kind != PolicyKind::fairlog) throw ConfigError("not a baseline policy kind");
  Policy p;
  p.kind = kind;
  p.scorer = mlp_init(hidden, x_dim + 1, 1, seed);
  return p;
}

inline std::vector<double> feature_input(std::span<const double> x, int s) {
  std::vector<double> in(x.begin(), x.end());
  in.push_back(static_cast<double>(s));
  return in;
}

/// Acceptance probability of one candidate. `sample_seed` drives the latent
/// draws of latent policies; other kinds ignore it.
inline double acceptance_probability(const Policy& p, std::span<const double> x, int s,
                                     const std::optional<SyntheticTruth>& truth, const FairVae* model,
                                     std::uint64_t sample_seed) {
  switch (p.kind) {
    case PolicyKind::initial: return clamp_probability(s == 1 ? p.rates.positive : p.rates.negative);
    case PolicyKind::unfairlog:
    case PolicyKind::fairlog: return clamp_probability(sigmoid(mlp_apply(p.scorer, feature_input(x, s))[0]));
    case PolicyKind::latent:
    case PolicyKind::fairlab: {
      if (!model) throw ContractError("latent policy evaluated without a representation model");
      Rng rng(sample_seed);
      double acc = 0.0;
      for (int k = 0; k < p.latent_samples; ++k) {
        const auto z = sample_latent(*model, x, s, rng);
        acc += sigmoid(mlp_apply(p.scorer, z)[0]);
      }
      return clamp_probability(acc / p.latent_samples);
    }
    case PolicyKind::optimal: {
      double prob;
      if (p.oracle_input == OracleInput::talent) {
        if (!truth) throw ContractError("talent-based policy needs synthetic ground truth");
        const double in[1] = {truth->k};
        prob = sigmoid(mlp_apply(p.scorer, in)[0]);
      } else {
        prob = sigmoid(mlp_apply(p.scorer, feature_input(x, s))[0]);
      }
      if (p.thresholded) prob = prob > 0.5 ? 1.0 : 0.0;
      return clamp_probability(prob);
    }
  }
  throw ContractError("unknown policy kind");
}

inline std::uint64_t record_seed(std::uint64_t seed, std::span<const double> x, int s) {
  return hash_values(seed ^ static_cast<std::uint64_t>(s + 2), x);
}

struct DecidedBatch {
  int t = 0;
  std::vector<Record> records;

  std::size_t accepted() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.labeled() ? 1 : 0;
    return n;
  }
};

/// d ~ Bernoulli(pi); the propensity is the probability actually used, and
/// the proxy label is revealed only on acceptance.
inline DecidedBatch decide_batch(const Policy& p, const CandidateBatch& batch, const FairVae* model, double cost,
                                 std::uint64_t seed) {
  if (p.reads_latent() && !model) throw ContractError("decide_batch: latent policy without model");
  Rng rng(seed);
  DecidedBatch out;
  out.t = batch.t;
  out.records.reserve(batch.candidates.size());
  for (const auto& e : batch.candidates) {
    const std::uint64_t draw_seed = rng();
    const double prob = acceptance_probability(p, e.x, e.s, e.truth, model, draw_seed);
    const bool accept = uniform01(rng) < prob;
    out.records.push_back(Record::decided(e.x, e.s, accept, prob,
                                          accept ? std::optional<int>(e.y_tilde) : std::nullopt, cost, e.truth));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Latent-policy training

enum class LatentVariant { dec, clf, label };

inline LatentVariant parse_latent_variant(const std::string& s) {
  if (s == "dec") return LatentVariant::dec;
  if (s == "clf") return LatentVariant::clf;
  if (s == "label") return LatentVariant::label;
  throw ConfigError("unknown latent policy variant '" + s + "'");
}

/// Mean cost-sensitive cross-entropy of a scorer over (input, target,
/// weight) triples; weights are inverse propensities (1 when no IPS).
inline double policy_xent_loss(const ParamBundle& scorer, std::span<const std::vector<double>> inputs,
                               std::span<const int> targets, std::span<const double> inv_propensity, double cost,
                               GradBundle* grads) {
  if (inputs.size() != targets.size() || inputs.size() != inv_propensity.size())
    throw ShapeError("policy loss: input/target/weight length mismatch");
  if (inputs.empty()) return 0.0;
  const double n = static_cast<double>(inputs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto trace = mlp_forward(scorer, inputs[i]);
    double d_logit = 0.0;
    total += cost_sensitive_xent(trace.output()[0], targets[i], cost, 1.0 / inv_propensity[i], &d_logit);
    if (grads) {
      const double d_arr[1] = {d_logit / n};
      mlp_backward(scorer, trace, d_arr, *grads);
    }
  }
  return total / n;
}

/// Training set for a latent policy: one z per record plus a binary target.
struct LatentTrainingSet {
  std::vector<std::vector<double>> z;
  std::vector<int> target;
  std::vector<double> inv_propensity;
};

inline LatentTrainingSet latent_training_set(const FairVae& model, std::span<const Record> records,
                                             LatentVariant variant, Rng& rng) {
  if (!model.semi_supervised) throw ContractError("latent policy training needs the semi-supervised model");
  LatentTrainingSet set;
  for (const auto& r : records) {
    if (variant == LatentVariant::label && !r.labeled()) continue;
    const int u = r.labeled() ? r.u_binary() : (bernoulli(rng, classify(model, r.x(), r.s())) ? 1 : 0);
    auto z = sample_from(encode(model, r.x(), r.s(), u), rng);
    int target = 0;
    double w = 1.0;
    switch (variant) {
      case LatentVariant::dec: target = bernoulli(rng, *decode(model, z, r.s()).utility_prob) ? 1 : 0; break;
      case LatentVariant::clf: target = bernoulli(rng, classify(model, r.x(), r.s())) ? 1 : 0; break;
      case LatentVariant::label:
        target = r.u_binary();
        w = 1.0 / clamp_probability(*r.propensity());
        break;
    }
    set.z.push_back(std::move(z));
    set.target.push_back(target);
    set.inv_propensity.push_back(w);
  }
  return set;
}

/// Refreshes a latent policy on the records of one step: `epochs` passes of
/// three mini-batches each. Returns the mean loss of the final epoch.
inline double train_policy_from_latent(Policy& policy, const FairVae& model, std::span<const Record> records,
                                       LatentVariant variant, int epochs, double lr, double cost, Rng& rng) {
  if (!policy.reads_latent()) throw ContractError("train_policy_from_latent: policy does not read latents");
  if (policy.scorer.in_dim() != model.latent_dim) throw ShapeError("latent policy arity != latent_dim");
  const auto set = latent_training_set(model, records, variant, rng);
  if (set.z.empty()) {
    if (variant == LatentVariant::label) throw ContractError("label variant needs at least one labeled record");
    return 0.0;
  }
  const std::size_t n = set.z.size();
  const std::size_t mb = (n + 2) / 3;
  double last = 0.0;
  for (int e = 0; e < epochs; ++e) {
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t len = std::min(mb, n - start);
      auto g = policy.scorer.zero_grad();
      epoch_loss += policy_xent_loss(policy.scorer, std::span(set.z).subspan(start, len),
                                     std::span(set.target).subspan(start, len),
                                     std::span(set.inv_propensity).subspan(start, len), cost, &g) *
                    static_cast<double>(len);
      adam_step(policy.scorer, g, lr);
    }
    last = epoch_loss / static_cast<double>(n);
  }
  return last;
}

// ---------------------------------------------------------------------------
// Logistic baselines

struct BaselineLoss {
  double value = 0.0;
  double penalty = 0.0;  // DPU on the full batch (before lambda)
  bool penalty_skipped = false;
};

/// Mean IPS cost-sensitive cross-entropy on labeled records plus
/// lambda * |mean pi(S=+1) - mean pi(S=-1)| over the full batch.
inline BaselineLoss baseline_loss(const Policy& p, std::span<const Record> labeled, std::span<const Record> full,
                                  double cost, double lambda, GradBundle* grads) {
  BaselineLoss out;
  if (!labeled.empty()) {
    std::vector<std::vector<double>> in;
    std::vector<int> y;
    std::vector<double> w;
    for (const auto& r : labeled) {
      if (!r.labeled()) throw ContractError("baseline: unlabeled record in labeled batch");
      in.push_back(feature_input(r.x(), r.s()));
      y.push_back(r.u_binary());
      w.push_back(1.0 / clamp_probability(*r.propensity()));
    }
    out.value = policy_xent_loss(p.scorer, in, y, w, cost, grads);
  }
  if (lambda == 0.0 || full.empty()) return out;

  std::size_t n_pos = 0, n_neg = 0;
  for (const auto& r : full) (r.s() == 1 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) {
    out.penalty_skipped = true;
    return out;
  }
  std::vector<ForwardTrace> traces;
  traces.reserve(full.size());
  double mean_pos = 0.0, mean_neg = 0.0;
  for (const auto& r : full) {
    traces.push_back(mlp_forward(p.scorer, feature_input(r.x(), r.s())));
    const double prob = sigmoid(traces.back().output()[0]);
    if (r.s() == 1) mean_pos += prob / static_cast<double>(n_pos);
    else mean_neg += prob / static_cast<double>(n_neg);
  }
  const double gap = mean_pos - mean_neg;
  out.penalty = std::abs(gap);
  out.value += lambda * out.penalty;
  if (grads && gap != 0.0) {
    const double sign = gap > 0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < full.size(); ++i) {
      const double prob = sigmoid(traces[i].output()[0]);
      const double denom = full[i].s() == 1 ? static_cast<double>(n_pos) : -static_cast<double>(n_neg);
      const double d_arr[1] = {lambda * sign * prob * (1.0 - prob) / denom};
      mlp_backward(p.scorer, traces[i], d_arr, *grads);
    }
  }
  return out;
}

/// One Adam step of UnfairLog / FairLog. lambda = 0 gives UnfairLog.
inline BaselineLoss baseline_update(Policy& p, std::span<const Record> labeled, std::span<const Record> full,
                                    double cost, double lambda, double lr) {
  if (p.kind != PolicyKind::unfairlog && p.kind != PolicyKind::fairlog)
    throw ContractError("baseline_update: policy is not a logistic baseline");
  auto g = p.scorer.zero_grad();
  const auto out = baseline_loss(p, labeled, full, cost, p.kind == PolicyKind::fairlog ? lambda : 0.0, &g);
  if (out.penalty_skipped) std::cerr << "warning: fairness penalty skipped, batch has a single group\n";
  if (!labeled.empty() || out.penalty != 0.0) adam_step(p.scorer, g, lr);
  return out;
}

/// One Adam step of the labeled-only VAE with IPS-weighted ELBO.
inline double fairlab_update(FairVae& model, std::span<const Record> labeled, Rng& rng, double lr) {
  if (labeled.empty()) return 0.0;
  auto g = FairVaeGrads::zeros_like(model);
  const double j = ips_labeled_objective(model, labeled, rng, &g);
  apply_update(model, g, lr);
  return j;
}

}  // namespace fairall
