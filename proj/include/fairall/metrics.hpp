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

// Policy metrics: expected utility, demographic-parity and counterfactual
// unfairness, temporal statistics over a window, effective (training-time)
// metrics, and a probe for sensitive information left in the latents.
//
// Probabilities are passed as plain vectors (one per record) so the same
// arithmetic serves every policy kind; `policy_probabilities` produces them
// exactly as at decision time.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fairall/approximator.hpp"
#include "fairall/common.hpp"
#include "fairall/dataset.hpp"
#include "fairall/fairvae.hpp"
#include "fairall/policies.hpp"

namespace fairall {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum class UtilityLabel { proxy, ground_truth };

/// pi(D=1 | record) for every record. Latent policies draw their samples from
/// a stream keyed on `seed` and the record's content, so the same record
/// always sees the same latent draws.
inline std::vector<double> policy_probabilities(const Policy& p, std::span<const Example> records,
                                                const FairVae* model, std::uint64_t seed) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& e : records)
    out.push_back(acceptance_probability(p, e.x, e.s, e.truth, model, record_seed(seed, e.x, e.s)));
  return out;
}

inline double utility_from_probabilities(std::span<const double> probs, std::span<const Example> records,
                                         UtilityLabel label, double cost) {
  if (probs.size() != records.size()) throw ShapeError("utility: probability/record count mismatch");
  if (records.empty()) throw ContractError("utility: empty test set");
  double acc = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    double y;
    if (label == UtilityLabel::proxy) {
      y = records[i].y_tilde;
    } else {
      if (!records[i].truth) throw ContractError("ground-truth utility requested on data without ground truth");
      y = records[i].truth->m;
    }
    acc += probs[i] * (y - cost);
  }
  return acc / static_cast<double>(records.size());
}

inline double dpu_from_probabilities(std::span<const double> probs, std::span<const int> s) {
  if (probs.size() != s.size()) throw ShapeError("dpu: probability/group count mismatch");
  double sum_pos = 0.0, sum_neg = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (s[i] == 1) {
      sum_pos += probs[i];
      ++n_pos;
    } else {
      sum_neg += probs[i];
      ++n_neg;
    }
  }
  if (n_pos == 0 || n_neg == 0) throw ContractError("dpu: both sensitive groups must be present");
  return std::abs(sum_pos / static_cast<double>(n_pos) - sum_neg / static_cast<double>(n_neg));
}

inline double dpu_from_probabilities(std::span<const double> probs, std::span<const Example> records) {
  std::vector<int> s;
  s.reserve(records.size());
  for (const auto& e : records) s.push_back(e.s);
  return dpu_from_probabilities(probs, s);
}

inline double cfu_from_probabilities(std::span<const double> factual, std::span<const double> counterfactual) {
  if (factual.size() != counterfactual.size()) throw ContractError("cfu: factual/counterfactual lists differ in size");
  if (factual.empty()) throw ContractError("cfu: no pairs");
  double acc = 0.0;
  for (std::size_t i = 0; i < factual.size(); ++i) acc += std::abs(factual[i] - counterfactual[i]);
  return acc / static_cast<double>(factual.size());
}

inline double utility_of_policy(const Policy& p, std::span<const Example> test, UtilityLabel label, double cost,
                                const FairVae* model = nullptr, std::uint64_t seed = 0) {
  return utility_from_probabilities(policy_probabilities(p, test, model, seed), test, label, cost);
}

inline double dpu_of_policy(const Policy& p, std::span<const Example> test, const FairVae* model = nullptr,
                            std::uint64_t seed = 0) {
  return dpu_from_probabilities(policy_probabilities(p, test, model, seed), test);
}

/// Counterfactual probabilities reuse the latent draws of their factual
/// partner (common random numbers), so a policy that ignores S scores 0.
inline std::vector<double> counterfactual_probabilities(const Policy& p, std::span<const Example> factual,
                                                        std::span<const Example> counterfactual,
                                                        const FairVae* model, std::uint64_t seed) {
  if (factual.size() != counterfactual.size()) throw ContractError("cfu: factual/counterfactual lists differ in size");
  std::vector<double> out;
  out.reserve(factual.size());
  for (std::size_t i = 0; i < factual.size(); ++i) {
    const auto& cf = counterfactual[i];
    out.push_back(acceptance_probability(p, cf.x, cf.s, cf.truth, model,
                                         record_seed(seed, factual[i].x, factual[i].s)));
  }
  return out;
}

inline double cfu_of_policy(const Policy& p, std::span<const Example> factual, std::span<const Example> counterfactual,
                            const FairVae* model = nullptr, std::uint64_t seed = 0) {
  return cfu_from_probabilities(policy_probabilities(p, factual, model, seed),
                                counterfactual_probabilities(p, factual, counterfactual, model, seed));
}

/// Test-set metrics of one policy at one step. Ground-truth utility and CFU
/// are NaN when unavailable.
struct TestMetrics {
  double ut_proxy = kNaN;
  double ut_gt = kNaN;
  double dpu = kNaN;
  double cfu = kNaN;
};

inline TestMetrics evaluate_policy(const Policy& p, std::span<const Example> test,
                                   std::span<const Example> counterfactual, double cost, const FairVae* model,
                                   std::uint64_t seed) {
  TestMetrics m;
  const auto probs = policy_probabilities(p, test, model, seed);
  m.ut_proxy = utility_from_probabilities(probs, test, UtilityLabel::proxy, cost);
  const bool has_truth = std::all_of(test.begin(), test.end(), [](const Example& e) { return e.truth.has_value(); });
  if (has_truth) m.ut_gt = utility_from_probabilities(probs, test, UtilityLabel::ground_truth, cost);
  m.dpu = dpu_from_probabilities(probs, test);
  if (!counterfactual.empty())
    m.cfu = cfu_from_probabilities(probs, counterfactual_probabilities(p, test, counterfactual, model, seed));
  return m;
}

// ---------------------------------------------------------------------------
// Temporal and effective statistics

struct TemporalStats {
  double tv = 0.0;  // population standard deviation over the window
  double mean = 0.0;
};

/// Mean and standard deviation of `series` over the inclusive window
/// [t1, t2], where series[i] belongs to step first_t + i. The divisor is the
/// number of terms.
inline TemporalStats temporal_stats(std::span<const double> series, int t1, int t2, int first_t = 1) {
  if (!(t1 < t2)) throw RangeError("temporal_stats: need t1 < t2");
  const long last_t = first_t + static_cast<long>(series.size()) - 1;
  if (t1 < first_t || t2 > last_t)
    throw RangeError("temporal_stats: window [" + std::to_string(t1) + ", " + std::to_string(t2) +
                     "] outside series [" + std::to_string(first_t) + ", " + std::to_string(last_t) + "]");
  const auto window = series.subspan(static_cast<std::size_t>(t1 - first_t), static_cast<std::size_t>(t2 - t1 + 1));
  const double n = static_cast<double>(window.size());
  TemporalStats out;
  out.mean = std::accumulate(window.begin(), window.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : window) ss += (v - out.mean) * (v - out.mean);
  out.tv = std::sqrt(ss / n);
  return out;
}

struct EffectiveStats {
  double utility = 0.0;
  double dpu = 0.0;
};

/// Utility and acceptance-rate gap realized on the training-time decisions
/// of steps 1..t (history[0] is step 1). A step in which one group is absent
/// contributes a zero gap.
inline EffectiveStats effective_stats(std::span<const DecidedBatch> history, std::size_t t, double cost) {
  if (t < 1 || t > history.size())
    throw RangeError("effective_stats: t=" + std::to_string(t) + " outside history of " +
                     std::to_string(history.size()) + " steps");
  double utility = 0.0, gap_sum = 0.0;
  std::size_t candidates = 0;
  for (std::size_t k = 0; k < t; ++k) {
    std::size_t n_pos = 0, n_neg = 0, a_pos = 0, a_neg = 0;
    for (const auto& r : history[k].records) {
      ++candidates;
      const bool acc = r.labeled();
      if (acc) utility += *r.y_tilde() - cost;
      if (r.s() == 1) {
        ++n_pos;
        a_pos += acc;
      } else {
        ++n_neg;
        a_neg += acc;
      }
    }
    if (n_pos > 0 && n_neg > 0)
      gap_sum += std::abs(static_cast<double>(a_pos) / static_cast<double>(n_pos) -
                          static_cast<double>(a_neg) / static_cast<double>(n_neg));
  }
  EffectiveStats out;
  out.utility = candidates ? utility / static_cast<double>(candidates) : 0.0;
  out.dpu = gap_sum / static_cast<double>(t);
  return out;
}

// ---------------------------------------------------------------------------
// Latent probe

/// Balanced accuracy of a logistic probe predicting s from z, trained on a
/// seeded half of the rows and scored on the other half.
inline double sensitive_probe(const std::vector<std::vector<double>>& z, std::span<const int> s, std::uint64_t seed) {
  if (z.size() != s.size()) throw ShapeError("probe: latent/group count mismatch");
  std::vector<std::size_t> order(z.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "probe-split"));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t half = order.size() / 2;
  std::vector<std::vector<double>> train_z;
  std::vector<int> train_y;
  bool tr_pos = false, tr_neg = false, te_pos = false, te_neg = false;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int y = s[order[i]] == 1 ? 1 : 0;
    if (i < half) {
      train_z.push_back(z[order[i]]);
      train_y.push_back(y);
      (y ? tr_pos : tr_neg) = true;
    } else {
      (y ? te_pos : te_neg) = true;
    }
  }
  if (!tr_pos || !tr_neg || !te_pos || !te_neg) throw ContractError("probe: both groups needed in each half");
  const auto probe = fit_logistic(train_z, train_y, derive_seed(seed, "probe-init"), 300, 0.05);
  std::size_t tp = 0, pos = 0, tn = 0, neg = 0;
  for (std::size_t i = half; i < order.size(); ++i) {
    const bool predicted = mlp_apply(probe, z[order[i]])[0] > 0.0;
    if (s[order[i]] == 1) {
      ++pos;
      tp += predicted;
    } else {
      ++neg;
      tn += !predicted;
    }
  }
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) + static_cast<double>(tn) / static_cast<double>(neg));
}

/// Probe on one latent draw per record from `model`.
inline double latent_sensitive_probe(const FairVae& model, std::span<const Example> records, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "probe-latents"));
  std::vector<std::vector<double>> z;
  std::vector<int> s;
  for (const auto& e : records) {
    z.push_back(sample_latent(model, e.x, e.s, rng));
    s.push_back(e.s);
  }
  return sensitive_probe(z, s, seed);
}

// ---------------------------------------------------------------------------
// Per-step rows

struct MetricRow {
  std::string method;
  std::uint64_t seed = 0;
  int t = 0;
  double ut_proxy = kNaN;
  double ut_gt = kNaN;
  double dpu = kNaN;
  double cfu = kNaN;
  double eff_ut = kNaN;
  double eff_dpu = kNaN;
};

inline constexpr const char* kMetricsHeader = "method,seed,t,ut_proxy,ut_gt,dpu,cfu,eff_ut,eff_dpu";

inline std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

inline void write_metric_row(std::ostream& out, const MetricRow& r) {
  out << r.method << ',' << r.seed << ',' << r.t << ',' << format_metric(r.ut_proxy) << ','
      << format_metric(r.ut_gt) << ',' << format_metric(r.dpu) << ',' << format_metric(r.cfu) << ','
      << format_metric(r.eff_ut) << ',' << format_metric(r.eff_dpu) << '\n';
}

/// "m.m (s.s)" with both values scaled by 100.
inline std::string format_mean_std(double mean, double sd) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << mean * 100.0 << " (" << sd * 100.0 << ")";
  return os.str();
}

}  // namespace fairall
