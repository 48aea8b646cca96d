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

// Law-school structural causal model:
//
//   y    = 2 m - 1,            m ~ Bernoulli(0.5)
//   k    ~ N(y, 0.5)
//   lsat ~ N(4 k + 3.5 s, 0.1)
//   gpa  ~ N(0.75 k + s, 0.01)
//   fya  ~ N(1.3 k + s, 0.05),  y_tilde = [fya > 0]
//
// with s = +-1 equiprobable. The second Normal argument is the standard
// deviation. All exogenous noises are stored so counterfactuals are exact.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "fairall/approximator.hpp"
#include "fairall/common.hpp"
#include "fairall/dataset.hpp"
#include "fairall/policies.hpp"

namespace fairall {

struct ScmNoise {
  double k = 0.0;  // k - y
  double lsat = 0.0;
  double gpa = 0.0;
  double fya = 0.0;
};

struct ScmDraw {
  int y_sign = 1;
  int m = 1;
  double k = 0.0;
  int s = 1;
  std::optional<ScmNoise> noise;
  double lsat = 0.0;
  double gpa = 0.0;
  double fya = 0.0;
  int y_tilde = 0;

  bool operator==(const ScmDraw&) const = default;
};

inline bool operator==(const ScmNoise& a, const ScmNoise& b) {
  return a.k == b.k && a.lsat == b.lsat && a.gpa == b.gpa && a.fya == b.fya;
}

struct ScmScales {
  double k = 0.5;
  double lsat = 0.1;
  double gpa = 0.01;
  double fya = 0.05;
};

/// Replays the structural equations for (y, noise, s).
inline ScmDraw scm_assemble(int y_sign, int s, const ScmNoise& n) {
  ScmDraw d;
  d.y_sign = y_sign;
  d.m = (y_sign + 1) / 2;
  d.s = s;
  d.noise = n;
  d.k = y_sign + n.k;
  d.lsat = 4.0 * d.k + 3.5 * s + n.lsat;
  d.gpa = 0.75 * d.k + s + n.gpa;
  d.fya = 1.3 * d.k + s + n.fya;
  d.y_tilde = d.fya > 0.0 ? 1 : 0;
  return d;
}

inline std::vector<ScmDraw> sample_population(std::size_t n, std::uint64_t seed, const ScmScales& sc = {}) {
  if (n < 1) throw ConfigError("sample_population: n must be >= 1");
  Rng rng(seed);
  std::vector<ScmDraw> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = bernoulli(rng, 0.5) ? 1 : -1;
    const int s = bernoulli(rng, 0.5) ? 1 : -1;
    ScmNoise noise;
    noise.k = sc.k * standard_normal(rng);
    noise.lsat = sc.lsat * standard_normal(rng);
    noise.gpa = sc.gpa * standard_normal(rng);
    noise.fya = sc.fya * standard_normal(rng);
    out.push_back(scm_assemble(y, s, noise));
  }
  return out;
}

/// Abduction (noises are stored), action (s := s_prime), prediction.
inline ScmDraw counterfactual_of(const ScmDraw& d, int s_prime) {
  if (!d.noise) throw ContractError("counterfactual_of: draw carries no exogenous noise");
  if (s_prime != 1 && s_prime != -1) throw ContractError("counterfactual_of: s' must be +1 or -1");
  return scm_assemble(d.y_sign, s_prime, *d.noise);
}

inline Example to_example(const ScmDraw& d) {
  Example e;
  e.x = {d.lsat, d.gpa};
  e.s = d.s;
  e.y_tilde = d.y_tilde;
  e.truth = SyntheticTruth{d.m, d.k};
  return e;
}

inline std::vector<Example> to_examples(std::span<const ScmDraw> draws) {
  std::vector<Example> out;
  out.reserve(draws.size());
  for (const auto& d : draws) out.push_back(to_example(d));
  return out;
}

struct OptimalPolicies {
  Policy fair;    // decides from K
  Policy unfair;  // decides from (standardized lsat, gpa, s)
};

/// Fits logistic approximations of p(y_tilde | K) and p(y_tilde | X, S) on
/// `n_train` fresh draws. The unfair policy reads features standardized with
/// `stats` (pass the experiment's transform). Both decide by thresholding the
/// fitted posterior at 0.5.
inline OptimalPolicies fit_optimal_policies(std::size_t n_train, std::uint64_t seed, const StandardizeStats& stats) {
  const auto draws = sample_population(n_train, derive_seed(seed, "optimal-data"));
  std::vector<std::vector<double>> fair_in, unfair_in;
  std::vector<int> y;
  for (const auto& d : draws) {
    Example e = to_example(d);
    stats.apply(e);
    fair_in.push_back({d.k});
    unfair_in.push_back(feature_input(e.x, e.s));
    y.push_back(d.y_tilde);
  }
  OptimalPolicies out;
  out.fair.kind = PolicyKind::optimal;
  out.fair.oracle_input = OracleInput::talent;
  out.fair.thresholded = true;
  out.fair.scorer = fit_logistic(fair_in, y, derive_seed(seed, "optimal-fair"));
  out.unfair.kind = PolicyKind::optimal;
  out.unfair.oracle_input = OracleInput::features;
  out.unfair.thresholded = true;
  out.unfair.scorer = fit_logistic(unfair_in, y, derive_seed(seed, "optimal-unfair"));
  return out;
}

}  // namespace fairall
