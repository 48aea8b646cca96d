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

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "fairall/fairall.hpp"

namespace fairall::testing {

/// Norm-based relative error between analytic gradients and central
/// differences of `loss` over every parameter of `bundles`.
inline double gradient_rel_error(const std::vector<ParamBundle*>& bundles, const std::vector<const GradBundle*>& grads,
                                 const std::function<double()>& loss, double h = 1e-3) {
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t b = 0; b < bundles.size(); ++b) {
    const std::size_t n = bundles[b]->parameter_count();
    for (std::size_t i = 0; i < n; ++i) {
      double& p = bundles[b]->flat(i);
      const double saved = p;
      p = saved + h;
      const double up = loss();
      p = saved - h;
      const double down = loss();
      p = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = flat_at(*grads[b], i);
      diff2 += (numeric - analytic) * (numeric - analytic);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
  }
  return std::sqrt(diff2) / std::max(std::sqrt(a2) + std::sqrt(n2), 1e-12);
}

/// Mixed-type layout used by the gradient checks: two reals, one binary,
/// one categorical of arity 3.
inline FeatureSchema toy_schema() {
  FeatureSchema s;
  s.features = {{"a", FeatureKind::real, {}},
                {"b", FeatureKind::count, {}},
                {"c", FeatureKind::binary, {"0", "1"}},
                {"d", FeatureKind::categorical, {"x", "y", "z"}}};
  s.sensitive_column = "s";
  s.sensitive_positive = "1";
  s.sensitive_negative = "-1";
  s.proxy_column = "y";
  s.proxy_positive = "1";
  s.proxy_negative = "0";
  return s;
}

inline VaeHyper toy_hyper() {
  VaeHyper h;
  h.vae_hidden = {6, 5};
  h.latent_dim = 2;
  h.clf_hidden = {4, 3};
  h.beta = 0.7;
  h.alpha = 2.0;
  h.cost = 0.5;
  h.unlabeled_samples = 4;
  h.kl_samples = 8;
  return h;
}

inline std::vector<double> toy_x(double a, double b, int c, int cat) {
  std::vector<double> x = {a, b, static_cast<double>(c), 0.0, 0.0, 0.0};
  x[3 + cat] = 1.0;
  return x;
}

}  // namespace fairall::testing
