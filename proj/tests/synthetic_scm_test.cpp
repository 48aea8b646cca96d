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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "fairall/metrics.hpp"
#include "fairall/synthetic_scm.hpp"

namespace fairall {
namespace {

TEST(Scm, ZeroNoiseSubstitution) {
  const auto d = scm_assemble(1, 1, ScmNoise{0.0, 0.0, 0.0, 0.0});
  EXPECT_EQ(d.k, 1.0);
  EXPECT_DOUBLE_EQ(d.lsat, 7.5);
  EXPECT_DOUBLE_EQ(d.gpa, 1.75);
  EXPECT_DOUBLE_EQ(d.fya, 2.3);
  EXPECT_EQ(d.y_tilde, 1);
  EXPECT_EQ(d.m, 1);
}

TEST(Scm, ReconstructionIdentitiesHoldExactly) {
  for (const auto& d : sample_population(2000, 4)) {
    ASSERT_TRUE(d.noise);
    EXPECT_EQ(d.k, d.y_sign + d.noise->k);
    EXPECT_EQ(d.lsat, 4.0 * d.k + 3.5 * d.s + d.noise->lsat);
    EXPECT_EQ(d.gpa, 0.75 * d.k + d.s + d.noise->gpa);
    EXPECT_EQ(d.fya, 1.3 * d.k + d.s + d.noise->fya);
    EXPECT_EQ(d.y_tilde, d.fya > 0.0 ? 1 : 0);
    EXPECT_EQ(d.m, (d.y_sign + 1) / 2);
  }
}

TEST(Scm, DeterministicPerSeed) {
  EXPECT_EQ(sample_population(50, 8), sample_population(50, 8));
  EXPECT_NE(sample_population(50, 8), sample_population(50, 9));
}

TEST(Scm, RejectsEmptyPopulation) { EXPECT_THROW(sample_population(0, 1), ConfigError); }

TEST(Scm, ProxyRateIsHalfBySymmetry) {
  const auto draws = sample_population(200000, 11);
  double pos = 0;
  for (const auto& d : draws) pos += d.y_tilde;
  const double p = pos / static_cast<double>(draws.size());
  EXPECT_NEAR(p, 0.5, 3.0 * std::sqrt(0.25 / static_cast<double>(draws.size())));
}

TEST(Scm, ProxyRateGivenPrivilegedGroupMatchesReference) {
  // Reference from 10^6 independent draws of the structural equations:
  // 0.661382 (standard error 4.7e-4); closed form 0.6612423.
  const auto draws = sample_population(1000000, 12);
  double n = 0, pos = 0;
  for (const auto& d : draws) {
    if (d.s != 1) continue;
    n += 1;
    pos += d.y_tilde;
  }
  const double p = pos / n;
  const double se = std::sqrt(0.6612423 * (1 - 0.6612423) / n);
  EXPECT_NEAR(p, 0.6612423, 3.0 * se + 4.7e-4);
}

TEST(Counterfactual, NullInterventionIsIdentity) {
  for (const auto& d : sample_population(100, 2)) EXPECT_EQ(counterfactual_of(d, d.s), d);
}

TEST(Counterfactual, ZeroNoiseFlip) {
  const auto d = scm_assemble(1, 1, ScmNoise{});
  const auto cf = counterfactual_of(d, -1);
  EXPECT_DOUBLE_EQ(cf.lsat, 0.5);
  EXPECT_DOUBLE_EQ(cf.gpa, -0.25);
  EXPECT_EQ(cf.k, d.k);
}

TEST(Counterfactual, InvolutionAndLinearShift) {
  for (const auto& d : sample_population(5000, 3)) {
    const auto cf = counterfactual_of(d, -d.s);
    EXPECT_EQ(counterfactual_of(cf, d.s), d);
    EXPECT_EQ(cf.k, d.k);
    EXPECT_EQ(cf.m, d.m);
    EXPECT_NEAR(d.lsat - cf.lsat, 3.5 * (d.s - cf.s), 1e-12);
    EXPECT_NEAR(std::abs(d.lsat - cf.lsat), 7.0, 1e-12);
  }
}

TEST(Counterfactual, RequiresNoiseAndValidGroup) {
  ScmDraw d = scm_assemble(1, 1, ScmNoise{});
  EXPECT_THROW(counterfactual_of(d, 0), ContractError);
  d.noise.reset();
  EXPECT_THROW(counterfactual_of(d, -1), ContractError);
}

TEST(Scm, ToExampleCarriesTruth) {
  const auto d = scm_assemble(-1, 1, ScmNoise{0.2, 0.0, 0.0, 0.0});
  const auto e = to_example(d);
  EXPECT_EQ(e.x, (std::vector<double>{d.lsat, d.gpa}));
  ASSERT_TRUE(e.truth);
  EXPECT_EQ(e.truth->m, 0);
  EXPECT_EQ(e.truth->k, d.k);
}

class OptimalPolicyTest : public ::testing::Test {
 protected:
  void SetUp() override {
    auto train = to_examples(sample_population(5000, 21));
    stats_ = standardize_fit(FeatureSchema::synthetic(), train);
    opt_ = fit_optimal_policies(5000, 22, stats_);
  }
  StandardizeStats stats_;
  OptimalPolicies opt_;
};

TEST_F(OptimalPolicyTest, FairPolicyWeightsTalentPositively) {
  // A brute-force (w, b) grid fit of y_tilde on K over 10^5 draws gives
  // w = 2.35, b = 0.0 (step 0.05).
  ASSERT_EQ(opt_.fair.scorer.layers.size(), 1u);
  const double w = opt_.fair.scorer.layers[0].weight[0];
  EXPECT_GT(w, 0.0);
  EXPECT_NEAR(w, 2.35, 0.35);
  EXPECT_NEAR(opt_.fair.scorer.layers[0].bias[0], 0.0, 0.2);
}

TEST_F(OptimalPolicyTest, FairPolicyHasZeroCounterfactualUnfairness) {
  const auto draws = sample_population(3000, 23);
  std::vector<Example> f, cf;
  for (const auto& d : draws) {
    f.push_back(to_example(d));
    cf.push_back(to_example(counterfactual_of(d, -d.s)));
  }
  stats_.apply(f);
  stats_.apply(cf);
  EXPECT_EQ(cfu_of_policy(opt_.fair, f, cf), 0.0);
  EXPECT_GT(cfu_of_policy(opt_.unfair, f, cf), 0.1);
}

}  // namespace
}  // namespace fairall
