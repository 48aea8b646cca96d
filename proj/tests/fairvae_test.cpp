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

#include "fairall/fairvae.hpp"
#include "property_suite.hpp"
#include "test_util.hpp"

namespace fairall {
namespace {

using testing::toy_hyper;
using testing::toy_schema;
using testing::toy_x;

void zero_all(ParamBundle& p) {
  for (auto& l : p.layers) {
    std::fill(l.weight.begin(), l.weight.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

FairVae zero_model() {
  auto m = make_phase2_vae(FeatureLayout(toy_schema()), toy_hyper(), 1);
  zero_all(m.encoder);
  zero_all(m.decoder);
  zero_all(m.classifier);
  return m;
}

std::vector<Record> toy_labeled() {
  return {Record::decided(toy_x(0.4, 1.0, 1, 0), 1, true, 0.7, 1, 0.5),
          Record::decided(toy_x(-1.1, 0.0, 0, 2), -1, true, 0.3, 0, 0.5),
          Record::decided(toy_x(0.2, 2.0, 1, 1), -1, true, 0.55, 1, 0.5)};
}

std::vector<Record> toy_unlabeled() {
  return {Record::decided(toy_x(1.3, 3.0, 0, 1), 1, false, 0.6, std::nullopt, 0.5),
          Record::decided(toy_x(-0.5, 1.0, 1, 2), -1, false, 0.2, std::nullopt, 0.5)};
}

TEST(Heads, ZeroWeightsGiveNeutralDistributions) {
  const auto m = zero_model();
  const double z[] = {0.3, -2.0};
  const auto h = decode(m, z, 1);
  ASSERT_EQ(h.features.size(), 4u);
  EXPECT_EQ(h.features[0][0], 0.0);
  EXPECT_EQ(h.features[1][0], 0.0);
  EXPECT_DOUBLE_EQ(h.features[2][0], 0.5);
  for (double p : h.features[3]) EXPECT_DOUBLE_EQ(p, 1.0 / 3.0);
  ASSERT_TRUE(h.utility_prob);
  EXPECT_DOUBLE_EQ(*h.utility_prob, 0.5);
  EXPECT_DOUBLE_EQ(classify(m, toy_x(1, 2, 0, 0), -1), 0.5);
}

TEST(Heads, Phase1ModelHasNoUtilityHead) {
  const auto m = make_phase1_vae(FeatureLayout(toy_schema()), toy_hyper(), 2);
  const double z[] = {0.0, 0.0};
  EXPECT_FALSE(decode(m, z, 1).utility_prob);
  EXPECT_THROW(classify(m, toy_x(0, 0, 0, 0), 1), ContractError);
  EXPECT_THROW(encode(m, toy_x(0, 0, 0, 0), 1, 1), ShapeError);
}

TEST(Kl, StandardNormalClosedForm) {
  const double mu[] = {1.0}, lv[] = {0.0};
  EXPECT_DOUBLE_EQ(gaussian_kl(mu, lv), 0.5);
  for (double m : {-1.5, 0.0, 0.7, 2.0}) {
    for (double sigma : {0.25, 1.0, 3.0}) {
      const double mu1[] = {m}, lv1[] = {2.0 * std::log(sigma)};
      const double expected = -std::log(sigma) + 0.5 * (sigma * sigma + m * m) - 0.5;
      EXPECT_NEAR(gaussian_kl(mu1, lv1), expected, 1e-14);
    }
  }
}

TEST(MixtureKl, IdenticalStandardComponentsAreExactlyZero) {
  const double mu[] = {0.0, 0.0}, sd[] = {1.0, 1.0};
  EXPECT_NEAR(mc_kl_mixture(mu, sd, mu, sd, 0.3, 0.7, 1000, 4), 0.0, 1e-12);
}

TEST(MixtureKl, SingleComponentsMatchClosedForm) {
  const int n = 100000;
  {
    // Shifted unit Gaussian: KL = 0.5 and f has unit variance.
    const double mu[] = {1.0, 0.0}, sd[] = {1.0, 1.0};
    EXPECT_NEAR(mc_kl_mixture(mu, sd, mu, sd, 0.5, 0.5, n, 5), 0.5, 3.0 / std::sqrt(n));
  }
  {
    // N(0, 4): KL = 2 - 0.5 - ln 2; f = 1.5 chi2 - ln 2 has sd sqrt(4.5).
    const double mu[] = {0.0}, sd[] = {2.0}, other_mu[] = {9.0}, other_sd[] = {0.1};
    EXPECT_NEAR(mc_kl_mixture(mu, sd, other_mu, other_sd, 1.0, 0.0, n, 6), 1.5 - std::log(2.0),
                3.0 * std::sqrt(4.5) / std::sqrt(n));
  }
}

TEST(MixtureKl, SymmetricMixtureMatchesQuadrature) {
  auto normal = [](double x, double m) { return std::exp(-0.5 * (x - m) * (x - m)) / std::sqrt(2.0 * M_PI); };
  double kl = 0.0;
  const double h = 1e-4;
  for (double x = -14.0; x <= 14.0; x += h) {
    const double q = 0.5 * normal(x, -1.0) + 0.5 * normal(x, 1.0);
    if (q > 0) kl += q * std::log(q / normal(x, 0.0)) * h;
  }
  const double mu0[] = {-1.0}, mu1[] = {1.0}, sd[] = {1.0};
  const int n = 100000;
  EXPECT_NEAR(mc_kl_mixture(mu0, sd, mu1, sd, 0.5, 0.5, n, 7), kl, 3.0 / std::sqrt(n));
}

TEST(MixtureKl, DomainErrors) {
  const double mu[] = {0.0}, sd[] = {1.0}, bad[] = {0.0};
  EXPECT_THROW(mc_kl_mixture(mu, bad, mu, sd, 0.5, 0.5, 10, 1), DomainError);
  EXPECT_THROW(mc_kl_mixture(mu, sd, mu, sd, 0.3, 0.3, 10, 1), DomainError);
  EXPECT_THROW(mc_kl_mixture(mu, sd, mu, sd, 0.5, 0.5, 0, 1), DomainError);
}

TEST(Elbo, BetaIrrelevantWhenPosteriorIsPrior) {
  auto m = zero_model();
  const auto r = toy_labeled()[0];
  Rng a(3), b(3);
  m.beta = 0.1;
  const double low = labeled_elbo(m, r, a);
  m.beta = 5.0;
  const double high = labeled_elbo(m, r, b);
  EXPECT_EQ(low, high);
}

TEST(Elbo, UtilityHeadAtZeroCostsLn2) {
  const auto m = zero_model();
  for (const auto& r : toy_labeled()) {
    Rng rng(1);
    const std::vector<double> raw(m.decoder_out(), 0.0);
    const double x_ll = feature_log_likelihood(m.layout, raw, r.x());
    EXPECT_NEAR(labeled_elbo(m, r, rng), x_ll - std::log(2.0), 1e-12);
  }
}

TEST(Elbo, SaturatedClassifierCollapsesUnlabeledToLabeled) {
  auto m = zero_model();
  m.decoder.layers.back().bias.back() = 50.0;     // q(u=1 | z, s) ~ 1
  m.classifier.layers.back().bias.back() = 50.0;  // q(u=1 | x, s) ~ 1
  const auto unl = toy_unlabeled()[0];
  const auto lab = Record::decided(unl.x(), unl.s(), true, 0.6, 1, 0.5);
  Rng a(1), b(1);
  EXPECT_NEAR(unlabeled_elbo(m, unl, a), labeled_elbo(m, lab, b), 1e-9);
}

TEST(Elbo, RecordKindContracts) {
  const auto m = zero_model();
  Rng rng(1);
  EXPECT_THROW(labeled_elbo(m, toy_unlabeled()[0], rng), ContractError);
  EXPECT_THROW(unlabeled_elbo(m, toy_labeled()[0], rng), ContractError);
  const auto p1 = make_phase1_vae(FeatureLayout(toy_schema()), toy_hyper(), 1);
  EXPECT_THROW(labeled_elbo(p1, toy_labeled()[0], rng), ContractError);
  EXPECT_THROW(phase1_loss(m, std::vector<Example>{{toy_x(0, 0, 0, 0), 1, 0, {}}}, rng, nullptr), ContractError);
}

TEST(Classification, FairCoinAtHalfPropensityIsLn2) {
  // c = 0.5, logit 0, propensity 0.5: 0.5 ln 2 / 0.5.
  EXPECT_NEAR(cost_sensitive_xent(0.0, 1, 0.5, 0.5), std::log(2.0), 1e-15);
  EXPECT_NEAR(cost_sensitive_xent(0.0, 0, 0.5, 0.5), std::log(2.0), 1e-15);
}

TEST(Classification, MatchesDirectFormulaOnFourRecords) {
  struct Case {
    double logit;
    int u;
    double p;
  };
  const Case cases[] = {{1.7, 1, 0.9}, {-0.4, 0, 0.25}, {3.2, 0, 0.6}, {-2.5, 1, 0.05}};
  for (double c : {0.2, 0.5, 0.8}) {
    double got = 0.0, want = 0.0;
    for (const auto& k : cases) {
      got += cost_sensitive_xent(k.logit, k.u, c, k.p);
      const double q = 1.0 / (1.0 + std::exp(-k.logit));
      want += -(c * (1 - k.u) * std::log(1.0 - q) + (1.0 - c) * k.u * std::log(q)) / k.p;
    }
    EXPECT_NEAR(got / 4.0, want / 4.0, 1e-10);
  }
}

TEST(Phase2, ObjectiveIsSumOfItsTerms) {
  const auto m = make_phase2_vae(FeatureLayout(toy_schema()), toy_hyper(), 9);
  const auto lab = toy_labeled();
  const auto unl = toy_unlabeled();
  Rng rng(4);
  const double j = phase2_objective(m, lab, unl, rng);

  Rng replay(4);
  double r_sum = 0.0, l_sum = 0.0, u_sum = 0.0;
  for (const auto& r : lab) {
    r_sum += ips_classification_loss(m, r, *r.propensity());
    l_sum += labeled_elbo(m, r, replay);
  }
  for (const auto& r : unl) u_sum += unlabeled_elbo(m, r, replay);
  const double expected = m.alpha * r_sum / 3.0 - l_sum / 3.0 - u_sum / 2.0;
  EXPECT_NEAR(j, expected, 1e-10);

  Rng again(4);
  EXPECT_THROW(phase2_objective(m, std::span<const Record>{}, std::span<const Record>{}, again), ContractError);
}

TEST(Transfer, CopiesWeightsAndAddsUtilityPaths) {
  const auto layout = FeatureLayout(toy_schema());
  const auto h = toy_hyper();
  const auto p1 = make_phase1_vae(layout, h, 11);
  const auto p2 = transfer_params(p1, h, 12);
  EXPECT_TRUE(p2.semi_supervised);
  const auto& a = p1.encoder.layers.front();
  const auto& b = p2.encoder.layers.front();
  ASSERT_EQ(b.in, a.in + 1);
  for (std::size_t o = 0; o < a.out; ++o) {
    for (std::size_t i = 0; i < a.in; ++i) EXPECT_EQ(b.w(o, i), a.w(o, i));
    EXPECT_LE(std::abs(b.w(o, a.in)), xavier_bound(b.in, b.out));
  }
  for (std::size_t k = 1; k < p1.encoder.layers.size(); ++k)
    EXPECT_EQ(p2.encoder.layers[k].weight, p1.encoder.layers[k].weight);
  const auto& da = p1.decoder.layers.back();
  const auto& db = p2.decoder.layers.back();
  ASSERT_EQ(db.out, da.out + 1);
  for (std::size_t o = 0; o < da.out; ++o) {
    EXPECT_EQ(db.bias[o], da.bias[o]);
    for (std::size_t i = 0; i < da.in; ++i) EXPECT_EQ(db.w(o, i), da.w(o, i));
  }
  EXPECT_EQ(p2.encoder.adam.step, 0);
  EXPECT_EQ(p2.classifier.layers.front().in, layout.width + 1);
  // Feature heads are unchanged by the transfer.
  const double z[] = {0.4, -0.3};
  const auto h1 = decode(p1, z, -1);
  const auto h2 = decode(p2, z, -1);
  for (std::size_t j = 0; j < h1.features.size(); ++j) EXPECT_EQ(h1.features[j], h2.features[j]);
}

TEST(Transfer, RejectsMismatchedArchitecture) {
  const auto layout = FeatureLayout(toy_schema());
  auto h = toy_hyper();
  const auto p1 = make_phase1_vae(layout, h, 11);
  EXPECT_THROW(transfer_params(transfer_params(p1, h, 1), h, 2), ConfigError);
  h.latent_dim = 3;
  EXPECT_THROW(transfer_params(p1, h, 1), ConfigError);
}

// Finite-difference checks. Each loss re-seeds its generator, so the
// reparameterized noise is common to every evaluation.

class GradientTest : public ::testing::Test {
 protected:
  FairVae model_ = make_phase2_vae(FeatureLayout(toy_schema()), toy_hyper(), 21);

  double check(const std::function<double(const FairVae&, Rng&, FairVaeGrads*)>& loss) {
    auto g = FairVaeGrads::zeros_like(model_);
    Rng rng(77);
    loss(model_, rng, &g);
    return testing::gradient_rel_error({&model_.encoder, &model_.decoder, &model_.classifier},
                                       {&g.encoder, &g.decoder, &g.classifier}, [&] {
                                         Rng r(77);
                                         return loss(model_, r, nullptr);
                                       });
  }
};

TEST_F(GradientTest, LabeledElbo) {
  const auto r = toy_labeled()[0];
  EXPECT_LE(check([&](const FairVae& m, Rng& rng, FairVaeGrads* g) { return labeled_elbo(m, r, rng, g); }), 1e-4);
}

TEST_F(GradientTest, UnlabeledElbo) {
  const auto r = toy_unlabeled()[1];
  EXPECT_LE(check([&](const FairVae& m, Rng& rng, FairVaeGrads* g) { return unlabeled_elbo(m, r, rng, g); }), 1e-4);
}

TEST_F(GradientTest, ClassificationLoss) {
  const auto r = toy_labeled()[1];
  EXPECT_LE(check([&](const FairVae& m, Rng&, FairVaeGrads* g) { return ips_classification_loss(m, r, 0.3, g); }),
            1e-4);
}

TEST_F(GradientTest, Phase2Objective) {
  const auto lab = toy_labeled();
  const auto unl = toy_unlabeled();
  EXPECT_LE(check([&](const FairVae& m, Rng& rng, FairVaeGrads* g) { return phase2_objective(m, lab, unl, rng, g); }),
            1e-4);
}

TEST_F(GradientTest, IpsLabeledObjective) {
  const auto lab = toy_labeled();
  EXPECT_LE(check([&](const FairVae& m, Rng& rng, FairVaeGrads* g) { return ips_labeled_objective(m, lab, rng, g); }),
            1e-4);
}

TEST(Classification, IpsWeightingIsUnbiasedOverDecisionOutcomes) {
  const auto r = testing::ips_unbiasedness_property();
  EXPECT_TRUE(r.ok) << r.detail;
}

TEST(Phase1Gradient, MatchesFiniteDifferences) {
  auto m = make_phase1_vae(FeatureLayout(toy_schema()), toy_hyper(), 31);
  const std::vector<Example> batch = {{toy_x(0.3, 1.0, 1, 2), 1, 0, {}}, {toy_x(-0.8, 4.0, 0, 0), -1, 1, {}}};
  auto g = FairVaeGrads::zeros_like(m);
  Rng rng(5);
  phase1_loss(m, batch, rng, &g);
  const double err = testing::gradient_rel_error({&m.encoder, &m.decoder}, {&g.encoder, &g.decoder}, [&] {
    Rng r(5);
    return phase1_loss(m, batch, r, nullptr);
  });
  EXPECT_LE(err, 1e-4);
}

}  // namespace
}  // namespace fairall
