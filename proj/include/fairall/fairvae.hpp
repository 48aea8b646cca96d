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

// Conditional VAE over heterogeneous features and the observed utility.
//
// Networks:
//   encoder    (x, s[, u])  -> (mu, log_var)          latent posterior
//   classifier (x, s)       -> logit of q(u = 1)      only in the
//                                                     semi-supervised model
//   decoder    (z, s)       -> x heads [, u logit]
//
// Every loss function returns its value and, when `grads` is non-null,
// accumulates `grad_scale * d(value)/d(params)` into it. Callers minimizing
// a negative ELBO therefore pass a negative scale. All sampling is drawn from
// the caller's Rng in a fixed order, so copying the Rng makes a loss
// evaluation repeatable (finite-difference checks rely on this).

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fairall/approximator.hpp"
#include "fairall/common.hpp"
#include "fairall/dataset.hpp"

namespace fairall {

struct VaeHyper {
  std::vector<std::size_t> vae_hidden{64, 64};
  std::size_t latent_dim = 2;
  std::vector<std::size_t> clf_hidden{32, 32, 32};
  double beta = 0.8;
  double alpha = 5.0;
  double cost = 0.5;
  int labeled_samples = 1;
  int unlabeled_samples = 50;
  int kl_samples = 100;
};

struct FairVae {
  FeatureLayout layout;
  std::size_t latent_dim = 2;
  std::vector<std::size_t> hidden;
  std::vector<std::size_t> clf_hidden;
  double beta = 0.8;
  double alpha = 5.0;
  double cost = 0.5;
  int labeled_samples = 1;
  int unlabeled_samples = 50;
  int kl_samples = 100;
  bool semi_supervised = false;  // false: Phase-I model without u paths

  ParamBundle encoder;
  ParamBundle decoder;
  ParamBundle classifier;  // empty unless semi_supervised

  std::size_t x_dim() const { return layout.width; }
  std::size_t encoder_in() const { return x_dim() + 1 + (semi_supervised ? 1 : 0); }
  std::size_t decoder_out() const { return x_dim() + (semi_supervised ? 1 : 0); }

  /// Encoder + decoder parameter count (the transferable part).
  std::size_t vae_parameter_count() const { return encoder.parameter_count() + decoder.parameter_count(); }
};

struct FairVaeGrads {
  GradBundle encoder;
  GradBundle decoder;
  GradBundle classifier;

  static FairVaeGrads zeros_like(const FairVae& m) {
    return {m.encoder.zero_grad(), m.decoder.zero_grad(), m.classifier.zero_grad()};
  }
};

inline void apply_update(FairVae& m, const FairVaeGrads& g, double lr) {
  adam_step(m.encoder, g.encoder, lr);
  adam_step(m.decoder, g.decoder, lr);
  if (m.semi_supervised) adam_step(m.classifier, g.classifier, lr);
}

namespace detail {

inline void copy_hyper(FairVae& m, const FeatureLayout& layout, const VaeHyper& h) {
  if (h.latent_dim == 0) throw ConfigError("latent_dim must be >= 1");
  if (h.beta < 0 || h.alpha < 0) throw ConfigError("alpha and beta must be >= 0");
  if (!(h.cost > 0 && h.cost < 1)) throw ConfigError("cost must lie in (0,1)");
  m.layout = layout;
  m.latent_dim = h.latent_dim;
  m.hidden = h.vae_hidden;
  m.clf_hidden = h.clf_hidden;
  m.beta = h.beta;
  m.alpha = h.alpha;
  m.cost = h.cost;
  m.labeled_samples = h.labeled_samples;
  m.unlabeled_samples = h.unlabeled_samples;
  m.kl_samples = h.kl_samples;
}

}  // namespace detail

/// Unsupervised conditional VAE: encoder (x,s)->z, decoder (z,s)->x.
inline FairVae make_phase1_vae(const FeatureLayout& layout, const VaeHyper& h, std::uint64_t seed) {
  FairVae m;
  detail::copy_hyper(m, layout, h);
  m.semi_supervised = false;
  m.encoder = mlp_init(h.vae_hidden, m.encoder_in(), 2 * h.latent_dim, derive_seed(seed, "encoder"));
  m.decoder = mlp_init(h.vae_hidden, h.latent_dim + 1, m.decoder_out(), derive_seed(seed, "decoder"));
  return m;
}

/// Semi-supervised model initialized from scratch (no Phase I).
inline FairVae make_phase2_vae(const FeatureLayout& layout, const VaeHyper& h, std::uint64_t seed) {
  FairVae m;
  detail::copy_hyper(m, layout, h);
  m.semi_supervised = true;
  m.encoder = mlp_init(h.vae_hidden, m.encoder_in(), 2 * h.latent_dim, derive_seed(seed, "encoder"));
  m.decoder = mlp_init(h.vae_hidden, h.latent_dim + 1, m.decoder_out(), derive_seed(seed, "decoder"));
  m.classifier = mlp_init(h.clf_hidden, m.x_dim() + 1, 1, derive_seed(seed, "classifier"));
  return m;
}

/// Builds the semi-supervised model from a trained Phase-I model. Encoder and
/// decoder weights are copied; the encoder gains a u input column into the
/// first hidden layer, the decoder gains a u output head, and the classifier
/// is fresh. New connections are Xavier-initialized from `seed`. Optimizer
/// state restarts.
inline FairVae transfer_params(const FairVae& phase1, const VaeHyper& h, std::uint64_t seed) {
  if (phase1.semi_supervised) throw ConfigError("transfer: source model already has utility paths");
  if (phase1.hidden != h.vae_hidden || phase1.latent_dim != h.latent_dim)
    throw ConfigError("transfer: Phase-I architecture does not match Phase-II hyperparameters");

  FairVae m;
  detail::copy_hyper(m, phase1.layout, h);
  m.semi_supervised = true;
  Rng rng(derive_seed(seed, "transfer"));

  m.encoder.layers = phase1.encoder.layers;
  {
    auto& first = m.encoder.layers.front();
    DenseLayer wider(first.in + 1, first.out);
    std::uniform_real_distribution<double> u(-xavier_bound(wider.in, wider.out), xavier_bound(wider.in, wider.out));
    for (std::size_t o = 0; o < first.out; ++o) {
      for (std::size_t i = 0; i < first.in; ++i) wider.w(o, i) = first.w(o, i);
      wider.w(o, first.in) = u(rng);
    }
    wider.bias = first.bias;
    first = std::move(wider);
  }

  m.decoder.layers = phase1.decoder.layers;
  {
    auto& last = m.decoder.layers.back();
    DenseLayer taller(last.in, last.out + 1);
    std::uniform_real_distribution<double> u(-xavier_bound(taller.in, taller.out), xavier_bound(taller.in, taller.out));
    for (std::size_t o = 0; o < last.out; ++o)
      for (std::size_t i = 0; i < last.in; ++i) taller.w(o, i) = last.w(o, i);
    for (std::size_t i = 0; i < last.in; ++i) taller.w(last.out, i) = u(rng);
    for (std::size_t o = 0; o < last.out; ++o) taller.bias[o] = last.bias[o];
    last = std::move(taller);
  }

  m.encoder.reset_optimizer();
  m.decoder.reset_optimizer();
  m.classifier = mlp_init(h.clf_hidden, m.x_dim() + 1, 1, derive_seed(seed, "classifier"));
  return m;
}

// ---------------------------------------------------------------------------
// Heads

struct EncoderOutput {
  std::vector<double> mu;
  std::vector<double> log_var;

  double sigma(std::size_t i) const { return std::exp(0.5 * log_var[i]); }
};

/// Per-feature distribution parameters produced by the decoder.
struct DecodedHeads {
  // real/count: {mean}; binary: {p(1)}; categorical: class probabilities.
  std::vector<std::vector<double>> features;
  std::optional<double> utility_prob;  // q(u = 1 | z, s), semi-supervised only
};

inline std::vector<double> encoder_input(const FairVae& m, std::span<const double> x, int s, std::optional<int> u) {
  if (x.size() != m.x_dim()) throw ShapeError("encoder: feature length mismatch");
  if (m.semi_supervised != u.has_value())
    throw ShapeError(m.semi_supervised ? "encoder: utility input required" : "encoder: model has no utility input");
  std::vector<double> in(x.begin(), x.end());
  in.push_back(static_cast<double>(s));
  if (u) in.push_back(static_cast<double>(*u));
  return in;
}

inline std::vector<double> decoder_input(const FairVae& m, std::span<const double> z, int s) {
  if (z.size() != m.latent_dim) throw ShapeError("decoder: latent length mismatch");
  std::vector<double> in(z.begin(), z.end());
  in.push_back(static_cast<double>(s));
  return in;
}

inline EncoderOutput split_encoder_output(const FairVae& m, std::span<const double> raw) {
  EncoderOutput e;
  e.mu.assign(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(m.latent_dim));
  e.log_var.assign(raw.begin() + static_cast<std::ptrdiff_t>(m.latent_dim), raw.end());
  return e;
}

inline EncoderOutput encode(const FairVae& m, std::span<const double> x, int s, std::optional<int> u = std::nullopt) {
  const auto raw = mlp_apply(m.encoder, encoder_input(m, x, s, u));
  return split_encoder_output(m, raw);
}

inline double classifier_logit(const FairVae& m, std::span<const double> x, int s) {
  if (!m.semi_supervised) throw ContractError("classifier requested on a model without one");
  if (x.size() != m.x_dim()) throw ShapeError("classifier: feature length mismatch");
  std::vector<double> in(x.begin(), x.end());
  in.push_back(static_cast<double>(s));
  return mlp_apply(m.classifier, in)[0];
}

inline double classify(const FairVae& m, std::span<const double> x, int s) {
  return sigmoid(classifier_logit(m, x, s));
}

inline DecodedHeads heads_from_raw(const FairVae& m, std::span<const double> raw) {
  DecodedHeads h;
  const auto& L = m.layout;
  for (std::size_t j = 0; j < L.size(); ++j) {
    const std::size_t off = L.offsets[j];
    switch (L.kinds[j]) {
      case FeatureKind::real:
      case FeatureKind::count: h.features.push_back({raw[off]}); break;
      case FeatureKind::binary: h.features.push_back({sigmoid(raw[off])}); break;
      case FeatureKind::categorical: {
        const std::size_t k = L.widths[j];
        double mx = raw[off];
        for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, raw[off + c]);
        std::vector<double> p(k);
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) z += (p[c] = std::exp(raw[off + c] - mx));
        for (double& v : p) v /= z;
        h.features.push_back(std::move(p));
        break;
      }
    }
  }
  if (m.semi_supervised) h.utility_prob = sigmoid(raw[m.x_dim()]);
  return h;
}

inline DecodedHeads decode(const FairVae& m, std::span<const double> z, int s) {
  return heads_from_raw(m, mlp_apply(m.decoder, decoder_input(m, z, s)));
}

// ---------------------------------------------------------------------------
// Likelihood pieces

/// Log-likelihood of encoded features `x` under decoder raw outputs. When
/// `d_raw` is non-null, adds `scale * d(loglik)/d(raw)` into it.
inline double feature_log_likelihood(const FeatureLayout& L, std::span<const double> raw, std::span<const double> x,
                                     double scale = 0.0, double* d_raw = nullptr) {
  double ll = 0.0;
  for (std::size_t j = 0; j < L.size(); ++j) {
    const std::size_t off = L.offsets[j];
    switch (L.kinds[j]) {
      case FeatureKind::real:
      case FeatureKind::count: {
        const double r = x[off] - raw[off];
        ll += -0.5 * r * r - 0.5 * kLog2Pi;  // unit variance
        if (d_raw) d_raw[off] += scale * r;
        break;
      }
      case FeatureKind::binary: {
        const double l = raw[off];
        const double y = x[off];
        ll += y * l - softplus(l);
        if (d_raw) d_raw[off] += scale * (y - sigmoid(l));
        break;
      }
      case FeatureKind::categorical: {
        const std::size_t k = L.widths[j];
        double mx = raw[off];
        for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, raw[off + c]);
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) z += std::exp(raw[off + c] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t c = 0; c < k; ++c) {
          ll += x[off + c] * (raw[off + c] - lse);
          if (d_raw) d_raw[off + c] += scale * (x[off + c] - std::exp(raw[off + c] - lse));
        }
        break;
      }
    }
  }
  return ll;
}

/// Bernoulli log-likelihood of y in {0,1} given a logit.
inline double bernoulli_log_likelihood(double logit, int y) {
  return y == 1 ? -softplus(-logit) : -softplus(logit);
}

/// KL(N(mu, diag(exp(log_var))) || N(0, I)).
inline double gaussian_kl(std::span<const double> mu, std::span<const double> log_var) {
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    kl += 0.5 * (mu[i] * mu[i] + std::exp(log_var[i]) - 1.0 - log_var[i]);
  return kl;
}

inline double log_normal_density(std::span<const double> z, std::span<const double> mu,
                                 std::span<const double> log_var) {
  double lp = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double r = z[i] - mu[i];
    lp += -0.5 * (kLog2Pi + log_var[i] + r * r * std::exp(-log_var[i]));
  }
  return lp;
}

inline double log_standard_normal(std::span<const double> z) {
  double lp = 0.0;
  for (double v : z) lp += -0.5 * (kLog2Pi + v * v);
  return lp;
}

// ---------------------------------------------------------------------------
// Monte-Carlo KL of a two-component Gaussian mixture against N(0, I)

struct MixtureKl {
  double value = 0.0;
  double d_q1 = 0.0;  // q0 = 1 - q1
  std::vector<double> d_mu[2];
  std::vector<double> d_log_var[2];
};

/// Estimates KL(q0 N0 + q1 N1 || N(0,I)) by drawing `n` reparameterized
/// samples from each component and evaluating the mixture log-density with
/// log-sum-exp. Gradients are pathwise through the samples plus the explicit
/// dependence of the density on (q, mu, log_var).
inline MixtureKl mixture_kl_with_grad(const EncoderOutput& c0, const EncoderOutput& c1, double q1, int n, Rng& rng) {
  if (n < 1) throw DomainError("mixture KL: n_samples must be >= 1");
  if (!(q1 >= 0.0 && q1 <= 1.0)) throw DomainError("mixture KL: weight outside [0,1]");
  const std::size_t D = c0.mu.size();
  const EncoderOutput* comp[2] = {&c0, &c1};
  const double q[2] = {1.0 - q1, q1};
  const double log_q[2] = {q[0] > 0 ? std::log(q[0]) : -std::numeric_limits<double>::infinity(),
                           q[1] > 0 ? std::log(q[1]) : -std::numeric_limits<double>::infinity()};
  std::vector<double> sigma[2], inv_var[2];
  for (int c = 0; c < 2; ++c) {
    sigma[c].resize(D);
    inv_var[c].resize(D);
    for (std::size_t d = 0; d < D; ++d) {
      sigma[c][d] = comp[c]->sigma(d);
      inv_var[c][d] = std::exp(-comp[c]->log_var[d]);
      if (!(sigma[c][d] > 0.0) || !std::isfinite(sigma[c][d])) throw DomainError("mixture KL: sigma must be > 0");
    }
  }

  MixtureKl out;
  for (int c = 0; c < 2; ++c) {
    out.d_mu[c].assign(D, 0.0);
    out.d_log_var[c].assign(D, 0.0);
  }
  std::vector<double> z(D), eps(D);
  const double inv_n = 1.0 / n;
  for (int c = 0; c < 2; ++c) {
    double mean_f = 0.0;
    for (int k = 0; k < n; ++k) {
      for (std::size_t d = 0; d < D; ++d) {
        eps[d] = standard_normal(rng);
        z[d] = comp[c]->mu[d] + sigma[c][d] * eps[d];
      }
      const double log_n0 = log_normal_density(z, c0.mu, c0.log_var);
      const double log_n1 = log_normal_density(z, c1.mu, c1.log_var);
      const double log_m = log_sum_exp(log_q[0] + log_n0, log_q[1] + log_n1);
      const double f = log_m - log_standard_normal(z);
      mean_f += f * inv_n;
      if (q[c] == 0.0) continue;  // contributes nothing to value or gradient

      const double w = q[c] * inv_n;
      const double r[2] = {std::exp(log_q[0] + log_n0 - log_m), std::exp(log_q[1] + log_n1 - log_m)};
      out.d_q1 += w * (std::exp(log_n1 - log_m) - std::exp(log_n0 - log_m));
      for (std::size_t d = 0; d < D; ++d) {
        double df_dz = z[d];
        for (int j = 0; j < 2; ++j) {
          const double rj = r[j];
          if (rj == 0.0) continue;
          const double diff = z[d] - comp[j]->mu[d];
          df_dz -= rj * diff * inv_var[j][d];
          out.d_mu[j][d] += w * rj * diff * inv_var[j][d];
          out.d_log_var[j][d] += w * rj * (-0.5 + 0.5 * diff * diff * inv_var[j][d]);
        }
        out.d_mu[c][d] += w * df_dz;
        out.d_log_var[c][d] += w * df_dz * 0.5 * sigma[c][d] * eps[d];
      }
    }
    out.value += q[c] * mean_f;
    if (c == 1) out.d_q1 += mean_f;
    else out.d_q1 -= mean_f;
  }
  return out;
}

/// Value-only estimator with explicit components given as (mu, sigma).
inline double mc_kl_mixture(std::span<const double> mu0, std::span<const double> sigma0, std::span<const double> mu1,
                            std::span<const double> sigma1, double q0, double q1, int n_samples, std::uint64_t seed) {
  if (std::abs(q0 + q1 - 1.0) > 1e-12 || q0 < 0 || q1 < 0) throw DomainError("mixture KL: weights must sum to 1");
  if (mu0.size() != sigma0.size() || mu1.size() != sigma1.size() || mu0.size() != mu1.size())
    throw ShapeError("mixture KL: component dimension mismatch");
  EncoderOutput c0, c1;
  c0.mu.assign(mu0.begin(), mu0.end());
  c1.mu.assign(mu1.begin(), mu1.end());
  for (double s : sigma0) {
    if (!(s > 0.0)) throw DomainError("mixture KL: sigma must be > 0");
    c0.log_var.push_back(2.0 * std::log(s));
  }
  for (double s : sigma1) {
    if (!(s > 0.0)) throw DomainError("mixture KL: sigma must be > 0");
    c1.log_var.push_back(2.0 * std::log(s));
  }
  Rng rng(seed);
  return mixture_kl_with_grad(c0, c1, q1, n_samples, rng).value;
}

// ---------------------------------------------------------------------------
// ELBO terms

namespace detail {

/// Reconstruction of x (and optionally u) from `n` reparameterized samples of
/// `enc`. Returns the mean log-likelihood. With grads, accumulates
/// `scale * d/d(decoder params)` and adds `scale * d/d(mu, log_var)` into
/// d_mu / d_log_var.
inline double reconstruction(const FairVae& m, const EncoderOutput& enc, std::span<const double> x, int s,
                             std::optional<int> u, int n, Rng& rng, FairVaeGrads* grads, double scale,
                             std::vector<double>* d_mu, std::vector<double>* d_log_var) {
  const std::size_t D = m.latent_dim;
  std::vector<double> eps(D), z(D), sigma(D);
  for (std::size_t d = 0; d < D; ++d) sigma[d] = enc.sigma(d);
  double total = 0.0;
  const double inv_n = 1.0 / n;
  std::vector<double> d_raw;
  for (int k = 0; k < n; ++k) {
    for (std::size_t d = 0; d < D; ++d) {
      eps[d] = standard_normal(rng);
      z[d] = enc.mu[d] + sigma[d] * eps[d];
    }
    const auto trace = mlp_forward(m.decoder, decoder_input(m, z, s));
    const auto& raw = trace.output();
    double ll;
    if (grads) {
      d_raw.assign(raw.size(), 0.0);
      ll = feature_log_likelihood(m.layout, raw, x, scale * inv_n, d_raw.data());
    } else {
      ll = feature_log_likelihood(m.layout, raw, x);
    }
    if (u) {
      const double logit = raw[m.x_dim()];
      ll += bernoulli_log_likelihood(logit, *u);
      if (grads) d_raw[m.x_dim()] += scale * inv_n * (*u - sigmoid(logit));
    }
    total += ll * inv_n;
    if (grads) {
      const auto d_in = mlp_backward(m.decoder, trace, d_raw, grads->decoder);
      for (std::size_t d = 0; d < D; ++d) {
        (*d_mu)[d] += d_in[d];
        (*d_log_var)[d] += d_in[d] * 0.5 * sigma[d] * eps[d];
      }
    }
  }
  return total;
}

/// Single-posterior ELBO: E_q[log p(x[,u] | z, s)] - beta KL(q || p).
inline double single_elbo(const FairVae& m, std::span<const double> x, int s, std::optional<int> u, int n, Rng& rng,
                          FairVaeGrads* grads, double scale) {
  const auto trace = mlp_forward(m.encoder, encoder_input(m, x, s, u));
  const auto enc = split_encoder_output(m, trace.output());
  for (double lv : enc.log_var) require_finite(lv, "encoder log-variance");
  const std::size_t D = m.latent_dim;
  std::vector<double> d_mu(D, 0.0), d_lv(D, 0.0);
  const double rec = reconstruction(m, enc, x, s, u, n, rng, grads, scale, &d_mu, &d_lv);
  const double kl = gaussian_kl(enc.mu, enc.log_var);
  const double elbo = rec - m.beta * kl;
  require_finite(elbo, "ELBO");
  if (grads) {
    std::vector<double> d_out(2 * D);
    for (std::size_t d = 0; d < D; ++d) {
      d_out[d] = d_mu[d] - scale * m.beta * enc.mu[d];
      d_out[D + d] = d_lv[d] - scale * m.beta * 0.5 * (std::exp(enc.log_var[d]) - 1.0);
    }
    mlp_backward(m.encoder, trace, d_out, grads->encoder);
  }
  return elbo;
}

}  // namespace detail

/// Mean negative Phase-I ELBO over a batch of (x, s).
inline double phase1_loss(const FairVae& m, std::span<const Example> batch, Rng& rng, FairVaeGrads* grads) {
  if (m.semi_supervised) throw ContractError("phase1_loss: model has utility paths");
  if (batch.empty()) throw ContractError("phase1_loss: empty batch");
  const double scale = -1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& e : batch)
    total += detail::single_elbo(m, e.x, e.s, std::nullopt, m.labeled_samples, rng, grads, scale);
  return -total / static_cast<double>(batch.size());
}

/// ELBO of log p(x, u | s, d=1) for an accepted record.
inline double labeled_elbo(const FairVae& m, const Record& r, Rng& rng, FairVaeGrads* grads = nullptr,
                           double grad_scale = 1.0) {
  if (!m.semi_supervised) throw ContractError("labeled_elbo: model has no utility paths");
  if (!r.labeled()) throw ContractError("labeled_elbo: record is unlabeled");
  return detail::single_elbo(m, r.x(), r.s(), r.u_binary(), m.labeled_samples, rng, grads, grad_scale);
}

/// ELBO for a rejected record: the u-expectation is taken exactly with the
/// classifier weights; the KL term is the Monte-Carlo mixture KL.
inline double unlabeled_elbo(const FairVae& m, const Record& r, Rng& rng, FairVaeGrads* grads = nullptr,
                             double grad_scale = 1.0) {
  if (!m.semi_supervised) throw ContractError("unlabeled_elbo: model has no utility paths");
  if (r.labeled()) throw ContractError("unlabeled_elbo: record is labeled");
  const std::size_t D = m.latent_dim;

  std::vector<double> clf_in(r.x().begin(), r.x().end());
  clf_in.push_back(static_cast<double>(r.s()));
  const auto clf_trace = mlp_forward(m.classifier, clf_in);
  const double q1 = sigmoid(clf_trace.output()[0]);
  const double q[2] = {1.0 - q1, q1};

  ForwardTrace enc_trace[2];
  EncoderOutput enc[2];
  double rec[2];
  std::vector<double> d_mu[2], d_lv[2];
  for (int u = 0; u < 2; ++u) {
    enc_trace[u] = mlp_forward(m.encoder, encoder_input(m, r.x(), r.s(), u));
    enc[u] = split_encoder_output(m, enc_trace[u].output());
    for (double lv : enc[u].log_var) require_finite(lv, "encoder log-variance");
    d_mu[u].assign(D, 0.0);
    d_lv[u].assign(D, 0.0);
    rec[u] = detail::reconstruction(m, enc[u], r.x(), r.s(), std::nullopt, m.unlabeled_samples, rng, grads,
                                    grad_scale * q[u], &d_mu[u], &d_lv[u]);
  }
  const auto kl = mixture_kl_with_grad(enc[0], enc[1], q1, m.kl_samples, rng);
  const double value = q[1] * rec[1] + q[0] * rec[0] - m.beta * kl.value;
  require_finite(value, "unlabeled ELBO");

  if (grads) {
    for (int u = 0; u < 2; ++u) {
      std::vector<double> d_out(2 * D);
      for (std::size_t d = 0; d < D; ++d) {
        d_out[d] = d_mu[u][d] - grad_scale * m.beta * kl.d_mu[u][d];
        d_out[D + d] = d_lv[u][d] - grad_scale * m.beta * kl.d_log_var[u][d];
      }
      mlp_backward(m.encoder, enc_trace[u], d_out, grads->encoder);
    }
    const double d_q1 = grad_scale * (rec[1] - rec[0] - m.beta * kl.d_q1);
    const double d_logit = d_q1 * q1 * (1.0 - q1);
    const double d_arr[1] = {d_logit};
    mlp_backward(m.classifier, clf_trace, d_arr, grads->classifier);
  }
  return value;
}

/// Cost-sensitive cross-entropy of a logit against u in {0,1}, divided by the
/// propensity. Shared by the classifier loss and the logistic baselines.
inline double cost_sensitive_xent(double logit, int u, double cost, double propensity, double* d_logit = nullptr) {
  const double p = clamp_probability(propensity);
  const double value = (cost * (1 - u) * softplus(logit) + (1.0 - cost) * u * softplus(-logit)) / p;
  if (d_logit) *d_logit = (cost * (1 - u) * sigmoid(logit) - (1.0 - cost) * u * sigmoid(-logit)) / p;
  return value;
}

/// IPS-weighted classification loss of the classifier on an accepted record.
inline double ips_classification_loss(const FairVae& m, const Record& r, double propensity,
                                      FairVaeGrads* grads = nullptr, double grad_scale = 1.0) {
  if (!m.semi_supervised) throw ContractError("classification loss: model has no classifier");
  if (!r.labeled()) throw ContractError("classification loss: record is unlabeled");
  std::vector<double> in(r.x().begin(), r.x().end());
  in.push_back(static_cast<double>(r.s()));
  const auto trace = mlp_forward(m.classifier, in);
  const double logit = trace.output()[0];
  const double q = sigmoid(logit);
  if (!(q > 0.0 && q < 1.0) && !std::isfinite(logit)) throw NumericalError("classifier probability outside (0,1)");
  double d_logit = 0.0;
  const double value = cost_sensitive_xent(logit, r.u_binary(), m.cost, propensity, &d_logit);
  require_finite(value, "classification loss");
  if (grads) {
    const double d_arr[1] = {grad_scale * d_logit};
    mlp_backward(m.classifier, trace, d_arr, grads->classifier);
  }
  return value;
}

/// J = alpha * mean(R) - mean(L) - mean(U).
inline double phase2_objective(const FairVae& m, std::span<const Record> labeled, std::span<const Record> unlabeled,
                               Rng& rng, FairVaeGrads* grads = nullptr) {
  if (labeled.empty() && unlabeled.empty()) throw ContractError("phase2_objective: both batches empty");
  double j = 0.0;
  if (!labeled.empty()) {
    const double n = static_cast<double>(labeled.size());
    double r_sum = 0.0, l_sum = 0.0;
    for (const auto& r : labeled) {
      r_sum += ips_classification_loss(m, r, *r.propensity(), grads, m.alpha / n);
      l_sum += labeled_elbo(m, r, rng, grads, -1.0 / n);
    }
    j += m.alpha * r_sum / n - l_sum / n;
  }
  if (!unlabeled.empty()) {
    const double n = static_cast<double>(unlabeled.size());
    double u_sum = 0.0;
    for (const auto& r : unlabeled) u_sum += unlabeled_elbo(m, r, rng, grads, -1.0 / n);
    j -= u_sum / n;
  }
  return j;
}

/// Labeled-only objective with the ELBO divided by the propensity:
/// alpha * mean(R) - mean(L / propensity).
inline double ips_labeled_objective(const FairVae& m, std::span<const Record> labeled, Rng& rng,
                                    FairVaeGrads* grads = nullptr) {
  if (labeled.empty()) throw ContractError("ips_labeled_objective: empty batch");
  const double n = static_cast<double>(labeled.size());
  double j = 0.0;
  for (const auto& r : labeled) {
    const double p = clamp_probability(*r.propensity());
    j += m.alpha / n * ips_classification_loss(m, r, p, grads, m.alpha / n);
    j -= labeled_elbo(m, r, rng, grads, -1.0 / (n * p)) / (n * p);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Latent sampling used by latent-space policies.

inline std::vector<double> sample_from(const EncoderOutput& e, Rng& rng) {
  std::vector<double> z(e.mu.size());
  for (std::size_t d = 0; d < z.size(); ++d) z[d] = e.mu[d] + e.sigma(d) * standard_normal(rng);
  return z;
}

/// Draws z for a record whose utility is unknown: u ~ classifier, then
/// z ~ encoder(x, s, u). Phase-I models encode (x, s) directly.
inline std::vector<double> sample_latent(const FairVae& m, std::span<const double> x, int s, Rng& rng) {
  if (!m.semi_supervised) return sample_from(encode(m, x, s), rng);
  const int u = bernoulli(rng, classify(m, x, s)) ? 1 : 0;
  return sample_from(encode(m, x, s, u), rng);
}

}  // namespace fairall
