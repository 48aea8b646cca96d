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

// Feed-forward approximators with hand-written reverse mode and Adam.
//
// A network is a chain of dense layers: rectifier after every hidden layer,
// identity on the output. Weights are stored row-major (out x in). Training
// code runs `mlp_forward` to get a trace, then `mlp_backward` with the
// gradient of the loss w.r.t. the output; gradients accumulate into a
// `GradBundle` and the gradient w.r.t. the input is returned so that losses
// can chain networks (encoder -> sample -> decoder).

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairall/common.hpp"

namespace fairall {

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;    // out

  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim)
      : in(in_dim), out(out_dim), weight(in_dim * out_dim, 0.0), bias(out_dim, 0.0) {}

  double& w(std::size_t row, std::size_t col) { return weight[row * in + col]; }
  double w(std::size_t row, std::size_t col) const { return weight[row * in + col]; }
  std::size_t size() const { return weight.size() + bias.size(); }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment accumulators; shapes mirror the parameter layers.
struct AdamState {
  std::vector<DenseLayer> first;
  std::vector<DenseLayer> second;
  std::int64_t step = 0;
};

/// Gradient (or any same-shape quantity) for a ParamBundle.
struct GradBundle {
  std::vector<DenseLayer> layers;

  void zero() {
    for (auto& l : layers) {
      std::fill(l.weight.begin(), l.weight.end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
  }
};

struct ParamBundle {
  std::vector<DenseLayer> layers;
  AdamState adam;

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().out; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
  }

  GradBundle zero_grad() const {
    GradBundle g;
    g.layers.reserve(layers.size());
    for (const auto& l : layers) g.layers.emplace_back(l.in, l.out);
    return g;
  }

  /// Resets Adam moments to zero with shapes matching the current layers.
  void reset_optimizer() {
    adam.first = zero_grad().layers;
    adam.second = zero_grad().layers;
    adam.step = 0;
  }

  /// Flat view accessors in (layer, weights row-major, bias) order.
  double& flat(std::size_t index) {
    for (auto& l : layers) {
      if (index < l.weight.size()) return l.weight[index];
      index -= l.weight.size();
      if (index < l.bias.size()) return l.bias[index];
      index -= l.bias.size();
    }
    throw RangeError("parameter index out of range");
  }
};

inline double flat_at(const GradBundle& g, std::size_t index) {
  for (const auto& l : g.layers) {
    if (index < l.weight.size()) return l.weight[index];
    index -= l.weight.size();
    if (index < l.bias.size()) return l.bias[index];
    index -= l.bias.size();
  }
  throw RangeError("gradient index out of range");
}

/// Glorot/Xavier uniform bound.
inline double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

inline void xavier_fill(std::span<double> values, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double b = xavier_bound(fan_in, fan_out);
  std::uniform_real_distribution<double> u(-b, b);
  for (double& v : values) v = u(rng);
}

inline ParamBundle mlp_init(std::span<const std::size_t> hidden, std::size_t in_dim, std::size_t out_dim,
                            std::uint64_t seed) {
  if (in_dim == 0 || out_dim == 0) throw ConfigError("mlp_init: dimensions must be >= 1");
  for (std::size_t h : hidden)
    if (h == 0) throw ConfigError("mlp_init: hidden widths must be >= 1");

  Rng rng(seed);
  ParamBundle p;
  std::size_t prev = in_dim;
  auto add = [&](std::size_t width) {
    DenseLayer l(prev, width);
    xavier_fill(l.weight, prev, width, rng);
    p.layers.push_back(std::move(l));
    prev = width;
  };
  for (std::size_t h : hidden) add(h);
  add(out_dim);
  p.reset_optimizer();
  return p;
}

inline ParamBundle mlp_init(const std::vector<std::size_t>& hidden, std::size_t in_dim, std::size_t out_dim,
                            std::uint64_t seed) {
  return mlp_init(std::span<const std::size_t>(hidden), in_dim, out_dim, seed);
}

/// Post-activation values of every layer; activations[0] is the input.
struct ForwardTrace {
  std::vector<std::vector<double>> activations;
  const std::vector<double>& output() const { return activations.back(); }
};

namespace detail {

inline void affine(const DenseLayer& l, const double* x, double* y) {
  for (std::size_t o = 0; o < l.out; ++o) {
    const double* row = l.weight.data() + o * l.in;
    double acc = l.bias[o];
    for (std::size_t i = 0; i < l.in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

}  // namespace detail

inline ForwardTrace mlp_forward(const ParamBundle& p, std::span<const double> input) {
  if (input.size() != p.in_dim())
    throw ShapeError("mlp_forward: input length " + std::to_string(input.size()) + " != " +
                     std::to_string(p.in_dim()));
  ForwardTrace t;
  t.activations.reserve(p.layers.size() + 1);
  t.activations.emplace_back(input.begin(), input.end());
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const auto& l = p.layers[k];
    std::vector<double> y(l.out);
    detail::affine(l, t.activations.back().data(), y.data());
    if (k + 1 < p.layers.size())
      for (double& v : y) v = v > 0 ? v : 0.0;
    t.activations.push_back(std::move(y));
  }
  return t;
}

inline std::vector<double> mlp_apply(const ParamBundle& p, std::span<const double> input) {
  if (input.size() != p.in_dim()) throw ShapeError("mlp_apply: input dimension mismatch");
  std::vector<double> cur(input.begin(), input.end());
  std::vector<double> next;
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const auto& l = p.layers[k];
    next.assign(l.out, 0.0);
    detail::affine(l, cur.data(), next.data());
    if (k + 1 < p.layers.size())
      for (double& v : next) v = v > 0 ? v : 0.0;
    cur.swap(next);
  }
  return cur;
}

/// Accumulates dLoss/dparams into `grads` and returns dLoss/dinput.
inline std::vector<double> mlp_backward(const ParamBundle& p, const ForwardTrace& t, std::span<const double> d_out,
                                        GradBundle& grads) {
  if (d_out.size() != p.out_dim()) throw ShapeError("mlp_backward: output gradient dimension mismatch");
  std::vector<double> delta(d_out.begin(), d_out.end());
  for (std::size_t k = p.layers.size(); k-- > 0;) {
    const auto& l = p.layers[k];
    auto& g = grads.layers[k];
    const auto& x = t.activations[k];
    for (std::size_t o = 0; o < l.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      g.bias[o] += d;
      double* grow = g.weight.data() + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) grow[i] += d * x[i];
    }
    std::vector<double> d_in(l.in, 0.0);
    for (std::size_t o = 0; o < l.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = l.weight.data() + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) d_in[i] += d * row[i];
    }
    if (k > 0)  // rectifier on the previous (hidden) layer
      for (std::size_t i = 0; i < l.in; ++i)
        if (x[i] <= 0.0) d_in[i] = 0.0;
    delta.swap(d_in);
  }
  return delta;
}

/// Bias-corrected Adam. Throws NumericalError on a non-finite gradient before
/// touching any state.
inline void adam_step(ParamBundle& p, const GradBundle& g, double lr, const AdamConfig& cfg = {}) {
  if (g.layers.size() != p.layers.size()) throw ShapeError("adam_step: layer count mismatch");
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    if (g.layers[k].weight.size() != p.layers[k].weight.size() || g.layers[k].bias.size() != p.layers[k].bias.size())
      throw ShapeError("adam_step: gradient shape mismatch at layer " + std::to_string(k));
    for (double v : g.layers[k].weight) require_finite(v, "adam_step gradient");
    for (double v : g.layers[k].bias) require_finite(v, "adam_step gradient");
  }
  if (p.adam.first.size() != p.layers.size()) p.reset_optimizer();

  p.adam.step += 1;
  const double t = static_cast<double>(p.adam.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto update = [&](std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& m,
                    std::vector<double>& v) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      param[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  };
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    update(p.layers[k].weight, g.layers[k].weight, p.adam.first[k].weight, p.adam.second[k].weight);
    update(p.layers[k].bias, g.layers[k].bias, p.adam.first[k].bias, p.adam.second[k].bias);
  }
}

/// Scales every entry of `g` in place.
inline void scale(GradBundle& g, double factor) {
  for (auto& l : g.layers) {
    for (double& v : l.weight) v *= factor;
    for (double& v : l.bias) v *= factor;
  }
}

inline bool all_finite(const ParamBundle& p) {
  for (const auto& l : p.layers) {
    for (double v : l.weight)
      if (!std::isfinite(v)) return false;
    for (double v : l.bias)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

/// Full-batch logistic regression: one linear layer trained with Adam on the
/// mean log-loss. Throws if the loss did not decrease.
inline ParamBundle fit_logistic(const std::vector<std::vector<double>>& inputs, const std::vector<int>& labels,
                                std::uint64_t seed, int steps = 500, double lr = 0.05) {
  if (inputs.empty() || inputs.size() != labels.size()) throw ShapeError("fit_logistic: bad training set");
  const std::size_t dim = inputs.front().size();
  ParamBundle p = mlp_init(std::vector<std::size_t>{}, dim, 1, seed);
  const double n = static_cast<double>(inputs.size());
  auto loss_and_grad = [&](GradBundle* g) {
    double loss = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (inputs[i].size() != dim) throw ShapeError("fit_logistic: ragged inputs");
      const double logit = mlp_apply(p, inputs[i])[0];
      loss += (labels[i] == 1 ? softplus(-logit) : softplus(logit)) / n;
      if (g) {
        const double d = (sigmoid(logit) - labels[i]) / n;
        auto& l = g->layers[0];
        for (std::size_t j = 0; j < dim; ++j) l.weight[j] += d * inputs[i][j];
        l.bias[0] += d;
      }
    }
    return loss;
  };
  const double initial = loss_and_grad(nullptr);
  for (int s = 0; s < steps; ++s) {
    auto g = p.zero_grad();
    loss_and_grad(&g);
    adam_step(p, g, lr);
  }
  const double final_loss = loss_and_grad(nullptr);
  if (!(final_loss < initial))
    throw NumericalError("logistic fit did not converge (loss " + std::to_string(initial) + " -> " +
                         std::to_string(final_loss) + ")");
  return p;
}

}  // namespace fairall
