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

// JSON snapshots of trained networks. Optimizer moments are not stored.

#pragma once

#include <string>

#include "fairall/approximator.hpp"
#include "fairall/fairvae.hpp"
#include "fairall/policies.hpp"
#include "json.hpp"

namespace fairall {

using Json = nlohmann::json;

inline Json to_json(const ParamBundle& p) {
  Json layers = Json::array();
  for (const auto& l : p.layers)
    layers.push_back({{"in", l.in}, {"out", l.out}, {"weight", l.weight}, {"bias", l.bias}});
  return Json{{"layers", layers}};
}

inline ParamBundle bundle_from_json(const Json& j) {
  ParamBundle p;
  try {
    for (const auto& lj : j.at("layers")) {
      DenseLayer l(lj.at("in").get<std::size_t>(), lj.at("out").get<std::size_t>());
      l.weight = lj.at("weight").get<std::vector<double>>();
      l.bias = lj.at("bias").get<std::vector<double>>();
      if (l.weight.size() != l.in * l.out || l.bias.size() != l.out) throw ParseError("snapshot: layer size mismatch");
      p.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("snapshot: ") + e.what());
  }
  p.reset_optimizer();
  return p;
}

inline Json to_json(const FairVae& m) {
  Json j{{"latent_dim", m.latent_dim},
         {"hidden", m.hidden},
         {"clf_hidden", m.clf_hidden},
         {"beta", m.beta},
         {"alpha", m.alpha},
         {"cost", m.cost},
         {"semi_supervised", m.semi_supervised},
         {"encoder", to_json(m.encoder)},
         {"decoder", to_json(m.decoder)}};
  if (m.semi_supervised) j["classifier"] = to_json(m.classifier);
  return j;
}

inline Json to_json(const Policy& p) {
  Json j{{"kind", to_string(p.kind)}};
  if (p.kind == PolicyKind::initial) {
    j["rate_positive"] = p.rates.positive;
    j["rate_negative"] = p.rates.negative;
  } else {
    j["scorer"] = to_json(p.scorer);
    if (p.reads_latent()) j["latent_samples"] = p.latent_samples;
    if (p.kind == PolicyKind::optimal) {
      j["input"] = p.oracle_input == OracleInput::talent ? "talent" : "features";
      j["thresholded"] = p.thresholded;
    }
  }
  return j;
}

}  // namespace fairall
