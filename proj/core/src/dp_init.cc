// Copyright 2026 The dpflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dpflow/dp_init.h"

#include <cmath>
#include <limits>
#include <string>

#include "dpflow/error.h"
#include "dpflow/mechanisms.h"
#include "dpflow/random.h"

namespace dpflow {

void InitConfig::Validate() const {
  if (!(clip_range > 0.0) || !std::isfinite(clip_range)) {
    throw ConfigurationError("clip range must be positive and finite");
  }
  if (!(epsilon > 0.0)) throw ConfigurationError("epsilon must be positive");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigurationError("delta must lie in (0, 1)");
  }
  for (const auto& s : {mean_sensitivity, std_sensitivity}) {
    if (s.has_value() && !(*s > 0.0)) {
      throw ConfigurationError("sensitivities must be positive");
    }
  }
}

double InitLaplaceScale(int actnorm_layers, double sensitivity, double epsilon,
                        double delta) {
  if (actnorm_layers < 1) throw ConfigurationError("need at least one layer");
  if (!(epsilon > 0.0)) throw ConfigurationError("epsilon must be positive");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigurationError("delta must lie in (0, 1)");
  }
  if (std::isinf(epsilon)) return 0.0;
  return 2.0 * std::sqrt(4.0 * actnorm_layers * std::log(1.0 / delta)) *
         sensitivity / epsilon;
}

nlohmann::json InitReport::ToJson() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& l : layers) {
    out.push_back({{"layer", l.layer_index},
                   {"offset", std::vector<double>(l.offset.begin(), l.offset.end())},
                   {"scale", std::vector<double>(l.scale.begin(), l.scale.end())}});
  }
  return {{"actnorm_layers", out},
          {"mean_sensitivity", mean_sensitivity},
          {"std_sensitivity", std_sensitivity},
          {"sensitivity_source", default_sensitivities ? "default" : "user"},
          {"mean_noise_scale", mean_noise_scale},
          {"std_noise_scale", std_noise_scale},
          {"epsilon", std::isinf(epsilon) ? nlohmann::json("inf")
                                          : nlohmann::json(epsilon)},
          {"delta", delta}};
}

InitReport DpNfInit(const RowMatrix& data, FlowModel& model,
                    const InitConfig& config) {
  config.Validate();
  const Eigen::Index n = data.rows();
  if (n == 0) throw InvalidInputError("cannot initialize from an empty dataset");
  if (data.cols() != model.dim()) {
    throw ConfigurationError("dataset dimension does not match the model");
  }
  int k = 0;
  for (const auto& layer : model.layers()) {
    if (std::holds_alternative<ActNormLayer>(layer)) ++k;
  }
  if (k == 0) throw ConfigurationError("model has no ActNorm layer");

  InitReport report;
  report.epsilon = config.epsilon;
  report.delta = config.delta;
  report.default_sensitivities =
      !config.mean_sensitivity.has_value() && !config.std_sensitivity.has_value();
  report.mean_sensitivity =
      config.mean_sensitivity.value_or(config.clip_range / n);
  report.std_sensitivity = config.std_sensitivity.value_or(
      config.clip_range / std::sqrt(static_cast<double>(n)));
  report.mean_noise_scale =
      InitLaplaceScale(k, report.mean_sensitivity, config.epsilon, config.delta);
  report.std_noise_scale =
      InitLaplaceScale(k, report.std_sensitivity, config.epsilon, config.delta);

  const double half = config.clip_range / 2.0;
  RowMatrix h = data;
  std::size_t done = 0;
  int actnorm_seen = 0;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (!std::holds_alternative<ActNormLayer>(model.layers()[i])) continue;
    for (Eigen::Index r = 0; r < n; ++r) {
      h.row(r) = model.ForwardRange(h.row(r).transpose(), done, i).transpose();
    }
    done = i;

    const RowMatrix clipped = h.cwiseMax(-half).cwiseMin(half);
    Vector mean = clipped.colwise().mean().transpose();
    const RowMatrix centered = clipped.rowwise() - mean.transpose();
    Vector std = (centered.colwise().squaredNorm() / static_cast<double>(n))
                     .cwiseSqrt()
                     .transpose();
    if (report.mean_noise_scale > 0.0) {
      mean = LaplaceNoise(mean, report.mean_noise_scale,
                          DeriveSeed(config.seed, 2 * actnorm_seen));
    }
    if (report.std_noise_scale > 0.0) {
      std = LaplaceNoise(std, report.std_noise_scale,
                         DeriveSeed(config.seed, 2 * actnorm_seen + 1));
    }
    std = std.cwiseMax(kActNormScaleFloor);

    auto& layer = std::get<ActNormLayer>(model.mutable_layer(i));
    layer.set_offset(mean);
    layer.set_scale(std);
    report.layers.push_back({i, mean, std});
    ++actnorm_seen;
  }
  return report;
}

}  // namespace dpflow
