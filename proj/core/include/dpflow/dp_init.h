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

// Private data-dependent initialization of ActNorm layers.

#ifndef DPFLOW_DP_INIT_H_
#define DPFLOW_DP_INIT_H_

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpflow/flow_model.h"
#include "dpflow/types.h"

namespace dpflow {

struct InitConfig {
  // Features are clipped to [-clip_range / 2, clip_range / 2].
  double clip_range = 8.0;
  // May be +infinity, in which case no noise is added.
  double epsilon = 1.0;
  double delta = 1e-5;
  std::uint64_t seed = 0;
  // Default to clip_range / n and clip_range / sqrt(n).
  std::optional<double> mean_sensitivity;
  std::optional<double> std_sensitivity;

  void Validate() const;
};

// 2 * sqrt(4 K ln(1/delta)) * sensitivity / epsilon; zero for infinite
// epsilon.
double InitLaplaceScale(int actnorm_layers, double sensitivity, double epsilon,
                        double delta);

struct ActNormInit {
  std::size_t layer_index = 0;
  Vector offset;
  Vector scale;
};

struct InitReport {
  std::vector<ActNormInit> layers;
  double mean_sensitivity = 0.0;
  double std_sensitivity = 0.0;
  bool default_sensitivities = true;
  double mean_noise_scale = 0.0;
  double std_noise_scale = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;

  nlohmann::json ToJson() const;
};

// Initializes every ActNorm layer of `model` in place, in layer order, from
// noisy clipped statistics of the data pushed through the preceding layers.
// Throws InvalidInputError for an empty dataset and ConfigurationError when
// the model has no ActNorm layer.
InitReport DpNfInit(const RowMatrix& data, FlowModel& model,
                    const InitConfig& config);

}  // namespace dpflow

#endif  // DPFLOW_DP_INIT_H_
