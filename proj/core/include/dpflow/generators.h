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

// Synthetic two-dimensional benchmarks.

#ifndef DPFLOW_GENERATORS_H_
#define DPFLOW_GENERATORS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "dpflow/dataset.h"

namespace dpflow {

// Upper arc (cos t, sin t) and lower arc (1 - cos t, 0.5 - sin t), t evenly
// spaced on [0, pi], n / 2 points on the upper arc. Rows are shuffled;
// `arcs`, when given, receives 0 (upper) or 1 (lower) per row.
Dataset GenHalfMoons(int n, double noise_std, std::uint64_t seed,
                     std::vector<int>* arcs = nullptr);

struct PinwheelParams {
  int arms = 5;
  double radial_std = 0.3;
  double tangential_std = 0.05;
  double rate = 0.25;  // radians of rotation per unit radius
};

// Arm a holds the points (r, s) = (1 + radial_std * N, tangential_std * N)
// rotated by 2 pi a / arms + rate * r. Arm sizes differ by at most one.
Dataset GenPinwheel(int n, const PinwheelParams& params, std::uint64_t seed,
                    std::vector<int>* arms = nullptr);

// Equal-weight mixture of eight N(c_k, 0.2^2 I), c_k on the radius-2 circle.
Dataset GenGaussians8(int n, std::uint64_t seed,
                      std::vector<int>* components = nullptr);

}  // namespace dpflow

#endif  // DPFLOW_GENERATORS_H_
