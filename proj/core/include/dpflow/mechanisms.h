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

#ifndef DPFLOW_MECHANISMS_H_
#define DPFLOW_MECHANISMS_H_

#include <cstdint>

#include "dpflow/types.h"

namespace dpflow {

// Noise standard deviation of the classical Gaussian mechanism,
// sqrt(2 ln(1.25/delta)) * l2_sensitivity / epsilon, inflated by a relative
// 1e-12 so the strict inequality of the guarantee holds.
double GaussianMechanismSigma(double l2_sensitivity, double epsilon,
                              double delta);

Vector GaussianMechanism(VectorRef value, double l2_sensitivity,
                         double epsilon, double delta, std::uint64_t seed);

// Adds i.i.d. Laplace(0, scale) noise.
Vector LaplaceNoise(VectorRef value, double scale, std::uint64_t seed);

enum class DistributionLabel { kInDistribution, kOutOfDistribution };

// P(in-distribution) = exp(eps c/2) / (exp(eps c/2) + exp(eps (k-c)/2)),
// evaluated as the logistic 1 / (1 + exp(-eps (2c - k) / 2)).
double ExpMechInProbability(int votes, int total, double epsilon);

// One draw of the binary exponential mechanism over vote count `votes` of
// `total`.
DistributionLabel ExpMechBinary(int votes, int total, double epsilon,
                                std::uint64_t seed);

}  // namespace dpflow

#endif  // DPFLOW_MECHANISMS_H_
