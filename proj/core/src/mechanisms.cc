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

#include "dpflow/mechanisms.h"

#include <cmath>
#include <random>

#include "dpflow/error.h"
#include "dpflow/random.h"

namespace dpflow {

double GaussianMechanismSigma(double l2_sensitivity, double epsilon,
                              double delta) {
  if (!(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) ||
      !(l2_sensitivity > 0.0)) {
    throw ConfigurationError(
        "Gaussian mechanism needs epsilon > 0, delta in (0,1), sensitivity > 0");
  }
  return std::sqrt(2.0 * std::log(1.25 / delta)) * l2_sensitivity / epsilon *
         (1.0 + 1e-12);
}

Vector GaussianMechanism(VectorRef value, double l2_sensitivity,
                         double epsilon, double delta, std::uint64_t seed) {
  const double sigma = GaussianMechanismSigma(l2_sensitivity, epsilon, delta);
  Rng rng = MakeRng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  Vector out = value;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += normal(rng);
  return out;
}

Vector LaplaceNoise(VectorRef value, double scale, std::uint64_t seed) {
  if (!(scale > 0.0)) throw ConfigurationError("Laplace scale must be positive");
  Rng rng = MakeRng(seed);
  // Difference of two unit exponentials is a unit Laplace variate.
  std::exponential_distribution<double> exponential(1.0);
  Vector out = value;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double a = exponential(rng);
    const double b = exponential(rng);
    out[i] += scale * (a - b);
  }
  return out;
}

double ExpMechInProbability(int votes, int total, double epsilon) {
  if (votes < 0 || total < 0 || votes > total) {
    throw ConfigurationError("vote count must satisfy 0 <= c <= k");
  }
  if (!(epsilon >= 0.0)) throw ConfigurationError("epsilon must be >= 0");
  return 1.0 / (1.0 + std::exp(-epsilon * (2.0 * votes - total) / 2.0));
}

DistributionLabel ExpMechBinary(int votes, int total, double epsilon,
                                std::uint64_t seed) {
  const double p_in = ExpMechInProbability(votes, total, epsilon);
  Rng rng = MakeRng(seed);
  return UniformUnit(rng) < p_in ? DistributionLabel::kInDistribution
                                 : DistributionLabel::kOutOfDistribution;
}

}  // namespace dpflow
