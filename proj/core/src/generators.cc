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

#include "dpflow/generators.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "dpflow/error.h"
#include "dpflow/random.h"

namespace dpflow {
namespace {

void ShuffleRows(RowMatrix& x, std::vector<int>& tags, Rng& rng) {
  std::vector<Eigen::Index> order(x.rows());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  RowMatrix shuffled(x.rows(), x.cols());
  std::vector<int> shuffled_tags(tags.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    shuffled.row(i) = x.row(order[i]);
    shuffled_tags[i] = tags[order[i]];
  }
  x = std::move(shuffled);
  tags = std::move(shuffled_tags);
}

Dataset Finish(RowMatrix x, std::vector<int> tags, Rng& rng,
               std::vector<int>* out_tags) {
  ShuffleRows(x, tags, rng);
  if (out_tags != nullptr) *out_tags = std::move(tags);
  return {std::move(x), {"x1", "x2"}, std::nullopt};
}

}  // namespace

Dataset GenHalfMoons(int n, double noise_std, std::uint64_t seed,
                     std::vector<int>* arcs) {
  if (n < 2) throw InvalidInputError("half-moons needs n >= 2");
  if (!(noise_std >= 0.0)) throw ConfigurationError("noise std must be >= 0");
  const int upper = n / 2;
  const int lower = n - upper;
  RowMatrix x(n, 2);
  std::vector<int> tags(n);
  auto angle = [](int i, int count) {
    return count == 1 ? 0.0 : std::numbers::pi * i / (count - 1);
  };
  for (int i = 0; i < upper; ++i) {
    const double t = angle(i, upper);
    x.row(i) << std::cos(t), std::sin(t);
    tags[i] = 0;
  }
  for (int i = 0; i < lower; ++i) {
    const double t = angle(i, lower);
    x.row(upper + i) << 1.0 - std::cos(t), 0.5 - std::sin(t);
    tags[upper + i] = 1;
  }
  Rng rng = MakeRng(seed);
  if (noise_std > 0.0) {
    std::normal_distribution<double> normal(0.0, noise_std);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += normal(rng);
  }
  return Finish(std::move(x), std::move(tags), rng, arcs);
}

Dataset GenPinwheel(int n, const PinwheelParams& params, std::uint64_t seed,
                    std::vector<int>* arms) {
  if (params.arms < 1) throw ConfigurationError("arms must be >= 1");
  if (n < params.arms) throw InvalidInputError("pinwheel needs n >= arms");
  if (!(params.radial_std >= 0.0) || !(params.tangential_std >= 0.0)) {
    throw ConfigurationError("pinwheel noise must be >= 0");
  }
  Rng rng = MakeRng(seed);
  std::normal_distribution<double> normal;
  RowMatrix x(n, 2);
  std::vector<int> tags(n);
  for (int i = 0; i < n; ++i) {
    const int arm = static_cast<int>(static_cast<long long>(i) * params.arms / n);
    const double r = 1.0 + params.radial_std * normal(rng);
    const double s = params.tangential_std * normal(rng);
    const double theta = 2.0 * std::numbers::pi * arm / params.arms +
                         params.rate * r;
    const double c = std::cos(theta);
    const double sn = std::sin(theta);
    x.row(i) << c * r - sn * s, sn * r + c * s;
    tags[i] = arm;
  }
  return Finish(std::move(x), std::move(tags), rng, arms);
}

Dataset GenGaussians8(int n, std::uint64_t seed,
                      std::vector<int>* components) {
  if (n < 8) throw InvalidInputError("gaussians8 needs n >= 8");
  Rng rng = MakeRng(seed);
  std::uniform_int_distribution<int> pick(0, 7);
  std::normal_distribution<double> normal(0.0, 0.2);
  RowMatrix x(n, 2);
  std::vector<int> tags(n);
  for (int i = 0; i < n; ++i) {
    const int k = pick(rng);
    const double theta = 2.0 * std::numbers::pi * k / 8.0;
    x(i, 0) = 2.0 * std::cos(theta) + normal(rng);
    x(i, 1) = 2.0 * std::sin(theta) + normal(rng);
    tags[i] = k;
  }
  return Finish(std::move(x), std::move(tags), rng, components);
}

}  // namespace dpflow
