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

#include "dpflow/flow_layers.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "dpflow/error.h"
#include "dpflow/random.h"
#include "oracles.h"

namespace dpflow {
namespace {

using Tensor = MadeLayer::Tensor;

MadeLayer RandomMade(int dim, int hidden, std::uint64_t seed,
                     double head_scale = 1.0) {
  MadeLayer layer(dim, hidden);
  Rng rng = MakeRng(seed);
  layer.InitializeRandom(rng, head_scale);
  return layer;
}

TEST(MadeLayerTest, ZeroWeightsAreIdentity) {
  MadeLayer layer(3, 8);
  const Vector x = (Vector(3) << 1, 2, 3).finished();
  const auto r = layer.Forward(x);
  EXPECT_EQ(r.y, x);
  EXPECT_EQ(r.logdet, 0.0);
}

TEST(MadeLayerTest, ConstantLogScale) {
  MadeLayer layer(3, 8);
  layer.set_bias(Tensor::kBAlpha, Vector::Constant(3, std::log(2.0)));
  const Vector x = (Vector(3) << 1, 2, 3).finished();
  const auto r = layer.Forward(x);
  EXPECT_NEAR(r.y[0], 0.5, 1e-15);
  EXPECT_NEAR(r.y[1], 1.0, 1e-15);
  EXPECT_NEAR(r.y[2], 1.5, 1e-15);
  EXPECT_NEAR(r.logdet, -3.0 * std::log(2.0), 1e-15);

  const Vector back = layer.Inverse(r.y);
  EXPECT_NEAR(back[0], 1.0, 1e-14);
  EXPECT_NEAR(back[1], 2.0, 1e-14);
  EXPECT_NEAR(back[2], 3.0, 1e-14);
}

TEST(MadeLayerTest, ZeroWeightInverse) {
  MadeLayer layer(2, 4);
  const Vector u = (Vector(2) << 0.1, -0.2).finished();
  EXPECT_EQ(layer.Inverse(u), u);
}

TEST(MadeLayerTest, LogScaleIsClamped) {
  MadeLayer layer(2, 4, 5.0);
  layer.set_bias(Tensor::kBAlpha, Vector::Constant(2, 40.0));
  const auto r = layer.Forward(Vector::Ones(2));
  EXPECT_DOUBLE_EQ(r.logdet, -10.0);
  EXPECT_DOUBLE_EQ(r.y[0], std::exp(-5.0));
}

TEST(MadeLayerTest, LogDetMatchesNumericalJacobian) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MadeLayer layer = RandomMade(2, 8, seed);
    Rng rng = MakeRng(seed, 1);
    const Vector x = testing::RandomPoint(rng, 2);
    const RowMatrix jac = testing::NumericalJacobian(
        [&](const Vector& v) { return layer.Forward(v).y; }, x, 1e-6);
    EXPECT_NEAR(layer.Forward(x).logdet, testing::LogAbsDet(jac), 1e-5)
        << "seed " << seed;
  }
}

TEST(MadeLayerTest, RoundTrip) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng = MakeRng(seed, 2);
    const int dim = 1 + static_cast<int>(seed % 6);
    const MadeLayer layer = RandomMade(dim, 16, seed);
    const Vector x = testing::RandomPoint(rng, dim, 2.0);
    const Vector back = layer.Inverse(layer.Forward(x).y);
    EXPECT_LT((back - x).cwiseAbs().maxCoeff(), 1e-10) << "seed " << seed;
  }
}

TEST(MadeLayerTest, InverseThenForwardRecoversU) {
  const MadeLayer layer = RandomMade(4, 12, 3);
  Rng rng = MakeRng(3, 3);
  const Vector u = testing::RandomPoint(rng, 4);
  EXPECT_LT((layer.Forward(layer.Inverse(u)).y - u).cwiseAbs().maxCoeff(),
            1e-10);
}

TEST(MadeLayerTest, Autoregressive) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int dim = 2 + static_cast<int>(seed % 4);
    const MadeLayer layer = RandomMade(dim, 10, seed);
    Rng rng = MakeRng(seed, 4);
    const Vector x = testing::RandomPoint(rng, dim);
    const Vector u = layer.Forward(x).y;
    for (int j = 0; j < dim; ++j) {
      Vector moved = x;
      moved[j] += 0.7;
      const Vector v = layer.Forward(moved).y;
      for (int i = 0; i < j; ++i) {
        EXPECT_EQ(u[i], v[i]) << "u_" << i << " moved with x_" << j;
      }
    }
  }
}

TEST(MadeLayerTest, JacobianIsLowerTriangular) {
  const MadeLayer layer = RandomMade(4, 12, 8);
  Rng rng = MakeRng(8, 5);
  const Vector x = testing::RandomPoint(rng, 4);
  const RowMatrix jac = testing::NumericalJacobian(
      [&](const Vector& v) { return layer.Forward(v).y; }, x, 1e-6);
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) EXPECT_EQ(jac(i, j), 0.0);
  }
}

TEST(MadeLayerTest, MasksAreBinaryAndStrict) {
  const MadeLayer layer(5, 12);
  const auto& din = layer.input_degrees();
  const auto& dh = layer.hidden_degrees();
  for (int h = 0; h < 12; ++h) {
    for (int i = 0; i < 5; ++i) {
      const double m = layer.mask_input()(h, i);
      EXPECT_TRUE(m == 0.0 || m == 1.0);
      EXPECT_EQ(m, dh[h] >= din[i] ? 1.0 : 0.0);
    }
  }
  for (int i = 0; i < 5; ++i) {
    for (int h = 0; h < 12; ++h) {
      EXPECT_EQ(layer.mask_output()(i, h), din[i] > dh[h] ? 1.0 : 0.0);
    }
  }
}

TEST(MadeLayerTest, MaskedEntriesStayZero) {
  MadeLayer layer(3, 6);
  layer.set_weights(Tensor::kW1, RowMatrix::Ones(6, 3));
  EXPECT_EQ(layer.weights(Tensor::kW1), layer.mask_input());
  std::vector<double> params(layer.ParameterCount(), 1.0);
  layer.SetParameters(params);
  EXPECT_EQ(layer.weights(Tensor::kWMu), layer.mask_output());
}

TEST(MadeLayerTest, NonFiniteInputThrows) {
  const MadeLayer layer(2, 4);
  Vector x(2);
  x << 1.0, std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(layer.Forward(x), InvalidInputError);
  x << std::numeric_limits<double>::infinity(), 0.0;
  EXPECT_THROW(layer.Inverse(x), InvalidInputError);
}

TEST(MadeLayerTest, ParameterRoundTrip) {
  const MadeLayer layer = RandomMade(3, 7, 11);
  std::vector<double> params(layer.ParameterCount());
  layer.GetParameters(params);
  MadeLayer copy(3, 7);
  copy.SetParameters(params);
  std::vector<double> again(params.size());
  copy.GetParameters(again);
  EXPECT_EQ(params, again);
}

TEST(ActNormLayerTest, DefaultIsIdentity) {
  const ActNormLayer layer(2);
  const Vector x = (Vector(2) << 0.3, -4.0).finished();
  const auto r = layer.Apply(x, ActNormLayer::Direction::kForward);
  EXPECT_EQ(r.y, x);
  EXPECT_EQ(r.logdet, 0.0);
}

TEST(ActNormLayerTest, ForwardExample) {
  const ActNormLayer layer((Vector(2) << 1, 1).finished(),
                           (Vector(2) << 2, 4).finished());
  const auto r = layer.Apply((Vector(2) << 3, 5).finished(),
                             ActNormLayer::Direction::kForward);
  EXPECT_DOUBLE_EQ(r.y[0], 1.0);
  EXPECT_DOUBLE_EQ(r.y[1], 1.0);
  EXPECT_NEAR(r.logdet, -std::log(8.0), 1e-15);
}

TEST(ActNormLayerTest, InverseUndoesForward) {
  const ActNormLayer layer((Vector(3) << 0.5, -1, 2).finished(),
                           (Vector(3) << 0.3, 1.7, 4).finished());
  const Vector x = (Vector(3) << 1, 2, -3).finished();
  const auto f = layer.Apply(x, ActNormLayer::Direction::kForward);
  const auto b = layer.Apply(f.y, ActNormLayer::Direction::kInverse);
  EXPECT_LT((b.y - x).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_DOUBLE_EQ(f.logdet, -b.logdet);
}

TEST(ActNormLayerTest, ScaleBelowFloorIsRejected) {
  EXPECT_THROW(ActNormLayer(Vector::Zero(2), Vector::Constant(2, 1e-7)),
               ConfigurationError);
  ActNormLayer layer(2);
  EXPECT_THROW(layer.set_scale(Vector::Constant(2, -1.0)), ConfigurationError);
  std::vector<double> bad{1.0, 0.0, 5.0, 5.0};
  EXPECT_THROW(layer.SetParameters(bad), ConfigurationError);
  EXPECT_EQ(layer.offset(), Vector::Zero(2));
}

TEST(ReversalLayerTest, Reverses) {
  const ReversalLayer layer(3);
  EXPECT_EQ(layer.Apply((Vector(3) << 1, 2, 3).finished()),
            (Vector(3) << 3, 2, 1).finished());
}

}  // namespace
}  // namespace dpflow
