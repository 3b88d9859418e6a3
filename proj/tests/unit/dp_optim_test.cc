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

#include "dpflow/dp_optim.h"

#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "dpflow/error.h"
#include "dpflow/generators.h"
#include "oracles.h"

namespace dpflow {
namespace {

class StubAccountant : public PrivacyAccountant {
 public:
  explicit StubAccountant(double per_step) : per_step_(per_step) {}
  double Epsilon(std::int64_t steps) const override {
    return per_step_ * static_cast<double>(steps);
  }
  std::string Name() const override { return "stub"; }

 private:
  double per_step_;
};

FlowModel SmallModel(int dim, std::uint64_t seed) {
  MafConfig config;
  config.dim = dim;
  config.blocks = 2;
  config.hidden = 8;
  return FlowModel::MakeMaf(config, seed);
}

RowMatrix Gaussian(int n, int dim, std::uint64_t seed) {
  Rng rng = MakeRng(seed);
  RowMatrix x(n, dim);
  for (int i = 0; i < n; ++i) x.row(i) = testing::RandomPoint(rng, dim);
  return x;
}

TEST(ClipGradTest, Examples) {
  const Gradient g = (Gradient(2) << 3, 4).finished();  // norm 5
  const Gradient halved = ClipGrad(g, 2.5);
  EXPECT_EQ(halved, g / 2);
  EXPECT_DOUBLE_EQ(halved.norm(), 2.5);
  EXPECT_EQ(ClipGrad(g, 10.0), g);
  EXPECT_EQ(ClipGrad(Gradient::Zero(3), 1.0), Gradient::Zero(3));
}

TEST(ClipGradTest, NormBoundDirectionAndIdempotence) {
  Rng rng = MakeRng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Gradient g = testing::RandomPoint(rng, 7, 5.0);
    const double c = 0.1 + UniformUnit(rng) * 10;
    const Gradient once = ClipGrad(g, c);
    EXPECT_LE(once.norm(), c * (1 + 1e-15));
    EXPECT_NEAR(once.normalized().dot(g.normalized()), 1.0, 1e-12);
    EXPECT_TRUE(ClipGrad(once, c).isApprox(once, 1e-15));
  }
}

TEST(NoisyMeanTest, NoNoiseIsExactMean) {
  std::vector<Gradient> grads{(Gradient(2) << 1, 2).finished(),
                              (Gradient(2) << 3, -2).finished()};
  Rng rng = MakeRng(0);
  EXPECT_EQ(NoisyMean(grads, 10.0, 0.0, rng), (Gradient(2) << 2, 0).finished());
  std::vector<Gradient> one{(Gradient(2) << 0.5, 0.25).finished()};
  EXPECT_EQ(NoisyMean(one, 1.0, 0.0, rng), one.front());
  EXPECT_THROW(NoisyMean(std::vector<Gradient>{}, 1.0, 1.0, rng),
               InvalidInputError);
}

TEST(NoisyMeanTest, NoiseVariance) {
  const int b = 4;
  const double c = 2.0;
  const double sigma = 1.5;
  std::vector<Gradient> grads(b, Gradient::Constant(1, 0.25));
  Rng rng = MakeRng(3);
  const int draws = 100000;
  double sum_sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double d = NoisyMean(grads, c, sigma, rng)[0] - 0.25;
    sum_sq += d * d;
  }
  const double expected = sigma * sigma * c * c / (b * b);
  EXPECT_NEAR(sum_sq / draws / expected, 1.0, 0.02);
}

TEST(ApplyUpdateTest, Sgd) {
  Vector theta = (Vector(2) << 1, 1).finished();
  OptimizerState state(OptimizerKind::kSgd, 2);
  ApplyUpdate(theta, (Gradient(2) << 0.5, -0.5).finished(), state, 0.1);
  EXPECT_NEAR(theta[0], 0.95, 1e-15);
  EXPECT_NEAR(theta[1], 1.05, 1e-15);
}

TEST(ApplyUpdateTest, AdamFirstStepIsSignStep) {
  Vector theta = Vector::Zero(3);
  OptimizerState state(OptimizerKind::kAdam, 3);
  const Gradient g = (Gradient(3) << 2.0, -0.3, 1e-3).finished();
  ApplyUpdate(theta, g, state, 0.01);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(theta[i], -0.01 * (g[i] > 0 ? 1 : -1), 0.01 * 1e-8 / std::abs(g[i]) * 2);
  }
  EXPECT_EQ(state.steps(), 1);
  EXPECT_GE(state.second_moment().minCoeff(), 0.0);
}

TEST(ApplyUpdateTest, ZeroGradientKeepsParameters) {
  Vector theta = (Vector(2) << 0.3, -0.7).finished();
  const Vector before = theta;
  OptimizerState state(OptimizerKind::kAdam, 2);
  ApplyUpdate(theta, Gradient::Zero(2), state, 0.1);
  EXPECT_EQ(theta, before);
  EXPECT_THROW(ApplyUpdate(theta, Gradient::Zero(3), state, 0.1),
               ConfigurationError);
}

TEST(SumClippedGradientsTest, NeighbouringBatchSensitivity) {
  const FlowModel model = testing::RandomModel({2, 8, 2, true, false}, 4);
  const RowMatrix data = Gaussian(20, 2, 4) * 3.0;
  const double c = 0.5;
  std::vector<Eigen::Index> batch{0, 1, 2, 3, 4};
  const Gradient base = *SumClippedGradients(model, data, batch, c);
  for (Eigen::Index replacement = 5; replacement < 20; ++replacement) {
    std::vector<Eigen::Index> other = batch;
    other[2] = replacement;
    const Gradient g = *SumClippedGradients(model, data, other, c);
    EXPECT_LE((g - base).norm(), 2 * c + 1e-12);
    std::vector<Eigen::Index> removed{0, 1, 3, 4};
    EXPECT_LE((*SumClippedGradients(model, data, removed, c) - base).norm(),
              c + 1e-12);
  }
}

TEST(TrainDpNfTest, ImmediateHalt) {
  const RowMatrix data = Gaussian(50, 2, 1);
  const FlowModel model = SmallModel(2, 1);
  TrainConfig config;
  config.batch_size = 10;
  config.epsilon = 1.0;
  const TrainResult r = TrainDpNf(data, model, config, StubAccountant(1.0));
  EXPECT_EQ(r.report.iterations, 0);
  EXPECT_EQ(r.model.GetParameters(), model.GetParameters());
  EXPECT_EQ(r.report.final_epsilon, 0.0);
}

TEST(TrainDpNfTest, HaltsBeforeBudgetIsReached) {
  const RowMatrix data = Gaussian(200, 2, 2);
  TrainConfig config;
  config.batch_size = 20;
  config.epsilon = 3.0;
  config.noise_multiplier = 1.0;
  config.accountant = AccountantMethod::kRdp;
  config.max_iterations = 10000;
  const TrainResult r = TrainDpNf(data, SmallModel(2, 2), config);
  const RdpAccountant acc(0.1, 1.0, config.delta);
  EXPECT_LT(r.report.final_epsilon, config.epsilon);
  EXPECT_EQ(r.report.final_epsilon, acc.Epsilon(r.report.iterations));
  EXPECT_GE(acc.Epsilon(r.report.iterations + 1), config.epsilon);
  EXPECT_GT(r.report.iterations, 0);
}

TEST(TrainDpNfTest, IterationCapAndCheckpoints) {
  const RowMatrix data = Gaussian(100, 2, 3);
  TrainConfig config;
  config.batch_size = 10;
  config.epsilon = 1e6;
  config.max_iterations = 25;
  config.checkpoint_every = 10;
  std::vector<std::int64_t> seen;
  const TrainResult r = TrainDpNf(
      data, SmallModel(2, 3), config, data,
      [&](const Checkpoint& c) { seen.push_back(c.step); });
  EXPECT_EQ(r.report.iterations, 25);
  EXPECT_EQ(seen, (std::vector<std::int64_t>{0, 10, 20, 25}));
  double prev = 0.0;
  for (const auto& c : r.report.checkpoints) {
    EXPECT_GE(c.epsilon, prev);
    prev = c.epsilon;
    EXPECT_TRUE(c.train_nll.has_value());
    EXPECT_TRUE(c.heldout_nll.has_value());
  }
  const auto j = r.report.ToJson();
  EXPECT_EQ(j["iterations"], 25);
  EXPECT_EQ(j["checkpoints"].size(), 4u);
}

TEST(TrainDpNfTest, Deterministic) {
  const RowMatrix data = Gaussian(100, 3, 4);
  TrainConfig config;
  config.batch_size = 16;
  config.epsilon = 1e6;
  config.max_iterations = 20;
  config.seed = 99;
  const auto a = TrainDpNf(data, SmallModel(3, 4), config);
  const auto b = TrainDpNf(data, SmallModel(3, 4), config);
  EXPECT_EQ(a.model.GetParameters(), b.model.GetParameters());
  config.seed = 100;
  const auto c = TrainDpNf(data, SmallModel(3, 4), config);
  EXPECT_NE(a.model.GetParameters(), c.model.GetParameters());
}

TEST(TrainDpNfTest, HugeNoiseStillReportsBudget) {
  const RowMatrix data = Gaussian(100, 2, 5);
  TrainConfig config;
  config.batch_size = 10;
  config.noise_multiplier = 1e6;
  config.epsilon = 1e-3;
  config.max_iterations = 50;
  const TrainResult r = TrainDpNf(data, SmallModel(2, 5), config);
  const GdpAccountant acc(0.1, 1e6, config.delta);
  EXPECT_EQ(r.report.final_epsilon, acc.Epsilon(r.report.iterations));
  EXPECT_EQ(r.report.iterations, 50);
  EXPECT_LT(r.report.final_epsilon, config.epsilon);
}

TEST(TrainDpNfTest, NonFiniteBatchesAreSkippedButCharged) {
  RowMatrix data = Gaussian(4, 1, 6);
  data(0, 0) = 1e200;  // log-density underflows to -inf
  TrainConfig config;
  config.batch_size = 1;
  config.epsilon = 1e6;
  config.max_iterations = 40;
  config.max_consecutive_nonfinite = 40;
  const StubAccountant acc(0.5);
  const TrainResult r = TrainDpNf(data, SmallModel(1, 6), config, acc);
  EXPECT_EQ(r.report.iterations, 40);
  EXPECT_GT(r.report.skipped_batches, 0);
  EXPECT_LT(r.report.skipped_batches, 40);
  EXPECT_EQ(r.report.final_epsilon, 20.0);
}

TEST(TrainDpNfTest, PersistentNonFiniteLossThrows) {
  const RowMatrix data = RowMatrix::Constant(10, 1, 1e200);
  TrainConfig config;
  config.batch_size = 2;
  config.epsilon = 1e6;
  config.max_consecutive_nonfinite = 5;
  EXPECT_THROW(TrainDpNf(data, SmallModel(1, 7), config), InstabilityError);
}

TEST(TrainDpNfTest, NonFiniteAccountantThrows) {
  class Broken : public PrivacyAccountant {
   public:
    double Epsilon(std::int64_t) const override {
      return std::numeric_limits<double>::quiet_NaN();
    }
    std::string Name() const override { return "broken"; }
  };
  TrainConfig config;
  config.batch_size = 2;
  EXPECT_THROW(TrainDpNf(Gaussian(10, 1, 8), SmallModel(1, 8), config, Broken()),
               AccountingError);
}

TEST(TrainDpNfTest, PoissonSampling) {
  const RowMatrix data = Gaussian(200, 2, 9);
  TrainConfig config;
  config.batch_size = 20;
  config.epsilon = 1e6;
  config.max_iterations = 15;
  config.sampling = SamplingMode::kPoisson;
  const TrainResult r = TrainDpNf(data, SmallModel(2, 9), config);
  EXPECT_EQ(r.report.iterations, 15);
  EXPECT_NE(r.model.GetParameters(), SmallModel(2, 9).GetParameters());
}

TEST(TrainDpNfTest, ConfigValidation) {
  const RowMatrix data = Gaussian(10, 2, 10);
  TrainConfig config;
  config.batch_size = 11;
  EXPECT_THROW(TrainDpNf(data, SmallModel(2, 1), config), ConfigurationError);
  config.batch_size = 5;
  config.delta = 1.0;
  EXPECT_THROW(TrainDpNf(data, SmallModel(2, 1), config), ConfigurationError);
  config.delta = 1e-5;
  EXPECT_THROW(TrainDpNf(data, SmallModel(3, 1), config), ConfigurationError);
  EXPECT_THROW(ParseOptimizerKind("rmsprop"), ConfigurationError);
  EXPECT_THROW(ParseSamplingMode("shuffle"), ConfigurationError);
}

TEST(TrainDpNfTest, HalfMoonsHeldOutNllImproves) {
  const RowMatrix all = GenHalfMoons(30000, 0.1, 1).values;
  const RowMatrix train = all.topRows(27000);
  const RowMatrix heldout = all.bottomRows(3000);
  MafConfig arch;  // default architecture
  const FlowModel model = FlowModel::MakeMaf(arch, 1);
  TrainConfig config;
  config.noise_multiplier = 1.1;
  config.clip_norm = 200.0;
  config.batch_size = 256;
  config.learning_rate = 1e-3;
  config.epsilon = 10.0;
  config.max_iterations = 150;
  const TrainResult r = TrainDpNf(train, model, config, heldout);
  const double before = *r.report.checkpoints.front().heldout_nll;
  const double after = *r.report.checkpoints.back().heldout_nll;
  EXPECT_LT(after, before);
}

TEST(TrainNonPrivateTest, ImprovesFit) {
  const RowMatrix data = Gaussian(500, 2, 11) * 2.0;
  NonPrivateConfig config;
  config.iterations = 200;
  config.learning_rate = 1e-2;
  const FlowModel start = SmallModel(2, 11);
  const FlowModel trained = TrainNonPrivate(data, start, config);
  EXPECT_LT(trained.NllLoss(data), start.NllLoss(data));
}

TEST(SafeNllTest, ReturnsNulloptOnOverflow) {
  const FlowModel model = SmallModel(1, 1);
  EXPECT_FALSE(SafeNll(model, RowMatrix::Constant(3, 1, 1e200), 3).has_value());
  EXPECT_TRUE(SafeNll(model, RowMatrix::Zero(3, 1), 3).has_value());
  EXPECT_FALSE(SafeNll(model, RowMatrix(0, 1), 3).has_value());
}

}  // namespace
}  // namespace dpflow
