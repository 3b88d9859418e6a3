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

#include "dpflow/gmm.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dpflow/error.h"
#include "oracles.h"

namespace dpflow {
namespace {

GmmParams StandardGmm(int dim) {
  return {Vector::Ones(1), RowMatrix::Zero(1, dim), RowMatrix::Ones(1, dim)};
}

// Direct sum of weighted Gaussian densities, no log-space tricks.
double DirectGmmPdf(const GmmParams& g, const Vector& x) {
  double total = 0.0;
  for (int m = 0; m < g.components(); ++m) {
    double density = g.weights[m];
    for (int j = 0; j < g.dim(); ++j) {
      const double v = g.variances(m, j);
      const double d = x[j] - g.means(m, j);
      density *= std::exp(-0.5 * d * d / v) / std::sqrt(2.0 * M_PI * v);
    }
    total += density;
  }
  return total;
}

TEST(GmmTest, StandardNormalAtOrigin) {
  EXPECT_NEAR(GmmLogPdf(StandardGmm(2), Vector::Zero(2)), -std::log(2 * M_PI),
              1e-14);
}

TEST(GmmTest, DuplicatedComponentsMatchSingle) {
  GmmParams two{Vector::Constant(2, 0.5), RowMatrix::Zero(2, 2),
                RowMatrix::Ones(2, 2)};
  const Vector x = (Vector(2) << 0.3, -1.2).finished();
  EXPECT_NEAR(GmmLogPdf(two, x), GmmLogPdf(StandardGmm(2), x), 1e-14);
}

TEST(GmmTest, MatchesDirectSummation) {
  Rng rng = MakeRng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const GmmParams g = testing::RandomGmm(rng, 3, 3);
    const Vector x = testing::RandomPoint(rng, 3);
    EXPECT_NEAR(GmmLogPdf(g, x), std::log(DirectGmmPdf(g, x)), 1e-12);
  }
}

TEST(GmmTest, GradientMatchesFiniteDifferences) {
  Rng rng = MakeRng(4);
  const GmmParams g = testing::RandomGmm(rng, 2, 3);
  const Vector x = testing::RandomPoint(rng, 2);
  Vector grad(2);
  EXPECT_DOUBLE_EQ(GmmLogPdfWithGrad(g, x, grad), GmmLogPdf(g, x));
  for (int j = 0; j < 2; ++j) {
    Vector p = x, m = x;
    p[j] += 1e-6;
    m[j] -= 1e-6;
    EXPECT_NEAR(grad[j], (GmmLogPdf(g, p) - GmmLogPdf(g, m)) / 2e-6, 1e-7);
  }
}

TEST(GmmTest, OneDimensionalNormalization) {
  Rng rng = MakeRng(5);
  const GmmParams g = testing::RandomGmm(rng, 1, 4);
  double total = 0.0;
  const double step = 1e-3;
  for (double x = -20.0; x <= 20.0 + 1e-9; x += step) {
    total += std::exp(GmmLogPdf(g, Vector::Constant(1, x))) * step;
  }
  EXPECT_NEAR(total, 1.0, 1e-3);
}

TEST(GmmTest, SampleComponentFrequencies) {
  GmmParams g{(Vector(3) << 0.2, 0.3, 0.5).finished(), RowMatrix(3, 1),
              RowMatrix::Constant(3, 1, 1e-4)};
  g.means << -10, 0, 10;
  const int n = 100000;
  const RowMatrix s = GmmSample(g, n, 8);
  Vector counts = Vector::Zero(3);
  for (int i = 0; i < n; ++i) {
    counts[s(i, 0) < -5 ? 0 : (s(i, 0) < 5 ? 1 : 2)] += 1;
  }
  for (int m = 0; m < 3; ++m) {
    const double p = g.weights[m];
    EXPECT_NEAR(counts[m] / n, p, 3 * testing::BinomialSigma(p, n));
  }
}

TEST(GmmTest, SingleComponentSampleMean) {
  GmmParams g{Vector::Ones(1), RowMatrix::Constant(1, 2, 1.5),
              RowMatrix::Constant(1, 2, 4.0)};
  const int n = 50000;
  const RowMatrix s = GmmSample(g, n, 9);
  for (int j = 0; j < 2; ++j) {
    EXPECT_NEAR(s.col(j).mean(), 1.5, 4 * 2.0 / std::sqrt(n));
  }
  EXPECT_EQ(GmmSample(g, 10, 9), GmmSample(g, 10, 9));
}

TEST(GmmTest, EmSingleComponentIsClosedForm) {
  Rng rng = MakeRng(10);
  RowMatrix x(200, 2);
  for (int i = 0; i < 200; ++i) x.row(i) = testing::RandomPoint(rng, 2, 3.0);
  const EmResult r = GmmFitEm(x, 1, 5, 1);
  const Vector mean = x.colwise().mean();
  const Vector var =
      (x.rowwise() - mean.transpose()).array().square().colwise().mean();
  EXPECT_LT((r.params.means.row(0).transpose() - mean).cwiseAbs().maxCoeff(),
            1e-12);
  EXPECT_LT((r.params.variances.row(0).transpose() - var).cwiseAbs().maxCoeff(),
            1e-12);
  EXPECT_DOUBLE_EQ(r.params.weights[0], 1.0);
}

TEST(GmmTest, EmRecoversSeparatedClusters) {
  Rng rng = MakeRng(11);
  std::normal_distribution<double> normal;
  RowMatrix x(2000, 1);
  for (int i = 0; i < 2000; ++i) x(i, 0) = (i % 2 ? 5.0 : -5.0) + normal(rng);
  const EmResult r = GmmFitEm(x, 2, 100, 3);
  const double lo = r.params.means.col(0).minCoeff();
  const double hi = r.params.means.col(0).maxCoeff();
  EXPECT_NEAR(lo, -5.0, 0.2);
  EXPECT_NEAR(hi, 5.0, 0.2);
}

TEST(GmmTest, EmLogLikelihoodIsMonotone) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = MakeRng(seed, 12);
    RowMatrix x(300, 2);
    for (int i = 0; i < 300; ++i) {
      x.row(i) = testing::RandomPoint(rng, 2) +
                 Vector::Constant(2, 3.0 * static_cast<double>(i % 3));
    }
    const EmResult r = GmmFitEm(x, 4, 60, seed);
    ASSERT_EQ(r.log_likelihood.size(), 61u);
    for (std::size_t t = 1; t < r.log_likelihood.size(); ++t) {
      EXPECT_GE(r.log_likelihood[t], r.log_likelihood[t - 1] - 1e-10)
          << "seed " << seed << " iteration " << t;
    }
    EXPECT_NO_THROW(r.params.Validate());
  }
}

TEST(GmmTest, EmReseedsEmptyComponents) {
  // Many duplicate points leave more components than distinct locations.
  RowMatrix x(40, 1);
  for (int i = 0; i < 40; ++i) x(i, 0) = i < 20 ? 0.0 : 1.0;
  const EmResult r = GmmFitEm(x, 5, 30, 2);
  EXPECT_NO_THROW(r.params.Validate());
  EXPECT_TRUE(r.params.variances.minCoeff() >= kGmmVarianceFloor);
}

TEST(GmmTest, Errors) {
  EXPECT_THROW(GmmFitEm(RowMatrix::Zero(3, 1), 3, 5, 0), ConfigurationError);
  GmmParams bad = StandardGmm(2);
  bad.weights[0] = 0.5;
  EXPECT_THROW(bad.Validate(), ConfigurationError);
  bad = StandardGmm(2);
  bad.variances(0, 0) = 1e-9;
  EXPECT_THROW(bad.Validate(), ConfigurationError);
  EXPECT_THROW(GmmLogPdf(StandardGmm(2), Vector::Zero(3)), InvalidInputError);
}

}  // namespace
}  // namespace dpflow
