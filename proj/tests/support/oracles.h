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

// Independent reference computations shared by the unit and acceptance
// suites.

#ifndef DPFLOW_TESTS_SUPPORT_ORACLES_H_
#define DPFLOW_TESTS_SUPPORT_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/LU>

#include "dpflow/flow_model.h"
#include "dpflow/random.h"
#include "dpflow/types.h"

namespace dpflow::testing {

struct RandomModelSpec {
  int dim = 2;
  int hidden = 8;
  int blocks = 2;
  bool actnorm = false;
  bool gmm_base = false;
};

inline RandomModelSpec DrawSpec(Rng& rng, int max_dim, int max_hidden,
                                int max_blocks) {
  std::uniform_int_distribution<int> d(1, max_dim);
  std::uniform_int_distribution<int> h(2, max_hidden);
  std::uniform_int_distribution<int> b(1, max_blocks);
  RandomModelSpec s;
  s.dim = d(rng);
  s.hidden = std::max(h(rng), s.dim);
  s.blocks = b(rng);
  s.actnorm = UniformUnit(rng) < 0.5;
  s.gmm_base = UniformUnit(rng) < 0.3;
  return s;
}

inline GmmParams RandomGmm(Rng& rng, int dim, int components) {
  std::normal_distribution<double> normal;
  GmmParams g;
  g.weights = Vector(components);
  for (int m = 0; m < components; ++m) g.weights[m] = 0.2 + UniformUnit(rng);
  g.weights /= g.weights.sum();
  g.means = RowMatrix(components, dim);
  g.variances = RowMatrix(components, dim);
  for (int m = 0; m < components; ++m) {
    for (int j = 0; j < dim; ++j) {
      g.means(m, j) = normal(rng);
      g.variances(m, j) = 0.3 + UniformUnit(rng);
    }
  }
  return g;
}

// A flow whose MADE heads are far from identity and whose ActNorm layers
// have non-trivial parameters.
inline FlowModel RandomModel(const RandomModelSpec& spec, std::uint64_t seed) {
  MafConfig config;
  config.dim = spec.dim;
  config.blocks = spec.blocks;
  config.hidden = spec.hidden;
  config.actnorm = spec.actnorm;
  config.head_init_scale = 0.5;
  FlowModel model = FlowModel::MakeMaf(config, seed);
  Rng rng = MakeRng(seed, 99);
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (auto* an = std::get_if<ActNormLayer>(&model.mutable_layer(i))) {
      Vector offset(spec.dim);
      Vector scale(spec.dim);
      for (int j = 0; j < spec.dim; ++j) {
        offset[j] = UniformUnit(rng) - 0.5;
        scale[j] = 0.5 + UniformUnit(rng);
      }
      an->set_offset(offset);
      an->set_scale(scale);
    }
  }
  if (spec.gmm_base) model.set_base(BaseDistribution(RandomGmm(rng, spec.dim, 3)));
  return model;
}

inline Vector RandomPoint(Rng& rng, int dim, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector x(dim);
  for (int j = 0; j < dim; ++j) x[j] = normal(rng);
  return x;
}

// Smallest distance of any ReLU pre-activation or raw log-scale from a kink
// when evaluating `model` at x. Finite differences are meaningless near 0.
inline double KinkMargin(const FlowModel& model, VectorRef x) {
  double margin = std::numeric_limits<double>::infinity();
  Vector h = x;
  for (std::size_t k = 0; k < model.layers().size(); ++k) {
    if (const auto* made = std::get_if<MadeLayer>(&model.layers()[k])) {
      MadeLayer::Cache cache;
      made->ForwardCached(h, cache);
      margin = std::min(margin, cache.pre1.cwiseAbs().minCoeff());
      margin = std::min(margin, cache.pre2.cwiseAbs().minCoeff());
      margin = std::min(
          margin, (cache.alpha_raw.cwiseAbs().array() - made->scale_clamp())
                      .abs()
                      .minCoeff());
    }
    h = model.ForwardRange(h, k, k + 1);
  }
  return margin;
}

// Central differences of -log p(x) with respect to every parameter.
inline Vector FiniteDifferenceGrad(const FlowModel& model, VectorRef x,
                                   double step) {
  FlowModel work = model;
  const Vector theta = model.GetParameters();
  Vector grad(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector plus = theta;
    Vector minus = theta;
    plus[i] += step;
    minus[i] -= step;
    work.SetParameters(plus);
    const double f_plus = -work.LogProb(x);
    work.SetParameters(minus);
    const double f_minus = -work.LogProb(x);
    grad[i] = (f_plus - f_minus) / (2.0 * step);
  }
  return grad;
}

// |a - b| / max(|a|, |b|, floor).
inline double RelativeError(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline RowMatrix NumericalJacobian(const std::function<Vector(const Vector&)>& f,
                                   const Vector& x, double step) {
  const Vector y0 = f(x);
  RowMatrix jac(y0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector plus = x;
    Vector minus = x;
    plus[j] += step;
    minus[j] -= step;
    jac.col(j) = (f(plus) - f(minus)) / (2.0 * step);
  }
  return jac;
}

inline double LogAbsDet(const RowMatrix& m) {
  return std::log(std::abs(Eigen::MatrixXd(m).determinant()));
}

// Trapezoid rule for a 1-D model's density over [lo, hi].
inline double IntegrateDensity1d(const FlowModel& model, double lo, double hi,
                                 double step) {
  const auto n = static_cast<long long>(std::llround((hi - lo) / step));
  double total = 0.0;
  Vector x(1);
  for (long long i = 0; i <= n; ++i) {
    x[0] = lo + i * step;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    total += w * std::exp(model.LogProb(x));
  }
  return total * step;
}

// Fraction of (positive, negative) pairs ranked correctly, ties counting 1/2.
inline double PairCountingAuc(const std::vector<double>& scores,
                              const std::vector<int>& labels) {
  double good = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) good += 1.0;
      if (scores[i] == scores[j]) good += 0.5;
    }
  }
  return good / pairs;
}

// Exhaustive k-nearest-neighbour regression on the last column.
inline double BruteForceKnnMse(const RowMatrix& train, const RowMatrix& test,
                               int k) {
  const Eigen::Index f = train.cols() - 1;
  double sse = 0.0;
  for (Eigen::Index i = 0; i < test.rows(); ++i) {
    std::vector<std::pair<double, Eigen::Index>> all;
    for (Eigen::Index j = 0; j < train.rows(); ++j) {
      double d = 0.0;
      for (Eigen::Index c = 0; c < f; ++c) {
        d += (train(j, c) - test(i, c)) * (train(j, c) - test(i, c));
      }
      all.emplace_back(d, j);
    }
    std::sort(all.begin(), all.end());
    double pred = 0.0;
    for (int m = 0; m < k; ++m) pred += train(all[m].second, f);
    pred /= k;
    sse += (pred - test(i, f)) * (pred - test(i, f));
  }
  return sse / test.rows();
}

// Binomial standard deviation of an empirical frequency.
inline double BinomialSigma(double p, int n) {
  return std::sqrt(p * (1.0 - p) / n);
}

}  // namespace dpflow::testing

#endif  // DPFLOW_TESTS_SUPPORT_ORACLES_H_
