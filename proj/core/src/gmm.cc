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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "dpflow/error.h"
#include "dpflow/random.h"

namespace dpflow {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)

// Per-component log(pi_m) + log N(x; mean_m, var_m) into `out`.
void ComponentLogDensities(const GmmParams& gmm, VectorRef x,
                           Eigen::Ref<Vector> out) {
  const int dim = gmm.dim();
  for (int m = 0; m < gmm.components(); ++m) {
    double quad = 0.0;
    double log_det = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double diff = x[d] - gmm.means(m, d);
      quad += diff * diff / gmm.variances(m, d);
      log_det += std::log(gmm.variances(m, d));
    }
    out[m] = std::log(gmm.weights[m]) - 0.5 * (dim * kLog2Pi + log_det + quad);
  }
}

double LogSumExp(const Vector& v) {
  const double max = v.maxCoeff();
  if (!std::isfinite(max)) return max;
  return max + std::log((v.array() - max).exp().sum());
}

}  // namespace

void GmmParams::Validate() const {
  const int m = components();
  if (m < 1) throw ConfigurationError("GMM needs at least one component");
  if (means.rows() != m || variances.rows() != m ||
      variances.cols() != means.cols() || means.cols() < 1) {
    throw ConfigurationError("GMM parameter shapes disagree");
  }
  if ((weights.array() < 0.0).any() ||
      std::abs(weights.sum() - 1.0) > 1e-9) {
    throw ConfigurationError("GMM weights must lie on the probability simplex");
  }
  if ((variances.array() < kGmmVarianceFloor).any()) {
    throw ConfigurationError("GMM variance below floor");
  }
}

double GmmLogPdf(const GmmParams& gmm, VectorRef x) {
  if (x.size() != gmm.dim()) {
    throw InvalidInputError("GMM dimension mismatch");
  }
  Vector terms(gmm.components());
  ComponentLogDensities(gmm, x, terms);
  return LogSumExp(terms);
}

double GmmLogPdfWithGrad(const GmmParams& gmm, VectorRef x,
                         Eigen::Ref<Vector> grad_x) {
  if (x.size() != gmm.dim()) {
    throw InvalidInputError("GMM dimension mismatch");
  }
  Vector terms(gmm.components());
  ComponentLogDensities(gmm, x, terms);
  const double log_p = LogSumExp(terms);
  grad_x.setZero();
  for (int m = 0; m < gmm.components(); ++m) {
    const double resp = std::exp(terms[m] - log_p);
    for (int d = 0; d < gmm.dim(); ++d) {
      grad_x[d] -= resp * (x[d] - gmm.means(m, d)) / gmm.variances(m, d);
    }
  }
  return log_p;
}

RowMatrix GmmSample(const GmmParams& gmm, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigurationError("sample count must be positive");
  Rng rng = MakeRng(seed);
  std::discrete_distribution<int> pick(gmm.weights.data(),
                                       gmm.weights.data() + gmm.weights.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix out(n, gmm.dim());
  for (int i = 0; i < n; ++i) {
    const int m = pick(rng);
    for (int d = 0; d < gmm.dim(); ++d) {
      out(i, d) = gmm.means(m, d) + std::sqrt(gmm.variances(m, d)) * normal(rng);
    }
  }
  return out;
}

double GmmMeanLogLikelihood(const GmmParams& gmm, const RowMatrix& data) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    total += GmmLogPdf(gmm, data.row(i).transpose());
  }
  return total / static_cast<double>(data.rows());
}

EmResult GmmFitEm(const RowMatrix& data, int components, int iterations,
                  std::uint64_t seed) {
  const Eigen::Index n = data.rows();
  const Eigen::Index dim = data.cols();
  if (components < 1) throw ConfigurationError("components must be positive");
  if (n <= components) {
    throw ConfigurationError("EM needs more rows than components");
  }
  Rng rng = MakeRng(seed);

  // k-means++ seeding of the means.
  RowMatrix means(components, dim);
  std::uniform_int_distribution<Eigen::Index> any_row(0, n - 1);
  means.row(0) = data.row(any_row(rng));
  Vector nearest = Vector::Constant(n, std::numeric_limits<double>::infinity());
  for (int m = 1; m < components; ++m) {
    for (Eigen::Index i = 0; i < n; ++i) {
      nearest[i] =
          std::min(nearest[i], (data.row(i) - means.row(m - 1)).squaredNorm());
    }
    const double total = nearest.sum();
    Eigen::Index chosen = any_row(rng);
    if (total > 0.0) {
      double target = UniformUnit(rng) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= nearest[i];
        if (target < 0.0) {
          chosen = i;
          break;
        }
      }
    }
    means.row(m) = data.row(chosen);
  }

  const Eigen::RowVectorXd col_mean = data.colwise().mean();
  Eigen::RowVectorXd col_var =
      (data.rowwise() - col_mean).array().square().colwise().mean();
  col_var = col_var.cwiseMax(kGmmVarianceFloor);

  EmResult result;
  GmmParams& gmm = result.params;
  gmm.weights = Vector::Constant(components, 1.0 / components);
  gmm.means = means;
  gmm.variances = col_var.replicate(components, 1);

  RowMatrix resp(n, components);
  Vector terms(components);
  for (int iter = 0; iter <= iterations; ++iter) {
    // E-step; also yields the log-likelihood of the current parameters.
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      ComponentLogDensities(gmm, data.row(i).transpose(), terms);
      const double lse = LogSumExp(terms);
      ll += lse;
      resp.row(i) = (terms.array() - lse).exp().transpose();
    }
    result.log_likelihood.push_back(ll / static_cast<double>(n));
    if (iter == iterations) break;

    // M-step.
    const Eigen::RowVectorXd mass = resp.colwise().sum();
    bool reseeded = false;
    for (int m = 0; m < components; ++m) {
      if (mass[m] < 1e-10) {
        ++result.reseeded_components;
        reseeded = true;
        gmm.means.row(m) = data.row(any_row(rng));
        gmm.variances.row(m).setConstant(kGmmVarianceFloor);
        gmm.weights[m] = mass[m] / static_cast<double>(n);
        continue;
      }
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(dim);
      for (Eigen::Index i = 0; i < n; ++i) mean += resp(i, m) * data.row(i);
      mean /= mass[m];
      Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(dim);
      for (Eigen::Index i = 0; i < n; ++i) {
        var += resp(i, m) * (data.row(i) - mean).array().square().matrix();
      }
      var /= mass[m];
      gmm.means.row(m) = mean;
      gmm.variances.row(m) = var.cwiseMax(kGmmVarianceFloor);
      gmm.weights[m] = mass[m] / static_cast<double>(n);
    }
    if (reseeded) {
      // A re-seeded component needs nonzero weight to attract mass again.
      gmm.weights = gmm.weights.cwiseMax(1e-12);
    }
    gmm.weights /= gmm.weights.sum();
  }
  return result;
}

}  // namespace dpflow
