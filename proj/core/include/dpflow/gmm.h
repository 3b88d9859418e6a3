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

#ifndef DPFLOW_GMM_H_
#define DPFLOW_GMM_H_

#include <cstdint>
#include <vector>

#include "dpflow/types.h"

namespace dpflow {

inline constexpr double kGmmVarianceFloor = 1e-6;

// Diagonal-covariance Gaussian mixture. Row m of `means` / `variances` holds
// component m.
struct GmmParams {
  Vector weights;
  RowMatrix means;
  RowMatrix variances;

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(means.cols()); }

  // Throws ConfigurationError unless weights lie on the simplex, shapes agree
  // and every variance is at least kGmmVarianceFloor.
  void Validate() const;
};

// log sum_m pi_m N(x; mean_m, diag(var_m)), evaluated with log-sum-exp.
double GmmLogPdf(const GmmParams& gmm, VectorRef x);

// As GmmLogPdf, additionally writing d/dx log p(x) into `grad_x`.
double GmmLogPdfWithGrad(const GmmParams& gmm, VectorRef x,
                         Eigen::Ref<Vector> grad_x);

// Categorical component draw followed by a Gaussian draw, per row.
RowMatrix GmmSample(const GmmParams& gmm, int n, std::uint64_t seed);

struct EmResult {
  GmmParams params;
  // Mean per-example log-likelihood of the initial parameters followed by the
  // value after each EM iteration.
  std::vector<double> log_likelihood;
  int reseeded_components = 0;
};

// Standard EM for a diagonal GMM with k-means++ seeding. A component whose
// responsibility mass vanishes is re-seeded at a random datum with floor
// variance.
EmResult GmmFitEm(const RowMatrix& data, int components, int iterations,
                  std::uint64_t seed);

// Mean per-example log-likelihood of `data` under `gmm`.
double GmmMeanLogLikelihood(const GmmParams& gmm, const RowMatrix& data);

}  // namespace dpflow

#endif  // DPFLOW_GMM_H_
