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

#ifndef DPFLOW_EVALUATION_H_
#define DPFLOW_EVALUATION_H_

#include <vector>

#include "dpflow/types.h"

namespace dpflow {

// The last column of `train` and `test` is the regression target. Each test
// row is predicted by the mean target of its k Euclidean-nearest training
// rows; distance ties go to the lower row index. Returns the mean squared
// error.
double KnnRegressMse(const RowMatrix& train, const RowMatrix& test, int k = 3);

struct PcaResult {
  RowMatrix projected;  // n x components
  RowMatrix components;  // components x D, orthonormal rows
  Vector explained_variance;
  Vector mean;
};

// Sample covariance (n - 1). The largest-magnitude entry of each component
// is positive.
PcaResult PcaProject(const RowMatrix& data, int components = 2);

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<long long> counts;
};

// Equal-width bins over [min, max] of each column; the last bin is closed.
// A constant column uses [v - 0.5, v + 0.5].
std::vector<Histogram> DimwiseHistogram(const RowMatrix& data, int bins);

}  // namespace dpflow

#endif  // DPFLOW_EVALUATION_H_
