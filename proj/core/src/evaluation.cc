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

#include "dpflow/evaluation.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include <Eigen/Eigenvalues>

#include "dpflow/error.h"

namespace dpflow {

double KnnRegressMse(const RowMatrix& train, const RowMatrix& test, int k) {
  if (k < 1) throw ConfigurationError("k must be >= 1");
  if (train.cols() < 2 || train.cols() != test.cols()) {
    throw InvalidInputError("train and test need matching feature+target columns");
  }
  if (k > train.rows()) {
    throw InvalidInputError("k = " + std::to_string(k) + " exceeds the " +
                            std::to_string(train.rows()) + " training rows");
  }
  if (test.rows() == 0) throw InvalidInputError("empty test set");
  const Eigen::Index features = train.cols() - 1;
  const auto x_train = train.leftCols(features);
  std::vector<std::pair<double, Eigen::Index>> dist(train.rows());
  double sse = 0.0;
  for (Eigen::Index i = 0; i < test.rows(); ++i) {
    const auto query = test.row(i).head(features);
    for (Eigen::Index j = 0; j < train.rows(); ++j) {
      dist[j] = {(x_train.row(j) - query).squaredNorm(), j};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    double prediction = 0.0;
    for (int m = 0; m < k; ++m) prediction += train(dist[m].second, features);
    prediction /= k;
    const double err = prediction - test(i, features);
    sse += err * err;
  }
  return sse / static_cast<double>(test.rows());
}

PcaResult PcaProject(const RowMatrix& data, int components) {
  if (components < 1 || components > data.cols()) {
    throw InvalidInputError("components must lie in [1, " +
                            std::to_string(data.cols()) + "]");
  }
  if (data.rows() <= components) {
    throw InvalidInputError("PCA needs more rows than components");
  }
  PcaResult out;
  out.mean = data.colwise().mean().transpose();
  const RowMatrix centered = data.rowwise() - out.mean.transpose();
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(data.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw InstabilityError("eigendecomposition failed", -1);
  }
  const Eigen::Index d = data.cols();
  out.components.resize(components, d);
  out.explained_variance.resize(components);
  // Eigenvalues come in ascending order.
  for (int c = 0; c < components; ++c) {
    Vector v = solver.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    out.components.row(c) = v.transpose();
    out.explained_variance[c] = solver.eigenvalues()[d - 1 - c];
  }
  out.projected = centered * out.components.transpose();
  return out;
}

std::vector<Histogram> DimwiseHistogram(const RowMatrix& data, int bins) {
  if (bins < 1) throw ConfigurationError("bins must be >= 1");
  if (data.rows() == 0) throw InvalidInputError("empty dataset");
  std::vector<Histogram> out;
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    double lo = data.col(j).minCoeff();
    double hi = data.col(j).maxCoeff();
    if (lo == hi) {
      lo -= 0.5;
      hi += 0.5;
    }
    Histogram h;
    h.edges.resize(bins + 1);
    for (int b = 0; b <= bins; ++b) h.edges[b] = lo + (hi - lo) * b / bins;
    h.edges[bins] = hi;
    h.counts.assign(bins, 0);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      const double v = data(i, j);
      // Upper edges are exclusive except for the last bin.
      auto b = static_cast<int>(std::upper_bound(h.edges.begin() + 1,
                                                 h.edges.end() - 1, v) -
                                (h.edges.begin() + 1));
      ++h.counts[b];
    }
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace dpflow
