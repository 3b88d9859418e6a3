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

#ifndef DPFLOW_TYPES_H_
#define DPFLOW_TYPES_H_

#include <Eigen/Core>

namespace dpflow {

using Vector = Eigen::VectorXd;

// Datasets and sample batches: one example per row.
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

// Flat gradient aligned with FlowModel's canonical parameter layout.
using Gradient = Eigen::VectorXd;

}  // namespace dpflow

#endif  // DPFLOW_TYPES_H_
