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

#ifndef DPFLOW_FLOW_MODEL_H_
#define DPFLOW_FLOW_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpflow/flow_layers.h"
#include "dpflow/gmm.h"
#include "dpflow/types.h"

namespace dpflow {

inline constexpr int kModelFormatVersion = 1;

// Spherical standard normal of dimension D.
struct StandardNormalBase {
  int dim = 1;
};

// Base (prior) density of the flow: spherical Gaussian or diagonal GMM.
class BaseDistribution {
 public:
  explicit BaseDistribution(StandardNormalBase base);
  explicit BaseDistribution(GmmParams gmm);

  static BaseDistribution StandardNormal(int dim) {
    return BaseDistribution(StandardNormalBase{dim});
  }

  int dim() const { return dim_; }
  bool is_gmm() const { return std::holds_alternative<GmmParams>(impl_); }
  const GmmParams& gmm() const { return std::get<GmmParams>(impl_); }

  double LogPdf(VectorRef z) const;
  // log q(z) and d/dz log q(z).
  double LogPdfWithGrad(VectorRef z, Eigen::Ref<Vector> grad) const;
  RowMatrix Sample(int n, Rng& rng) const;

  nlohmann::json ToJson() const;
  static BaseDistribution FromJson(const nlohmann::json& j);

 private:
  std::variant<StandardNormalBase, GmmParams> impl_;
  int dim_;
};

using Layer = std::variant<MadeLayer, ActNormLayer, ReversalLayer>;

// Architecture of the default MAF: `blocks` repetitions of
// [MADE, reversal, ActNorm (optional)].
struct MafConfig {
  int dim = 2;
  int blocks = 5;
  int hidden = 64;
  bool actnorm = false;
  double scale_clamp = kDefaultScaleClamp;
  double head_init_scale = 1e-2;
};

// Where a flat parameter index lives.
struct ParameterSlot {
  int layer = 0;
  std::string tensor;
  std::size_t position = 0;  // row-major offset within the tensor
};

// Ordered stack f_1, ..., f_K of invertible layers over a base density.
// Layers run in list order in the density direction x -> z, so
//   log p(x) = log q(z) + sum_k logdet_k.
// Sampling draws z from the base and runs the inverses in reverse order.
//
// Const member functions are safe to call concurrently.
class FlowModel {
 public:
  explicit FlowModel(BaseDistribution base);

  static FlowModel MakeMaf(const MafConfig& config, std::uint64_t seed);

  int dim() const { return base_.dim(); }
  const BaseDistribution& base() const { return base_; }
  void set_base(BaseDistribution base);

  const std::vector<Layer>& layers() const { return layers_; }
  Layer& mutable_layer(std::size_t index) { return layers_.at(index); }
  void AddLayer(Layer layer);

  // Density direction through layers [begin, end). Accumulates the log-det
  // into `logdet` when non-null.
  Vector ForwardRange(VectorRef x, std::size_t begin, std::size_t end,
                      double* logdet = nullptr) const;
  Vector Forward(VectorRef x, double* logdet = nullptr) const {
    return ForwardRange(x, 0, layers_.size(), logdet);
  }
  Vector Inverse(VectorRef z) const;
  // Forward applied to every row.
  RowMatrix ForwardRows(const RowMatrix& x) const;

  // Throws OverflowError naming the layer (or -1 for the base density) that
  // produced a non-finite value.
  double LogProb(VectorRef x) const;
  Vector LogProbRows(const RowMatrix& x) const;
  RowMatrix Sample(int n, std::uint64_t seed) const;
  // -(1/m) sum_i log p(x_i).
  double NllLoss(const RowMatrix& batch) const;

  // Gradient of -log p(x) in canonical layout. Throws InstabilityError with
  // layer attribution on non-finite entries.
  Gradient PerExampleGrad(VectorRef x) const;
  // Writes the gradient into `grad` and returns -log p(x).
  double LossAndGrad(VectorRef x, Eigen::Ref<Vector> grad) const;

  // Canonical layout: layer order, within a layer weights before biases,
  // row-major.
  std::size_t ParameterCount() const;
  std::size_t ParameterOffset(std::size_t layer) const;
  Vector GetParameters() const;
  // Masked MADE entries are zeroed; throws ConfigurationError for an ActNorm
  // scale below the floor.
  void SetParameters(VectorRef params);
  // Maps an arbitrary vector onto the feasible set accepted by SetParameters.
  void ProjectParameters(Eigen::Ref<Vector> params) const;
  ParameterSlot Locate(std::size_t flat_index) const;

  nlohmann::json ToJson() const;
  static FlowModel FromJson(const nlohmann::json& j);
  void Save(const std::filesystem::path& path) const;
  static FlowModel Load(const std::filesystem::path& path);

 private:
  void RebuildOffsets();

  BaseDistribution base_;
  std::vector<Layer> layers_;
  std::vector<std::size_t> offsets_;  // size layers_ + 1
};

std::size_t LayerParameterCount(const Layer& layer);
int LayerDim(const Layer& layer);

// Fits a diagonal GMM by EM to `data` mapped through the current flow and
// installs it as the base distribution, so that the prior matches the data
// at the starting point of training.
EmResult FitGmmBase(const RowMatrix& data, FlowModel& model, int components,
                    int iterations, std::uint64_t seed);

}  // namespace dpflow

#endif  // DPFLOW_FLOW_MODEL_H_
