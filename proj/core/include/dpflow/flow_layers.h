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

#ifndef DPFLOW_FLOW_LAYERS_H_
#define DPFLOW_FLOW_LAYERS_H_

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "dpflow/random.h"
#include "dpflow/types.h"

namespace dpflow {

inline constexpr double kDefaultScaleClamp = 5.0;
inline constexpr double kActNormScaleFloor = 1e-6;

// Masked autoencoder block of a MAF. Two masked ReLU hidden layers of width
// `hidden` feed separate masked heads for the shift mu and log-scale alpha.
// In the density direction
//   u_i = (x_i - mu_i(x_<i)) * exp(-alpha_i(x_<i)),  logdet = -sum_i alpha_i,
// with alpha clamped to [-scale_clamp, scale_clamp].
//
// Masked weight entries are held at zero; every mutator re-applies the masks.
class MadeLayer {
 public:
  // Trainable tensors in canonical layout order: all weights, then all biases.
  enum class Tensor { kW1, kW2, kWMu, kWAlpha, kB1, kB2, kBMu, kBAlpha };
  static constexpr int kTensorCount = 8;

  // All weights and biases zero: the identity map.
  MadeLayer(int dim, int hidden, double scale_clamp = kDefaultScaleClamp);

  // Fan-in scaled Gaussian init for the trunk; the heads get the same scaling
  // multiplied by `head_scale` so a small value starts the block near identity.
  void InitializeRandom(Rng& rng, double head_scale);

  int dim() const { return dim_; }
  int hidden() const { return hidden_; }
  double scale_clamp() const { return scale_clamp_; }

  const RowMatrix& mask_input() const { return mask1_; }
  const RowMatrix& mask_hidden() const { return mask2_; }
  const RowMatrix& mask_output() const { return mask_out_; }
  const std::vector<int>& input_degrees() const { return input_degrees_; }
  const std::vector<int>& hidden_degrees() const { return hidden_degrees_; }

  const RowMatrix& weights(Tensor t) const;
  const Vector& bias(Tensor t) const;
  void set_weights(Tensor t, const RowMatrix& w);
  void set_bias(Tensor t, const Vector& b);
  static std::string_view TensorName(Tensor t);

  struct Result {
    Vector y;
    double logdet = 0.0;
  };
  Result Forward(VectorRef x) const;
  // Sequential D-pass inversion of Forward.
  Vector Inverse(VectorRef u) const;

  // Activations retained by ForwardCached for Backward.
  struct Cache {
    Vector x, pre1, h1, pre2, h2, mu, alpha_raw, alpha, u;
  };
  double ForwardCached(VectorRef x, Cache& cache) const;
  // `grad_u` is dL/du for a loss L that also contains -logdet. Writes dL/dtheta
  // into `grad_params` (canonical layout) and returns dL/dx.
  Vector Backward(const Cache& cache, VectorRef grad_u,
                  std::span<double> grad_params) const;

  std::size_t ParameterCount() const;
  void GetParameters(std::span<double> out) const;
  void SetParameters(std::span<const double> in);

 private:
  void ShiftAndLogScale(VectorRef x, Vector& mu, Vector& alpha) const;
  void ApplyMasks();

  int dim_;
  int hidden_;
  double scale_clamp_;
  std::vector<int> input_degrees_;
  std::vector<int> hidden_degrees_;
  RowMatrix mask1_;     // hidden x dim
  RowMatrix mask2_;     // hidden x hidden
  RowMatrix mask_out_;  // dim x hidden, shared by both heads
  RowMatrix w1_, w2_, w_mu_, w_alpha_;
  Vector b1_, b2_, b_mu_, b_alpha_;
};

// Feature-wise affine normalization y = (x - offset) / scale.
class ActNormLayer {
 public:
  // offset 0, scale 1.
  explicit ActNormLayer(int dim);
  // Throws ConfigurationError if any scale entry is below kActNormScaleFloor.
  ActNormLayer(Vector offset, Vector scale);

  int dim() const { return static_cast<int>(offset_.size()); }
  const Vector& offset() const { return offset_; }
  const Vector& scale() const { return scale_; }
  void set_offset(const Vector& offset);
  void set_scale(const Vector& scale);

  enum class Direction { kForward, kInverse };
  struct Result {
    Vector y;
    double logdet = 0.0;
  };
  Result Apply(VectorRef x, Direction direction) const;

  // dL/dx from dL/dy, writing [d scale, d offset] into `grad_params`.
  Vector Backward(VectorRef x, VectorRef grad_y,
                  std::span<double> grad_params) const;

  // Layout: scale then offset.
  std::size_t ParameterCount() const { return 2 * offset_.size(); }
  void GetParameters(std::span<double> out) const;
  void SetParameters(std::span<const double> in);

 private:
  Vector offset_;
  Vector scale_;
};

// Fixed permutation i -> D-1-i. Volume preserving; no parameters.
class ReversalLayer {
 public:
  explicit ReversalLayer(int dim) : dim_(dim) {}
  int dim() const { return dim_; }
  Vector Apply(VectorRef x) const { return x.reverse(); }

 private:
  int dim_;
};

}  // namespace dpflow

#endif  // DPFLOW_FLOW_LAYERS_H_
