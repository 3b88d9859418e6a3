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

#ifndef DPFLOW_DP_OPTIM_H_
#define DPFLOW_DP_OPTIM_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpflow/accountant.h"
#include "dpflow/flow_model.h"
#include "dpflow/random.h"
#include "dpflow/types.h"

namespace dpflow {

enum class OptimizerKind { kSgd, kAdam };
enum class SamplingMode { kUniform, kPoisson };

std::string ToString(OptimizerKind kind);
OptimizerKind ParseOptimizerKind(const std::string& name);
std::string ToString(SamplingMode mode);
SamplingMode ParseSamplingMode(const std::string& name);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 256;
  double noise_multiplier = 1.1;
  double clip_norm = 10.0;
  double epsilon = 1.0;
  double delta = 1e-5;
  AccountantMethod accountant = AccountantMethod::kGdp;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  AdamParams adam;
  std::int64_t max_iterations = 1'000'000;
  std::uint64_t seed = 0;
  // Uniform fixed-size subsets (the analysed scheme) or Poisson inclusion
  // with rate b/n for parity with classic DP-SGD.
  SamplingMode sampling = SamplingMode::kUniform;
  // Checkpoint interval in steps; 0 records only the initial and final state.
  std::int64_t checkpoint_every = 0;
  // Training aborts once this many consecutive batches had non-finite loss.
  int max_consecutive_nonfinite = 10;
  // Rows of the training set used for the train NLL in checkpoints.
  int probe_rows = 2000;

  // Throws ConfigurationError on invalid settings for a dataset of n rows.
  void Validate(std::int64_t n) const;
};

// g / max{1, ||g||_2 / C}.
Gradient ClipGrad(const Gradient& g, double clip_norm);

// (sum_i g_i + N(0, sigma^2 C^2 I)) / b for pre-clipped gradients, summed in
// index order.
Gradient NoisyMean(std::span<const Gradient> grads, double clip_norm,
                   double noise_multiplier, Rng& rng);

// Sum of clipped per-example gradients over `rows` of `data`, in order.
// Returns std::nullopt if any example's loss or gradient is non-finite.
std::optional<Gradient> SumClippedGradients(const FlowModel& model,
                                            const RowMatrix& data,
                                            std::span<const Eigen::Index> rows,
                                            double clip_norm);

class OptimizerState {
 public:
  OptimizerState(OptimizerKind kind, std::size_t size);
  OptimizerKind kind() const { return kind_; }
  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }
  std::int64_t steps() const { return steps_; }

 private:
  friend void ApplyUpdate(Eigen::Ref<Vector> params, const Gradient& grad,
                          OptimizerState& state, double learning_rate,
                          const AdamParams& adam);
  OptimizerKind kind_;
  Vector m_;
  Vector v_;
  std::int64_t steps_ = 0;
};

// SGD: theta - lr g. Adam: bias-corrected moment update on g.
void ApplyUpdate(Eigen::Ref<Vector> params, const Gradient& grad,
                 OptimizerState& state, double learning_rate,
                 const AdamParams& adam = {});

struct Checkpoint {
  std::int64_t step = 0;
  double epsilon = 0.0;
  std::optional<double> train_nll;
  std::optional<double> heldout_nll;

  nlohmann::json ToJson() const;
};

struct TrainReport {
  std::int64_t iterations = 0;
  std::int64_t skipped_batches = 0;
  double final_epsilon = 0.0;
  std::string accountant;
  std::vector<Checkpoint> checkpoints;

  nlohmann::json ToJson() const;
};

struct TrainResult {
  FlowModel model;
  TrainReport report;
};

using CheckpointCallback = std::function<void(const Checkpoint&)>;

// Noisy clipped gradient descent on the flow NLL. Before executing step t the
// accountant is queried; the loop stops as soon as Epsilon(t) would reach the
// budget, or at the iteration cap. A batch with non-finite loss is skipped but
// still charged. `heldout` may be empty.
TrainResult TrainDpNf(const RowMatrix& data, FlowModel model,
                      const TrainConfig& config,
                      const PrivacyAccountant& accountant,
                      const RowMatrix& heldout = RowMatrix(),
                      const CheckpointCallback& on_checkpoint = {});

// Builds the accountant named in `config` with q = b / n.
TrainResult TrainDpNf(const RowMatrix& data, FlowModel model,
                      const TrainConfig& config,
                      const RowMatrix& heldout = RowMatrix(),
                      const CheckpointCallback& on_checkpoint = {});

// Plain minibatch training without clipping, noise or accounting.
struct NonPrivateConfig {
  double learning_rate = 1e-3;
  int batch_size = 128;
  std::int64_t iterations = 2000;
  AdamParams adam;
  std::uint64_t seed = 0;
};

FlowModel TrainNonPrivate(const RowMatrix& data, FlowModel model,
                          const NonPrivateConfig& config);

// Mean NLL over at most `max_rows` leading rows; nullopt if non-finite.
std::optional<double> SafeNll(const FlowModel& model, const RowMatrix& data,
                              Eigen::Index max_rows);

}  // namespace dpflow

#endif  // DPFLOW_DP_OPTIM_H_
