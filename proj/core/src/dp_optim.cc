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

#include "dpflow/dp_optim.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "dpflow/error.h"

namespace dpflow {
namespace {

constexpr std::uint64_t kSamplingStream = 1;
constexpr std::uint64_t kNoiseStream = 2;

// Draws a uniformly random b-subset by a partial Fisher-Yates pass over the
// persistent permutation `pool`; the result is its first b entries.
std::span<const Eigen::Index> UniformSubset(std::vector<Eigen::Index>& pool,
                                            int b, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(pool.size());
  for (Eigen::Index i = 0; i < b; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  return {pool.data(), static_cast<std::size_t>(b)};
}

std::vector<Eigen::Index> PoissonSubset(Eigen::Index n, double q, Rng& rng) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (UniformUnit(rng) < q) rows.push_back(i);
  }
  return rows;
}

nlohmann::json OptionalToJson(const std::optional<double>& v) {
  return v.has_value() ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

std::string ToString(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind ParseOptimizerKind(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ConfigurationError("unknown optimizer: " + name);
}

std::string ToString(SamplingMode mode) {
  return mode == SamplingMode::kUniform ? "uniform" : "poisson";
}

SamplingMode ParseSamplingMode(const std::string& name) {
  if (name == "uniform") return SamplingMode::kUniform;
  if (name == "poisson") return SamplingMode::kPoisson;
  throw ConfigurationError("unknown sampling mode: " + name);
}

void TrainConfig::Validate(std::int64_t n) const {
  if (!(learning_rate > 0.0)) {
    throw ConfigurationError("learning rate must be positive");
  }
  if (batch_size < 1 || batch_size > n) {
    throw ConfigurationError("batch size must lie in [1, n]; got " +
                             std::to_string(batch_size) + " for n = " +
                             std::to_string(n));
  }
  if (!(noise_multiplier >= 0.0)) {
    throw ConfigurationError("noise multiplier must be >= 0");
  }
  if (!(clip_norm > 0.0)) throw ConfigurationError("clip norm must be positive");
  if (!(epsilon > 0.0)) throw ConfigurationError("epsilon budget must be positive");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigurationError("delta must lie in (0, 1)");
  }
  if (max_iterations < 0) {
    throw ConfigurationError("iteration cap must be >= 0");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
      !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.epsilon > 0.0)) {
    throw ConfigurationError("invalid Adam parameters");
  }
  if (max_consecutive_nonfinite < 1) {
    throw ConfigurationError("max_consecutive_nonfinite must be >= 1");
  }
}

Gradient ClipGrad(const Gradient& g, double clip_norm) {
  const double norm = g.norm();
  const double factor = std::max(1.0, norm / clip_norm);
  if (factor == 1.0) return g;
  return g / factor;
}

Gradient NoisyMean(std::span<const Gradient> grads, double clip_norm,
                   double noise_multiplier, Rng& rng) {
  if (grads.empty()) throw InvalidInputError("NoisyMean of an empty batch");
  Gradient sum = Gradient::Zero(grads.front().size());
  for (const Gradient& g : grads) sum += g;
  if (noise_multiplier > 0.0) {
    std::normal_distribution<double> normal(0.0, noise_multiplier * clip_norm);
    for (Eigen::Index i = 0; i < sum.size(); ++i) sum[i] += normal(rng);
  }
  return sum / static_cast<double>(grads.size());
}

std::optional<Gradient> SumClippedGradients(const FlowModel& model,
                                            const RowMatrix& data,
                                            std::span<const Eigen::Index> rows,
                                            double clip_norm) {
  const auto p = static_cast<Eigen::Index>(model.ParameterCount());
  Gradient sum = Gradient::Zero(p);
  Gradient g(p);
  for (Eigen::Index row : rows) {
    try {
      model.LossAndGrad(data.row(row).transpose(), g);
    } catch (const OverflowError&) {
      return std::nullopt;
    } catch (const InstabilityError&) {
      return std::nullopt;
    }
    const double norm = g.norm();
    const double factor = std::max(1.0, norm / clip_norm);
    if (factor == 1.0) {
      sum += g;
    } else {
      sum += g / factor;
    }
  }
  return sum;
}

OptimizerState::OptimizerState(OptimizerKind kind, std::size_t size)
    : kind_(kind) {
  if (kind == OptimizerKind::kAdam) {
    m_ = Vector::Zero(size);
    v_ = Vector::Zero(size);
  }
}

void ApplyUpdate(Eigen::Ref<Vector> params, const Gradient& grad,
                 OptimizerState& state, double learning_rate,
                 const AdamParams& adam) {
  if (params.size() != grad.size()) {
    throw ConfigurationError("parameter and gradient dimensions differ");
  }
  ++state.steps_;
  if (state.kind_ == OptimizerKind::kSgd) {
    params -= learning_rate * grad;
    return;
  }
  if (state.m_.size() != grad.size()) {
    throw ConfigurationError("optimizer state dimension mismatch");
  }
  state.m_ = adam.beta1 * state.m_ + (1.0 - adam.beta1) * grad;
  state.v_ = adam.beta2 * state.v_ +
             (1.0 - adam.beta2) * grad.cwiseProduct(grad);
  const double t = static_cast<double>(state.steps_);
  const double m_correction = 1.0 - std::pow(adam.beta1, t);
  const double v_correction = 1.0 - std::pow(adam.beta2, t);
  params.array() -= learning_rate * (state.m_.array() / m_correction) /
                    ((state.v_.array() / v_correction).sqrt() + adam.epsilon);
}

nlohmann::json Checkpoint::ToJson() const {
  return {{"t", step},
          {"epsilon", epsilon},
          {"train_nll", OptionalToJson(train_nll)},
          {"heldout_nll", OptionalToJson(heldout_nll)}};
}

nlohmann::json TrainReport::ToJson() const {
  nlohmann::json cps = nlohmann::json::array();
  for (const auto& c : checkpoints) cps.push_back(c.ToJson());
  return {{"iterations", iterations},
          {"skipped_batches", skipped_batches},
          {"final_epsilon", final_epsilon},
          {"accountant", accountant},
          {"checkpoints", std::move(cps)}};
}

std::optional<double> SafeNll(const FlowModel& model, const RowMatrix& data,
                              Eigen::Index max_rows) {
  const Eigen::Index rows = std::min(max_rows, data.rows());
  if (rows < 1) return std::nullopt;
  try {
    const double nll = model.NllLoss(data.topRows(rows));
    if (!std::isfinite(nll)) return std::nullopt;
    return nll;
  } catch (const OverflowError&) {
    return std::nullopt;
  }
}

TrainResult TrainDpNf(const RowMatrix& data, FlowModel model,
                      const TrainConfig& config,
                      const PrivacyAccountant& accountant,
                      const RowMatrix& heldout,
                      const CheckpointCallback& on_checkpoint) {
  const Eigen::Index n = data.rows();
  config.Validate(n);
  if (data.cols() != model.dim()) {
    throw ConfigurationError("dataset dimension does not match the model");
  }
  if (!data.allFinite()) throw InvalidInputError("dataset has non-finite values");
  if (heldout.size() > 0 && heldout.cols() != model.dim()) {
    throw ConfigurationError("held-out dimension does not match the model");
  }

  Rng sampling_rng = MakeRng(config.seed, kSamplingStream);
  Rng noise_rng = MakeRng(config.seed, kNoiseStream);
  std::normal_distribution<double> noise(
      0.0, config.noise_multiplier * config.clip_norm);
  const double q = static_cast<double>(config.batch_size) / n;

  std::vector<Eigen::Index> pool(n);
  std::iota(pool.begin(), pool.end(), Eigen::Index{0});

  Vector params = model.GetParameters();
  OptimizerState state(config.optimizer, params.size());
  TrainResult result{std::move(model), {}};
  TrainReport& report = result.report;
  report.accountant = accountant.Name();

  auto record = [&](std::int64_t t, double eps) {
    Checkpoint cp;
    cp.step = t;
    cp.epsilon = eps;
    cp.train_nll = SafeNll(result.model, data, config.probe_rows);
    if (heldout.rows() > 0) {
      cp.heldout_nll = SafeNll(result.model, heldout, heldout.rows());
    }
    report.checkpoints.push_back(cp);
    if (on_checkpoint) on_checkpoint(cp);
  };
  record(0, 0.0);

  std::int64_t t = 0;
  double spent = 0.0;
  int consecutive_nonfinite = 0;
  while (t < config.max_iterations) {
    const double next = accountant.Epsilon(t + 1);
    if (!std::isfinite(next)) {
      throw AccountingError("accountant returned a non-finite epsilon at step " +
                            std::to_string(t + 1));
    }
    if (next >= config.epsilon) break;

    std::vector<Eigen::Index> poisson_rows;
    std::span<const Eigen::Index> batch;
    if (config.sampling == SamplingMode::kUniform) {
      batch = UniformSubset(pool, config.batch_size, sampling_rng);
    } else {
      poisson_rows = PoissonSubset(n, q, sampling_rng);
      batch = poisson_rows;
    }

    std::optional<Gradient> sum =
        SumClippedGradients(result.model, data, batch, config.clip_norm);
    ++t;
    spent = next;
    if (!sum.has_value()) {
      ++report.skipped_batches;
      if (++consecutive_nonfinite >= config.max_consecutive_nonfinite) {
        throw InstabilityError(
            "non-finite loss in " + std::to_string(consecutive_nonfinite) +
                " consecutive batches (last at step " + std::to_string(t) + ")",
            -1);
      }
    } else {
      consecutive_nonfinite = 0;
      Gradient& g = *sum;
      if (config.noise_multiplier > 0.0) {
        for (Eigen::Index i = 0; i < g.size(); ++i) g[i] += noise(noise_rng);
      }
      // Poisson batches are normalized by the expected size b.
      g /= static_cast<double>(config.batch_size);
      ApplyUpdate(params, g, state, config.learning_rate, config.adam);
      result.model.ProjectParameters(params);
      result.model.SetParameters(params);
    }
    if (config.checkpoint_every > 0 && t % config.checkpoint_every == 0) {
      record(t, spent);
    }
  }
  if (report.checkpoints.back().step != t) record(t, spent);
  report.iterations = t;
  report.final_epsilon = spent;
  return result;
}

TrainResult TrainDpNf(const RowMatrix& data, FlowModel model,
                      const TrainConfig& config, const RowMatrix& heldout,
                      const CheckpointCallback& on_checkpoint) {
  config.Validate(data.rows());
  const double q = static_cast<double>(config.batch_size) / data.rows();
  const auto accountant = MakeAccountant(config.accountant, q,
                                         config.noise_multiplier, config.delta);
  return TrainDpNf(data, std::move(model), config, *accountant, heldout,
                   on_checkpoint);
}

FlowModel TrainNonPrivate(const RowMatrix& data, FlowModel model,
                          const NonPrivateConfig& config) {
  const Eigen::Index n = data.rows();
  if (n < 1) throw ConfigurationError("empty training set");
  if (config.batch_size < 1) throw ConfigurationError("batch size must be >= 1");
  const int b = static_cast<int>(std::min<Eigen::Index>(config.batch_size, n));
  Rng rng = MakeRng(config.seed, kSamplingStream);
  std::vector<Eigen::Index> pool(n);
  std::iota(pool.begin(), pool.end(), Eigen::Index{0});

  Vector params = model.GetParameters();
  OptimizerState state(OptimizerKind::kAdam, params.size());
  Gradient sum(params.size());
  Gradient g(params.size());
  for (std::int64_t t = 0; t < config.iterations; ++t) {
    const auto batch = UniformSubset(pool, b, rng);
    sum.setZero();
    bool finite = true;
    for (Eigen::Index row : batch) {
      try {
        model.LossAndGrad(data.row(row).transpose(), g);
      } catch (const OverflowError&) {
        finite = false;
        break;
      } catch (const InstabilityError&) {
        finite = false;
        break;
      }
      sum += g;
    }
    if (!finite) continue;
    sum /= static_cast<double>(b);
    ApplyUpdate(params, sum, state, config.learning_rate, config.adam);
    model.ProjectParameters(params);
    model.SetParameters(params);
  }
  return model;
}

}  // namespace dpflow
