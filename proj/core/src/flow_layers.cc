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

#include "dpflow/flow_layers.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "dpflow/error.h"

namespace dpflow {
namespace {

void RequireFinite(VectorRef v, const char* what) {
  if (!v.allFinite()) {
    throw InvalidInputError(std::string(what) + ": non-finite input");
  }
}

void FillGaussian(RowMatrix& m, Rng& rng, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
}

// Copies `src` into `dst` at `offset`; returns the advanced offset.
template <typename T>
std::size_t Put(const T& src, std::span<double> dst, std::size_t offset) {
  std::copy(src.data(), src.data() + src.size(), dst.begin() + offset);
  return offset + static_cast<std::size_t>(src.size());
}

template <typename T>
std::size_t Take(T& dst, std::span<const double> src, std::size_t offset) {
  std::copy(src.begin() + offset, src.begin() + offset + dst.size(),
            dst.data());
  return offset + static_cast<std::size_t>(dst.size());
}

}  // namespace

MadeLayer::MadeLayer(int dim, int hidden, double scale_clamp)
    : dim_(dim), hidden_(hidden), scale_clamp_(scale_clamp) {
  if (dim < 1 || hidden < 1) {
    throw ConfigurationError("MADE needs positive dimension and width");
  }
  if (!(scale_clamp > 0.0)) {
    throw ConfigurationError("MADE scale clamp must be positive");
  }
  input_degrees_.resize(dim);
  for (int i = 0; i < dim; ++i) input_degrees_[i] = i + 1;
  // Hidden degrees cycle over [1, D-1]; with D == 1 every unit gets degree 1
  // and the heads reduce to their biases.
  const int cycle = std::max(1, dim - 1);
  hidden_degrees_.resize(hidden);
  for (int k = 0; k < hidden; ++k) hidden_degrees_[k] = k % cycle + 1;

  mask1_.resize(hidden, dim);
  for (int k = 0; k < hidden; ++k) {
    for (int i = 0; i < dim; ++i) {
      mask1_(k, i) = hidden_degrees_[k] >= input_degrees_[i] ? 1.0 : 0.0;
    }
  }
  mask2_.resize(hidden, hidden);
  for (int k = 0; k < hidden; ++k) {
    for (int j = 0; j < hidden; ++j) {
      mask2_(k, j) = hidden_degrees_[k] >= hidden_degrees_[j] ? 1.0 : 0.0;
    }
  }
  mask_out_.resize(dim, hidden);
  for (int i = 0; i < dim; ++i) {
    for (int k = 0; k < hidden; ++k) {
      mask_out_(i, k) = input_degrees_[i] > hidden_degrees_[k] ? 1.0 : 0.0;
    }
  }
  w1_ = RowMatrix::Zero(hidden, dim);
  w2_ = RowMatrix::Zero(hidden, hidden);
  w_mu_ = RowMatrix::Zero(dim, hidden);
  w_alpha_ = RowMatrix::Zero(dim, hidden);
  b1_ = Vector::Zero(hidden);
  b2_ = Vector::Zero(hidden);
  b_mu_ = Vector::Zero(dim);
  b_alpha_ = Vector::Zero(dim);
}

void MadeLayer::InitializeRandom(Rng& rng, double head_scale) {
  FillGaussian(w1_, rng, std::sqrt(2.0 / dim_));
  FillGaussian(w2_, rng, std::sqrt(2.0 / hidden_));
  FillGaussian(w_mu_, rng, head_scale * std::sqrt(1.0 / hidden_));
  FillGaussian(w_alpha_, rng, head_scale * std::sqrt(1.0 / hidden_));
  b1_.setZero();
  b2_.setZero();
  b_mu_.setZero();
  b_alpha_.setZero();
  ApplyMasks();
}

void MadeLayer::ApplyMasks() {
  w1_.array() *= mask1_.array();
  w2_.array() *= mask2_.array();
  w_mu_.array() *= mask_out_.array();
  w_alpha_.array() *= mask_out_.array();
}

const RowMatrix& MadeLayer::weights(Tensor t) const {
  switch (t) {
    case Tensor::kW1:
      return w1_;
    case Tensor::kW2:
      return w2_;
    case Tensor::kWMu:
      return w_mu_;
    case Tensor::kWAlpha:
      return w_alpha_;
    default:
      throw ConfigurationError("not a weight tensor");
  }
}

const Vector& MadeLayer::bias(Tensor t) const {
  switch (t) {
    case Tensor::kB1:
      return b1_;
    case Tensor::kB2:
      return b2_;
    case Tensor::kBMu:
      return b_mu_;
    case Tensor::kBAlpha:
      return b_alpha_;
    default:
      throw ConfigurationError("not a bias tensor");
  }
}

void MadeLayer::set_weights(Tensor t, const RowMatrix& w) {
  RowMatrix& target = const_cast<RowMatrix&>(weights(t));
  if (w.rows() != target.rows() || w.cols() != target.cols()) {
    throw ConfigurationError("MADE weight shape mismatch");
  }
  target = w;
  ApplyMasks();
}

void MadeLayer::set_bias(Tensor t, const Vector& b) {
  Vector& target = const_cast<Vector&>(bias(t));
  if (b.size() != target.size()) {
    throw ConfigurationError("MADE bias shape mismatch");
  }
  target = b;
}

std::string_view MadeLayer::TensorName(Tensor t) {
  switch (t) {
    case Tensor::kW1:
      return "w1";
    case Tensor::kW2:
      return "w2";
    case Tensor::kWMu:
      return "w_mu";
    case Tensor::kWAlpha:
      return "w_alpha";
    case Tensor::kB1:
      return "b1";
    case Tensor::kB2:
      return "b2";
    case Tensor::kBMu:
      return "b_mu";
    case Tensor::kBAlpha:
      return "b_alpha";
  }
  return "";
}

void MadeLayer::ShiftAndLogScale(VectorRef x, Vector& mu,
                                 Vector& alpha) const {
  const Vector h1 = (w1_ * x + b1_).cwiseMax(0.0);
  const Vector h2 = (w2_ * h1 + b2_).cwiseMax(0.0);
  mu = w_mu_ * h2 + b_mu_;
  alpha = (w_alpha_ * h2 + b_alpha_).cwiseMax(-scale_clamp_).cwiseMin(
      scale_clamp_);
}

MadeLayer::Result MadeLayer::Forward(VectorRef x) const {
  RequireFinite(x, "MADE forward");
  Vector mu, alpha;
  ShiftAndLogScale(x, mu, alpha);
  Result r;
  r.y = ((x - mu).array() * (-alpha.array()).exp()).matrix();
  r.logdet = -alpha.sum();
  return r;
}

Vector MadeLayer::Inverse(VectorRef u) const {
  RequireFinite(u, "MADE inverse");
  Vector x = Vector::Zero(dim_);
  Vector mu, alpha;
  // Coordinate i depends only on x_<i, which is final after pass i.
  for (int i = 0; i < dim_; ++i) {
    ShiftAndLogScale(x, mu, alpha);
    x[i] = u[i] * std::exp(alpha[i]) + mu[i];
  }
  return x;
}

double MadeLayer::ForwardCached(VectorRef x, Cache& c) const {
  RequireFinite(x, "MADE forward");
  c.x = x;
  c.pre1.noalias() = w1_ * x;
  c.pre1 += b1_;
  c.h1 = c.pre1.cwiseMax(0.0);
  c.pre2.noalias() = w2_ * c.h1;
  c.pre2 += b2_;
  c.h2 = c.pre2.cwiseMax(0.0);
  c.mu.noalias() = w_mu_ * c.h2;
  c.mu += b_mu_;
  c.alpha_raw.noalias() = w_alpha_ * c.h2;
  c.alpha_raw += b_alpha_;
  c.alpha = c.alpha_raw.cwiseMax(-scale_clamp_).cwiseMin(scale_clamp_);
  c.u = ((x - c.mu).array() * (-c.alpha.array()).exp()).matrix();
  return -c.alpha.sum();
}

Vector MadeLayer::Backward(const Cache& c, VectorRef grad_u,
                           std::span<double> grad_params) const {
  const Eigen::ArrayXd inv_scale = (-c.alpha.array()).exp();
  // u = (x - mu) * exp(-alpha); the loss carries +sum(alpha) from -logdet.
  Vector g_mu = (-grad_u.array() * inv_scale).matrix();
  Vector g_alpha = (1.0 - grad_u.array() * c.u.array()).matrix();
  for (int i = 0; i < dim_; ++i) {
    const double raw = c.alpha_raw[i];
    if (!(raw > -scale_clamp_ && raw < scale_clamp_)) g_alpha[i] = 0.0;
  }
  Vector g_h2 = w_mu_.transpose() * g_mu + w_alpha_.transpose() * g_alpha;
  Vector g_pre2 = (c.pre2.array() > 0.0).select(g_h2, 0.0);
  Vector g_h1 = w2_.transpose() * g_pre2;
  Vector g_pre1 = (c.pre1.array() > 0.0).select(g_h1, 0.0);
  Vector g_x = (grad_u.array() * inv_scale).matrix() + w1_.transpose() * g_pre1;

  using MapRow = Eigen::Map<RowMatrix>;
  using MapVec = Eigen::Map<Vector>;
  double* p = grad_params.data();
  MapRow gw1(p, hidden_, dim_);
  gw1.noalias() = g_pre1 * c.x.transpose();
  gw1.array() *= mask1_.array();
  p += w1_.size();
  MapRow gw2(p, hidden_, hidden_);
  gw2.noalias() = g_pre2 * c.h1.transpose();
  gw2.array() *= mask2_.array();
  p += w2_.size();
  MapRow gwmu(p, dim_, hidden_);
  gwmu.noalias() = g_mu * c.h2.transpose();
  gwmu.array() *= mask_out_.array();
  p += w_mu_.size();
  MapRow gwalpha(p, dim_, hidden_);
  gwalpha.noalias() = g_alpha * c.h2.transpose();
  gwalpha.array() *= mask_out_.array();
  p += w_alpha_.size();
  MapVec(p, hidden_) = g_pre1;
  p += hidden_;
  MapVec(p, hidden_) = g_pre2;
  p += hidden_;
  MapVec(p, dim_) = g_mu;
  p += dim_;
  MapVec(p, dim_) = g_alpha;
  return g_x;
}

std::size_t MadeLayer::ParameterCount() const {
  return static_cast<std::size_t>(w1_.size() + w2_.size() + w_mu_.size() +
                                  w_alpha_.size() + b1_.size() + b2_.size() +
                                  b_mu_.size() + b_alpha_.size());
}

void MadeLayer::GetParameters(std::span<double> out) const {
  std::size_t o = 0;
  o = Put(w1_, out, o);
  o = Put(w2_, out, o);
  o = Put(w_mu_, out, o);
  o = Put(w_alpha_, out, o);
  o = Put(b1_, out, o);
  o = Put(b2_, out, o);
  o = Put(b_mu_, out, o);
  Put(b_alpha_, out, o);
}

void MadeLayer::SetParameters(std::span<const double> in) {
  std::size_t o = 0;
  o = Take(w1_, in, o);
  o = Take(w2_, in, o);
  o = Take(w_mu_, in, o);
  o = Take(w_alpha_, in, o);
  o = Take(b1_, in, o);
  o = Take(b2_, in, o);
  o = Take(b_mu_, in, o);
  Take(b_alpha_, in, o);
  ApplyMasks();
}

ActNormLayer::ActNormLayer(int dim)
    : offset_(Vector::Zero(dim)), scale_(Vector::Ones(dim)) {
  if (dim < 1) throw ConfigurationError("ActNorm needs positive dimension");
}

ActNormLayer::ActNormLayer(Vector offset, Vector scale)
    : offset_(std::move(offset)) {
  if (offset_.size() < 1) {
    throw ConfigurationError("ActNorm needs positive dimension");
  }
  set_scale(scale);
}

void ActNormLayer::set_offset(const Vector& offset) {
  if (offset.size() != offset_.size()) {
    throw ConfigurationError("ActNorm offset shape mismatch");
  }
  offset_ = offset;
}

void ActNormLayer::set_scale(const Vector& scale) {
  if (scale.size() != offset_.size()) {
    throw ConfigurationError("ActNorm scale shape mismatch");
  }
  if (!(scale.array() >= kActNormScaleFloor).all()) {
    throw ConfigurationError("ActNorm scale below floor");
  }
  scale_ = scale;
}

ActNormLayer::Result ActNormLayer::Apply(VectorRef x,
                                         Direction direction) const {
  RequireFinite(x, "ActNorm");
  Result r;
  const double log_scale = scale_.array().log().sum();
  if (direction == Direction::kForward) {
    r.y = ((x - offset_).array() / scale_.array()).matrix();
    r.logdet = -log_scale;
  } else {
    r.y = (x.array() * scale_.array()).matrix() + offset_;
    r.logdet = log_scale;
  }
  return r;
}

Vector ActNormLayer::Backward(VectorRef x, VectorRef grad_y,
                              std::span<double> grad_params) const {
  const Eigen::Index d = offset_.size();
  const Eigen::ArrayXd y = (x - offset_).array() / scale_.array();
  Eigen::Map<Vector> g_scale(grad_params.data(), d);
  Eigen::Map<Vector> g_offset(grad_params.data() + d, d);
  // Loss carries +sum(log scale) from -logdet.
  g_scale = ((1.0 - grad_y.array() * y) / scale_.array()).matrix();
  g_offset = (-grad_y.array() / scale_.array()).matrix();
  return (grad_y.array() / scale_.array()).matrix();
}

void ActNormLayer::GetParameters(std::span<double> out) const {
  std::size_t o = Put(scale_, out, 0);
  Put(offset_, out, o);
}

void ActNormLayer::SetParameters(std::span<const double> in) {
  Vector scale(offset_.size());
  Vector offset(offset_.size());
  std::size_t o = Take(scale, in, 0);
  Take(offset, in, o);
  set_scale(scale);
  offset_ = offset;
}

}  // namespace dpflow
