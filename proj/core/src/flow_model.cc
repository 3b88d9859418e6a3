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

#include "dpflow/flow_model.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <type_traits>

#include "dpflow/error.h"
#include "dpflow/random.h"

namespace dpflow {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string LayerTypeName(const Layer& layer) {
  return std::visit(
      Overloaded{[](const MadeLayer&) { return std::string("made"); },
                 [](const ActNormLayer&) { return std::string("actnorm"); },
                 [](const ReversalLayer&) { return std::string("reversal"); }},
      layer);
}

nlohmann::json MatrixToJson(const RowMatrix& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

RowMatrix MatrixFromJson(const nlohmann::json& j, Eigen::Index rows,
                         Eigen::Index cols) {
  const auto values = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != rows * cols) {
    throw FormatError("tensor size mismatch in model file");
  }
  RowMatrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

Vector VectorFromJson(const nlohmann::json& j, Eigen::Index size) {
  const auto values = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != size) {
    throw FormatError("tensor size mismatch in model file");
  }
  return Eigen::Map<const Vector>(values.data(), size);
}

nlohmann::json VectorToJson(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

nlohmann::json RowsToJson(const RowMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows.push_back(std::vector<double>(m.row(i).data(),
                                       m.row(i).data() + m.cols()));
  }
  return rows;
}

RowMatrix RowsFromJson(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw FormatError("empty matrix in model file");
  RowMatrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) {
      throw FormatError("ragged matrix in model file");
    }
    for (std::size_t d = 0; d < rows[i].size(); ++d) m(i, d) = rows[i][d];
  }
  return m;
}

}  // namespace

std::size_t LayerParameterCount(const Layer& layer) {
  return std::visit(
      Overloaded{[](const MadeLayer& l) { return l.ParameterCount(); },
                 [](const ActNormLayer& l) { return l.ParameterCount(); },
                 [](const ReversalLayer&) { return std::size_t{0}; }},
      layer);
}

int LayerDim(const Layer& layer) {
  return std::visit([](const auto& l) { return l.dim(); }, layer);
}

// ---------------------------------------------------------------------------
// BaseDistribution

BaseDistribution::BaseDistribution(StandardNormalBase base)
    : impl_(base), dim_(base.dim) {
  if (base.dim < 1) throw ConfigurationError("base dimension must be positive");
}

BaseDistribution::BaseDistribution(GmmParams gmm) : dim_(gmm.dim()) {
  gmm.Validate();
  impl_ = std::move(gmm);
}

double BaseDistribution::LogPdf(VectorRef z) const {
  if (is_gmm()) return GmmLogPdf(gmm(), z);
  return -0.5 * (dim_ * kLog2Pi + z.squaredNorm());
}

double BaseDistribution::LogPdfWithGrad(VectorRef z,
                                        Eigen::Ref<Vector> grad) const {
  if (is_gmm()) return GmmLogPdfWithGrad(gmm(), z, grad);
  grad = -z;
  return -0.5 * (dim_ * kLog2Pi + z.squaredNorm());
}

RowMatrix BaseDistribution::Sample(int n, Rng& rng) const {
  if (is_gmm()) return GmmSample(gmm(), n, rng());
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix z(n, dim_);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
  return z;
}

nlohmann::json BaseDistribution::ToJson() const {
  if (!is_gmm()) return {{"type", "standard_normal"}, {"dim", dim_}};
  const GmmParams& g = gmm();
  return {{"type", "gmm"},
          {"dim", dim_},
          {"weights", VectorToJson(g.weights)},
          {"means", RowsToJson(g.means)},
          {"variances", RowsToJson(g.variances)}};
}

BaseDistribution BaseDistribution::FromJson(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "standard_normal") {
    return BaseDistribution(StandardNormalBase{j.at("dim").get<int>()});
  }
  if (type == "gmm") {
    GmmParams g;
    const auto weights = j.at("weights").get<std::vector<double>>();
    g.weights = Eigen::Map<const Vector>(weights.data(), weights.size());
    g.means = RowsFromJson(j.at("means"));
    g.variances = RowsFromJson(j.at("variances"));
    return BaseDistribution(std::move(g));
  }
  throw FormatError("unknown base distribution type: " + type);
}

// ---------------------------------------------------------------------------
// FlowModel

FlowModel::FlowModel(BaseDistribution base) : base_(std::move(base)) {
  RebuildOffsets();
}

FlowModel FlowModel::MakeMaf(const MafConfig& config, std::uint64_t seed) {
  if (config.blocks < 0) throw ConfigurationError("block count must be >= 0");
  FlowModel model(BaseDistribution::StandardNormal(config.dim));
  Rng rng = MakeRng(seed, /*stream=*/0x6d616600);
  for (int b = 0; b < config.blocks; ++b) {
    MadeLayer made(config.dim, config.hidden, config.scale_clamp);
    made.InitializeRandom(rng, config.head_init_scale);
    model.AddLayer(std::move(made));
    model.AddLayer(ReversalLayer(config.dim));
    if (config.actnorm) model.AddLayer(ActNormLayer(config.dim));
  }
  return model;
}

void FlowModel::set_base(BaseDistribution base) {
  if (base.dim() != dim()) {
    throw ConfigurationError("base distribution dimension mismatch");
  }
  base_ = std::move(base);
}

void FlowModel::AddLayer(Layer layer) {
  if (LayerDim(layer) != dim()) {
    throw ConfigurationError("layer dimension does not match the model");
  }
  layers_.push_back(std::move(layer));
  RebuildOffsets();
}

void FlowModel::RebuildOffsets() {
  offsets_.assign(1, 0);
  for (const Layer& l : layers_) {
    offsets_.push_back(offsets_.back() + LayerParameterCount(l));
  }
}

Vector FlowModel::ForwardRange(VectorRef x, std::size_t begin, std::size_t end,
                               double* logdet) const {
  if (x.size() != dim()) throw InvalidInputError("input dimension mismatch");
  Vector h = x;
  double total = 0.0;
  for (std::size_t k = begin; k < end; ++k) {
    double ld = 0.0;
    h = std::visit(
        Overloaded{[&](const MadeLayer& l) {
                     auto r = l.Forward(h);
                     ld = r.logdet;
                     return std::move(r.y);
                   },
                   [&](const ActNormLayer& l) {
                     auto r = l.Apply(h, ActNormLayer::Direction::kForward);
                     ld = r.logdet;
                     return std::move(r.y);
                   },
                   [&](const ReversalLayer& l) { return l.Apply(h); }},
        layers_[k]);
    total += ld;
    if (!h.allFinite() || !std::isfinite(total)) {
      throw OverflowError(
          "non-finite value produced by layer " + std::to_string(k) + " (" +
              LayerTypeName(layers_[k]) + ")",
          static_cast<int>(k));
    }
  }
  if (logdet != nullptr) *logdet += total;
  return h;
}

Vector FlowModel::Inverse(VectorRef z) const {
  if (z.size() != dim()) throw InvalidInputError("input dimension mismatch");
  Vector h = z;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    h = std::visit(
        Overloaded{[&](const MadeLayer& l) { return l.Inverse(h); },
                   [&](const ActNormLayer& l) {
                     return l.Apply(h, ActNormLayer::Direction::kInverse).y;
                   },
                   [&](const ReversalLayer& l) { return l.Apply(h); }},
        layers_[k]);
  }
  return h;
}

double FlowModel::LogProb(VectorRef x) const {
  double logdet = 0.0;
  const Vector z = Forward(x, &logdet);
  const double value = base_.LogPdf(z) + logdet;
  if (std::isnan(value) || value == std::numeric_limits<double>::infinity()) {
    throw OverflowError("non-finite base log-density", -1);
  }
  return value;
}

Vector FlowModel::LogProbRows(const RowMatrix& x) const {
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out[i] = LogProb(x.row(i).transpose());
  }
  return out;
}

RowMatrix FlowModel::Sample(int n, std::uint64_t seed) const {
  if (n < 1) throw ConfigurationError("sample count must be positive");
  Rng rng = MakeRng(seed);
  RowMatrix z = base_.Sample(n, rng);
  RowMatrix x(n, dim());
  for (int i = 0; i < n; ++i) x.row(i) = Inverse(z.row(i).transpose());
  return x;
}

double FlowModel::NllLoss(const RowMatrix& batch) const {
  if (batch.rows() < 1) throw InvalidInputError("empty batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    total += LogProb(batch.row(i).transpose());
  }
  return -total / static_cast<double>(batch.rows());
}

Gradient FlowModel::PerExampleGrad(VectorRef x) const {
  Gradient g(ParameterCount());
  LossAndGrad(x, g);
  return g;
}

double FlowModel::LossAndGrad(VectorRef x, Eigen::Ref<Vector> grad) const {
  if (x.size() != dim()) throw InvalidInputError("input dimension mismatch");
  if (static_cast<std::size_t>(grad.size()) != ParameterCount()) {
    throw InvalidInputError("gradient buffer does not match parameter count");
  }
  // Forward with retained activations.
  std::vector<MadeLayer::Cache> caches(layers_.size());
  std::vector<Vector> inputs(layers_.size());
  Vector h = x;
  double logdet = 0.0;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    inputs[k] = h;
    h = std::visit(
        Overloaded{[&](const MadeLayer& l) {
                     logdet += l.ForwardCached(h, caches[k]);
                     return caches[k].u;
                   },
                   [&](const ActNormLayer& l) {
                     auto r = l.Apply(h, ActNormLayer::Direction::kForward);
                     logdet += r.logdet;
                     return std::move(r.y);
                   },
                   [&](const ReversalLayer& l) { return l.Apply(h); }},
        layers_[k]);
    if (!h.allFinite()) {
      throw OverflowError("non-finite value produced by layer " +
                              std::to_string(k),
                          static_cast<int>(k));
    }
  }
  Vector g(dim());
  const double log_q = base_.LogPdfWithGrad(h, g);
  const double loss = -(log_q + logdet);
  g = -g;  // dL/dz
  if (!std::isfinite(loss) || !g.allFinite()) {
    throw InstabilityError("non-finite loss at the base density", -1);
  }

  for (std::size_t k = layers_.size(); k-- > 0;) {
    std::span<double> slot(grad.data() + offsets_[k],
                           offsets_[k + 1] - offsets_[k]);
    g = std::visit(
        Overloaded{
            [&](const MadeLayer& l) { return l.Backward(caches[k], g, slot); },
            [&](const ActNormLayer& l) {
              return l.Backward(inputs[k], g, slot);
            },
            [&](const ReversalLayer&) { return Vector(g.reverse()); }},
        layers_[k]);
    const bool finite =
        g.allFinite() && std::all_of(slot.begin(), slot.end(),
                                     [](double v) { return std::isfinite(v); });
    if (!finite) {
      throw InstabilityError("non-finite gradient in layer " +
                                 std::to_string(k) + " (" +
                                 LayerTypeName(layers_[k]) + ")",
                             static_cast<int>(k));
    }
  }
  return loss;
}

std::size_t FlowModel::ParameterCount() const { return offsets_.back(); }

std::size_t FlowModel::ParameterOffset(std::size_t layer) const {
  return offsets_.at(layer);
}

Vector FlowModel::GetParameters() const {
  Vector out(ParameterCount());
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    std::span<double> slot(out.data() + offsets_[k],
                           offsets_[k + 1] - offsets_[k]);
    std::visit(Overloaded{[&](const MadeLayer& l) { l.GetParameters(slot); },
                          [&](const ActNormLayer& l) { l.GetParameters(slot); },
                          [](const ReversalLayer&) {}},
               layers_[k]);
  }
  return out;
}

void FlowModel::SetParameters(VectorRef params) {
  if (static_cast<std::size_t>(params.size()) != ParameterCount()) {
    throw ConfigurationError("parameter vector length mismatch");
  }
  if (!params.allFinite()) {
    throw InvalidInputError("non-finite parameter values");
  }
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    std::span<const double> slot(params.data() + offsets_[k],
                                 offsets_[k + 1] - offsets_[k]);
    std::visit(Overloaded{[&](MadeLayer& l) { l.SetParameters(slot); },
                          [&](ActNormLayer& l) { l.SetParameters(slot); },
                          [](ReversalLayer&) {}},
               layers_[k]);
  }
}

RowMatrix FlowModel::ForwardRows(const RowMatrix& x) const {
  RowMatrix z(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    z.row(i) = Forward(x.row(i).transpose());
  }
  return z;
}

void FlowModel::ProjectParameters(Eigen::Ref<Vector> params) const {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    std::span<double> slot(params.data() + offsets_[k],
                           offsets_[k + 1] - offsets_[k]);
    if (const auto* made = std::get_if<MadeLayer>(&layers_[k])) {
      MadeLayer copy = *made;
      copy.SetParameters(slot);
      copy.GetParameters(slot);
    } else if (const auto* act = std::get_if<ActNormLayer>(&layers_[k])) {
      for (int i = 0; i < act->dim(); ++i) {
        slot[i] = std::max(slot[i], kActNormScaleFloor);
      }
    }
  }
}

ParameterSlot FlowModel::Locate(std::size_t flat_index) const {
  if (flat_index >= ParameterCount()) {
    throw InvalidInputError("parameter index out of range");
  }
  const auto it =
      std::upper_bound(offsets_.begin(), offsets_.end(), flat_index);
  const std::size_t layer = static_cast<std::size_t>(it - offsets_.begin()) - 1;
  std::size_t local = flat_index - offsets_[layer];
  ParameterSlot slot;
  slot.layer = static_cast<int>(layer);
  if (const auto* made = std::get_if<MadeLayer>(&layers_[layer])) {
    for (int t = 0; t < MadeLayer::kTensorCount; ++t) {
      const auto tensor = static_cast<MadeLayer::Tensor>(t);
      const std::size_t size =
          t < 4 ? static_cast<std::size_t>(made->weights(tensor).size())
                : static_cast<std::size_t>(made->bias(tensor).size());
      if (local < size) {
        slot.tensor = MadeLayer::TensorName(tensor);
        slot.position = local;
        return slot;
      }
      local -= size;
    }
  }
  const auto& act = std::get<ActNormLayer>(layers_[layer]);
  const std::size_t d = static_cast<std::size_t>(act.dim());
  slot.tensor = local < d ? "scale" : "offset";
  slot.position = local < d ? local : local - d;
  return slot;
}

nlohmann::json FlowModel::ToJson() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& layer : layers_) {
    nlohmann::json j;
    j["type"] = LayerTypeName(layer);
    if (const auto* made = std::get_if<MadeLayer>(&layer)) {
      j["dim"] = made->dim();
      j["hidden"] = made->hidden();
      j["scale_clamp"] = made->scale_clamp();
      for (int t = 0; t < MadeLayer::kTensorCount; ++t) {
        const auto tensor = static_cast<MadeLayer::Tensor>(t);
        const std::string name(MadeLayer::TensorName(tensor));
        j[name] = t < 4 ? MatrixToJson(made->weights(tensor))
                        : VectorToJson(made->bias(tensor));
      }
    } else if (const auto* act = std::get_if<ActNormLayer>(&layer)) {
      j["dim"] = act->dim();
      j["scale"] = VectorToJson(act->scale());
      j["offset"] = VectorToJson(act->offset());
    } else {
      j["dim"] = LayerDim(layer);
    }
    layers.push_back(std::move(j));
  }
  return {{"format", "dpflow-model"},
          {"format_version", kModelFormatVersion},
          {"dim", dim()},
          {"base", base_.ToJson()},
          {"layers", std::move(layers)}};
}

FlowModel FlowModel::FromJson(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw FormatError("unsupported model format version " +
                        std::to_string(version));
    }
    const int dim = j.at("dim").get<int>();
    FlowModel model(BaseDistribution::FromJson(j.at("base")));
    if (model.dim() != dim) throw FormatError("base dimension mismatch");
    for (const auto& lj : j.at("layers")) {
      const std::string type = lj.at("type").get<std::string>();
      if (type == "made") {
        MadeLayer made(lj.at("dim").get<int>(), lj.at("hidden").get<int>(),
                       lj.at("scale_clamp").get<double>());
        for (int t = 0; t < MadeLayer::kTensorCount; ++t) {
          const auto tensor = static_cast<MadeLayer::Tensor>(t);
          const auto& value = lj.at(std::string(MadeLayer::TensorName(tensor)));
          if (t < 4) {
            const RowMatrix& ref = made.weights(tensor);
            made.set_weights(tensor,
                             MatrixFromJson(value, ref.rows(), ref.cols()));
          } else {
            made.set_bias(tensor,
                          VectorFromJson(value, made.bias(tensor).size()));
          }
        }
        model.AddLayer(std::move(made));
      } else if (type == "actnorm") {
        const int d = lj.at("dim").get<int>();
        model.AddLayer(ActNormLayer(VectorFromJson(lj.at("offset"), d),
                                    VectorFromJson(lj.at("scale"), d)));
      } else if (type == "reversal") {
        model.AddLayer(ReversalLayer(lj.at("dim").get<int>()));
      } else {
        throw FormatError("unknown layer type: " + type);
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  }
}

void FlowModel::Save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << ToJson().dump(1) << '\n';
  if (!out) throw FormatError("failed writing " + path.string());
}

FlowModel FlowModel::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed model file " + path.string() + ": " +
                      e.what());
  }
  return FromJson(j);
}

EmResult FitGmmBase(const RowMatrix& data, FlowModel& model, int components,
                    int iterations, std::uint64_t seed) {
  EmResult em = GmmFitEm(model.ForwardRows(data), components, iterations, seed);
  model.set_base(BaseDistribution(em.params));
  return em;
}

}  // namespace dpflow
