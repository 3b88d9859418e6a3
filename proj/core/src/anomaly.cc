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

#include "dpflow/anomaly.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "dpflow/error.h"
#include "dpflow/random.h"

namespace dpflow {
namespace {

void CheckScoresAndLabels(std::span<const double> scores,
                          std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw InvalidInputError("scores and labels differ in length");
  }
  std::size_t positives = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw InvalidInputError("labels must be 0 or 1");
    }
    if (std::isnan(scores[i])) throw InvalidInputError("score is NaN");
    positives += labels[i];
  }
  if (positives == 0 || positives == labels.size()) {
    throw InvalidInputError("both classes must be present");
  }
}

std::vector<std::size_t> SortedOrder(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  return order;
}

// Linear interpolation between closest ranks of a sorted column.
double Percentile(const std::vector<double>& sorted, double p) {
  const double pos = (sorted.size() - 1) * p / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
}

}  // namespace

DistributionLabel ThresholdClassify(const FlowModel& model, VectorRef x,
                                    double threshold) {
  return model.LogProb(x) > threshold ? DistributionLabel::kInDistribution
                                      : DistributionLabel::kOutOfDistribution;
}

ThresholdChoice SelectThreshold(std::span<const double> scores,
                                std::span<const int> labels) {
  CheckScoresAndLabels(scores, labels);
  const std::vector<std::size_t> order = SortedOrder(scores);
  const std::size_t n = scores.size();
  const std::size_t total_in =
      static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));

  // Cut below everything: all predicted in.
  std::size_t correct = total_in;
  ThresholdChoice best{scores[order.front()] - 1.0,
                       static_cast<double>(correct) / n};
  std::size_t i = 0;
  while (i < n) {
    const double value = scores[order[i]];
    while (i < n && scores[order[i]] == value) {
      correct += labels[order[i]] == 0 ? 1 : 0;
      correct -= labels[order[i]] == 1 ? 1 : 0;
      ++i;
    }
    const double cut =
        i < n ? 0.5 * (value + scores[order[i]]) : value + 1.0;
    const double accuracy = static_cast<double>(correct) / n;
    if (accuracy >= best.accuracy) best = {cut, accuracy};
  }
  return best;
}

RocCurve Roc(std::span<const double> scores, std::span<const int> labels) {
  CheckScoresAndLabels(scores, labels);
  std::vector<std::size_t> order = SortedOrder(scores);
  std::reverse(order.begin(), order.end());
  const double positives = std::count(labels.begin(), labels.end(), 1);
  const double negatives = labels.size() - positives;

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double tp = 0.0;
  double fp = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double value = scores[order[i]];
    while (i < order.size() && scores[order[i]] == value) {
      (labels[order[i]] == 1 ? tp : fp) += 1.0;
      ++i;
    }
    const RocPoint& prev = curve.points.back();
    const RocPoint next{value, fp / negatives, tp / positives};
    curve.auc += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) / 2.0;
    curve.points.push_back(next);
  }
  return curve;
}

PercentileBands TailBands(const RowMatrix& reference) {
  if (reference.rows() < 20) {
    throw InvalidInputError("need at least 20 reference rows; got " +
                            std::to_string(reference.rows()));
  }
  const Eigen::Index d = reference.cols();
  PercentileBands bands{Vector(d), Vector(d), Vector(d), Vector(d)};
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> column(reference.col(j).begin(),
                               reference.col(j).end());
    std::sort(column.begin(), column.end());
    if (column.front() == column.back()) {
      throw InvalidInputError("dimension " + std::to_string(j) +
                              " is constant");
    }
    bands.p5[j] = Percentile(column, 5.0);
    bands.p30[j] = Percentile(column, 30.0);
    bands.p70[j] = Percentile(column, 70.0);
    bands.p95[j] = Percentile(column, 95.0);
  }
  return bands;
}

RowMatrix GenTailAnomalies(const RowMatrix& reference, int count,
                           std::uint64_t seed) {
  if (count < 0) throw InvalidInputError("count must be non-negative");
  const PercentileBands bands = TailBands(reference);
  Rng rng = MakeRng(seed);
  RowMatrix out(count, reference.cols());
  for (int i = 0; i < count; ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      const bool lower = UniformUnit(rng) < 0.5;
      const double u = UniformUnit(rng);
      out(i, j) = lower ? bands.p5[j] + u * (bands.p30[j] - bands.p5[j])
                        : bands.p70[j] + u * (bands.p95[j] - bands.p70[j]);
    }
  }
  return out;
}

EnsembleDetector::EnsembleDetector(std::vector<FlowModel> members,
                                   double threshold)
    : members_(std::move(members)), threshold_(threshold) {
  if (members_.empty()) throw ConfigurationError("ensemble needs a member");
  for (const auto& m : members_) {
    if (m.dim() != members_.front().dim()) {
      throw ConfigurationError("ensemble members differ in dimension");
    }
  }
}

int EnsembleDetector::CountVotes(VectorRef x) const {
  int votes = 0;
  for (const auto& m : members_) {
    if (ThresholdClassify(m, x, threshold_) ==
        DistributionLabel::kInDistribution) {
      ++votes;
    }
  }
  return votes;
}

DistributionLabel EnsembleDetector::MajorityVote(VectorRef x) const {
  return 2 * CountVotes(x) > size() ? DistributionLabel::kInDistribution
                                    : DistributionLabel::kOutOfDistribution;
}

DistributionLabel EnsembleDetector::MajorityVote(VectorRef x,
                                                std::uint64_t tie_seed) const {
  const int votes = CountVotes(x);
  if (2 * votes != size()) {
    return 2 * votes > size() ? DistributionLabel::kInDistribution
                              : DistributionLabel::kOutOfDistribution;
  }
  Rng rng = MakeRng(tie_seed);
  return UniformUnit(rng) < 0.5 ? DistributionLabel::kInDistribution
                                : DistributionLabel::kOutOfDistribution;
}

std::vector<std::vector<Eigen::Index>> PartitionRows(Eigen::Index n, int k,
                                                     std::uint64_t seed) {
  if (k < 1) throw ConfigurationError("partition count must be >= 1");
  if (n < k) throw InvalidInputError("fewer rows than partitions");
  std::vector<Eigen::Index> rows(n);
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  Rng rng = MakeRng(seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  std::vector<std::vector<Eigen::Index>> parts(k);
  const Eigen::Index base = n / k;
  const Eigen::Index extra = n % k;
  auto it = rows.begin();
  for (int i = 0; i < k; ++i) {
    const Eigen::Index size = base + (i < extra ? 1 : 0);
    parts[i].assign(it, it + size);
    it += size;
  }
  return parts;
}

EnsembleDetector BuildEnsemble(const RowMatrix& data, int k,
                               const MafConfig& flow,
                               const NonPrivateConfig& training,
                               double threshold, std::uint64_t seed) {
  if (k < 1) throw ConfigurationError("partition count must be >= 1");
  if (data.rows() < static_cast<Eigen::Index>(k) * kMinPartitionSize) {
    throw InvalidInputError("need at least " +
                            std::to_string(k * kMinPartitionSize) +
                            " rows for " + std::to_string(k) + " partitions");
  }
  const auto parts = PartitionRows(data.rows(), k, DeriveSeed(seed, 0));
  std::vector<FlowModel> members;
  members.reserve(k);
  for (int i = 0; i < k; ++i) {
    RowMatrix part(parts[i].size(), data.cols());
    for (std::size_t r = 0; r < parts[i].size(); ++r) {
      part.row(r) = data.row(parts[i][r]);
    }
    NonPrivateConfig member_training = training;
    member_training.seed = DeriveSeed(training.seed, i + 1);
    members.push_back(TrainNonPrivate(
        part, FlowModel::MakeMaf(flow, DeriveSeed(seed, i + 1)),
        member_training));
  }
  return EnsembleDetector(std::move(members), threshold);
}

DistributionLabel DpAdQuery(const EnsembleDetector& detector, VectorRef x,
                            double epsilon, std::uint64_t seed) {
  return ExpMechBinary(detector.CountVotes(x), detector.size(), epsilon, seed);
}

}  // namespace dpflow
