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

// Likelihood-threshold anomaly detection and the private ensemble detector.

#ifndef DPFLOW_ANOMALY_H_
#define DPFLOW_ANOMALY_H_

#include <cstdint>
#include <span>
#include <vector>

#include "dpflow/dp_optim.h"
#include "dpflow/flow_model.h"
#include "dpflow/mechanisms.h"
#include "dpflow/types.h"

namespace dpflow {

// In-distribution iff log p(x) > threshold.
DistributionLabel ThresholdClassify(const FlowModel& model, VectorRef x,
                                    double threshold);

struct ThresholdChoice {
  double threshold = 0.0;
  double accuracy = 0.0;
};

// Labels: 1 = in-distribution (predicted when score > threshold), 0 = out.
// Candidate cuts are midpoints between adjacent distinct sorted scores plus
// one cut below and one above the range. Ties go to the larger threshold.
ThresholdChoice SelectThreshold(std::span<const double> scores,
                                std::span<const int> labels);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0, 0) to (1, 1)
  double auc = 0.0;
};

// Label 1 is the positive class; points are "score >= threshold" for each
// unique score, preceded by (0, 0) at +infinity.
RocCurve Roc(std::span<const double> scores, std::span<const int> labels);

struct PercentileBands {
  Vector p5, p30, p70, p95;
};

// Linear-interpolation percentiles of each column.
PercentileBands TailBands(const RowMatrix& reference);

// Each coordinate uniform on [p5, p30] or [p70, p95] of its column, the band
// picked by a fair coin.
RowMatrix GenTailAnomalies(const RowMatrix& reference, int count,
                           std::uint64_t seed);

class EnsembleDetector {
 public:
  EnsembleDetector(std::vector<FlowModel> members, double threshold);

  int size() const { return static_cast<int>(members_.size()); }
  int dim() const { return members_.front().dim(); }
  const std::vector<FlowModel>& members() const { return members_; }
  double threshold() const { return threshold_; }
  void set_threshold(double threshold) { threshold_ = threshold; }

  int CountVotes(VectorRef x) const;
  // Majority vote without noise; a tie counts as out-of-distribution.
  DistributionLabel MajorityVote(VectorRef x) const;
  // As above, but a tie is settled by a fair coin drawn exactly as
  // ExpMechBinary draws from `tie_seed`, which is the large-epsilon limit of
  // the private query.
  DistributionLabel MajorityVote(VectorRef x, std::uint64_t tie_seed) const;

 private:
  std::vector<FlowModel> members_;
  double threshold_;
};

// Seeded shuffle then k contiguous parts whose sizes differ by at most one.
std::vector<std::vector<Eigen::Index>> PartitionRows(Eigen::Index n, int k,
                                                     std::uint64_t seed);

inline constexpr int kMinPartitionSize = 10;

// Trains one non-private flow per partition. Member i starts from
// MakeMaf(flow, DeriveSeed(seed, i + 1)).
EnsembleDetector BuildEnsemble(const RowMatrix& data, int k,
                               const MafConfig& flow,
                               const NonPrivateConfig& training,
                               double threshold, std::uint64_t seed);

DistributionLabel DpAdQuery(const EnsembleDetector& detector, VectorRef x,
                            double epsilon, std::uint64_t seed);

}  // namespace dpflow

#endif  // DPFLOW_ANOMALY_H_
