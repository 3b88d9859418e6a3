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

#ifndef DPFLOW_DATASET_H_
#define DPFLOW_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dpflow/types.h"

namespace dpflow {

struct Standardization {
  Vector mean;
  Vector std;
};

struct Dataset {
  RowMatrix values;
  std::vector<std::string> column_names;
  std::optional<Standardization> standardization;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

// Comma-separated, '.' decimal point. Throws InvalidInputError naming the
// offending line and column for ragged rows, non-numeric or non-finite cells
// and empty input.
Dataset LoadCsv(const std::filesystem::path& path, bool has_header);
Dataset ParseCsv(const std::string& text, bool has_header);

// Writes with 17 significant digits; a header line is emitted when column
// names are present.
void SaveCsv(const std::filesystem::path& path, const Dataset& data);
void SaveCsv(const std::filesystem::path& path, const RowMatrix& values,
             const std::vector<std::string>& column_names = {});

// Per-feature mean 0 and population std 1. Throws InvalidInputError for a
// constant column.
Dataset Standardize(const Dataset& data);
Standardization FitStandardization(const RowMatrix& values);
RowMatrix ApplyStandardization(const RowMatrix& values,
                               const Standardization& s);
RowMatrix Unstandardize(const RowMatrix& values, const Standardization& s);
Dataset Unstandardize(const Dataset& data);

struct TrainTestSplit {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
};
using CvSplit = std::vector<TrainTestSplit>;

// `folds` independent random splits, each holding out round(n / folds)
// rows. Indices within each set are ascending.
CvSplit MakeCvSplits(Eigen::Index n, int folds, std::uint64_t seed);

RowMatrix SelectRows(const RowMatrix& values,
                     const std::vector<Eigen::Index>& rows);

}  // namespace dpflow

#endif  // DPFLOW_DATASET_H_
