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

#include "dpflow/dataset.h"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string_view>

#include "dpflow/error.h"
#include "dpflow/random.h"

namespace dpflow {
namespace {

std::vector<std::string_view> SplitFields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::string_view Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double ParseCell(std::string_view cell, std::size_t line, std::size_t column) {
  cell = Trim(cell);
  double value = 0.0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (cell.empty() || ec != std::errc() || ptr != end) {
    throw InvalidInputError("line " + std::to_string(line) + ", column " +
                            std::to_string(column) + ": not a number: '" +
                            std::string(cell) + "'");
  }
  if (!std::isfinite(value)) {
    throw InvalidInputError("line " + std::to_string(line) + ", column " +
                            std::to_string(column) + ": non-finite value");
  }
  return value;
}

}  // namespace

Dataset ParseCsv(const std::string& text, bool has_header) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  Dataset out;
  std::vector<double> values;
  std::size_t width = 0;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    const auto fields = SplitFields(line);
    if (has_header && out.column_names.empty() && rows == 0) {
      for (auto f : fields) out.column_names.emplace_back(Trim(f));
      width = fields.size();
      continue;
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw InvalidInputError("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(width) + " columns, found " +
                              std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      values.push_back(ParseCell(fields[j], line_no, j + 1));
    }
    ++rows;
  }
  if (rows == 0) throw InvalidInputError("CSV input has no data rows");
  out.values = Eigen::Map<RowMatrix>(values.data(), rows, width);
  return out;
}

Dataset LoadCsv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return ParseCsv(buffer.str(), has_header);
  } catch (const InvalidInputError& e) {
    throw InvalidInputError(path.string() + ": " + e.what());
  }
}

void SaveCsv(const std::filesystem::path& path, const RowMatrix& values,
             const std::vector<std::string>& column_names) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (f == nullptr) {
    throw InvalidInputError("cannot write " + path.string());
  }
  if (!column_names.empty()) {
    for (std::size_t j = 0; j < column_names.size(); ++j) {
      std::fprintf(f, "%s%s", j ? "," : "", column_names[j].c_str());
    }
    std::fputc('\n', f);
  }
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      std::fprintf(f, "%s%.17g", j ? "," : "", values(i, j));
    }
    std::fputc('\n', f);
  }
  if (std::fclose(f) != 0) {
    throw InvalidInputError("error writing " + path.string());
  }
}

void SaveCsv(const std::filesystem::path& path, const Dataset& data) {
  SaveCsv(path, data.values, data.column_names);
}

Standardization FitStandardization(const RowMatrix& values) {
  if (values.rows() == 0) throw InvalidInputError("empty dataset");
  Standardization s;
  s.mean = values.colwise().mean().transpose();
  const RowMatrix centered = values.rowwise() - s.mean.transpose();
  s.std = (centered.colwise().squaredNorm() /
           static_cast<double>(values.rows()))
              .cwiseSqrt()
              .transpose();
  for (Eigen::Index j = 0; j < s.std.size(); ++j) {
    if (!(s.std[j] > 0.0)) {
      throw InvalidInputError("column " + std::to_string(j) +
                              " has zero variance");
    }
  }
  return s;
}

RowMatrix ApplyStandardization(const RowMatrix& values,
                               const Standardization& s) {
  if (values.cols() != s.mean.size()) {
    throw InvalidInputError("standardization dimension mismatch");
  }
  return (values.rowwise() - s.mean.transpose()).array().rowwise() /
         s.std.transpose().array();
}

RowMatrix Unstandardize(const RowMatrix& values, const Standardization& s) {
  if (values.cols() != s.mean.size()) {
    throw InvalidInputError("standardization dimension mismatch");
  }
  RowMatrix out = values.array().rowwise() * s.std.transpose().array();
  return out.rowwise() + s.mean.transpose();
}

Dataset Standardize(const Dataset& data) {
  Dataset out;
  out.column_names = data.column_names;
  out.standardization = FitStandardization(data.values);
  out.values = ApplyStandardization(data.values, *out.standardization);
  return out;
}

Dataset Unstandardize(const Dataset& data) {
  if (!data.standardization.has_value()) {
    throw InvalidInputError("dataset carries no standardization record");
  }
  return {Unstandardize(data.values, *data.standardization), data.column_names,
          std::nullopt};
}

CvSplit MakeCvSplits(Eigen::Index n, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigurationError("need at least two folds");
  if (n < folds) {
    throw InvalidInputError("need at least " + std::to_string(folds) +
                            " rows; got " + std::to_string(n));
  }
  const auto test_size = static_cast<Eigen::Index>(
      std::llround(static_cast<double>(n) / folds));
  CvSplit splits;
  std::vector<Eigen::Index> perm(n);
  for (int f = 0; f < folds; ++f) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Rng rng = MakeRng(seed, f);
    std::shuffle(perm.begin(), perm.end(), rng);
    TrainTestSplit split;
    split.test.assign(perm.begin(), perm.begin() + test_size);
    split.train.assign(perm.begin() + test_size, perm.end());
    std::sort(split.test.begin(), split.test.end());
    std::sort(split.train.begin(), split.train.end());
    splits.push_back(std::move(split));
  }
  return splits;
}

RowMatrix SelectRows(const RowMatrix& values,
                     const std::vector<Eigen::Index>& rows) {
  RowMatrix out(rows.size(), values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= values.rows()) {
      throw InvalidInputError("row index out of range");
    }
    out.row(i) = values.row(rows[i]);
  }
  return out;
}

}  // namespace dpflow
