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

#ifndef DPFLOW_ERROR_H_
#define DPFLOW_ERROR_H_

#include <stdexcept>
#include <string>

namespace dpflow {

// Non-finite or malformed input handed to a numerical routine.
class InvalidInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Parameter values that violate a documented constraint (scale floors,
// privacy parameters out of range, mismatched dimensions).
class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A layer produced a non-finite intermediate value.
class OverflowError : public std::runtime_error {
 public:
  OverflowError(const std::string& what, int layer_index)
      : std::runtime_error(what), layer_index_(layer_index) {}
  int layer_index() const { return layer_index_; }

 private:
  int layer_index_;
};

// Non-finite gradient entries, attributed to the layer that owns them.
class InstabilityError : public std::runtime_error {
 public:
  InstabilityError(const std::string& what, int layer_index)
      : std::runtime_error(what), layer_index_(layer_index) {}
  int layer_index() const { return layer_index_; }

 private:
  int layer_index_;
};

// Privacy accounting failed (non-finite epsilon, empty order grid).
class AccountingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents (CSV, model JSON).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dpflow

#endif  // DPFLOW_ERROR_H_
