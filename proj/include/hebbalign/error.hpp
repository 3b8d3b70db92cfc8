// Copyright 2026 The hebbalign Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace hebbalign {

// Base of every error the library throws. The CLI maps subclasses to exit
// codes, so new failure modes should derive from the closest category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A numeric argument is outside its documented domain (negative std, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input data (dataset files, CSV rows).
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment configuration: unknown keys, bad values, unsupported
// rule/model combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf appeared in a parameter update.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A caller broke an API contract, e.g. backward() on traces from other params.
class ContractError : public Error {
 public:
  using Error::Error;
};

// No zero-alignment crossing could be located in a phase grid.
class BoundaryNotFound : public Error {
 public:
  using Error::Error;
};

}  // namespace hebbalign
