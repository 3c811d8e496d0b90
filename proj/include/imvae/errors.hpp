// Copyright 2026 The imvae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace imvae {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the domain of a function (log of a non-positive
/// number, |rho| >= 1, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A caller-side precondition was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (bad magic, bad checkpoint layout).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File payload shorter than its header announces.
class LengthError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration; the message lists every offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace imvae
