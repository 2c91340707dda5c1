/* Copyright (c) 2026 The sherdmatch Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <stdexcept>
#include <string>

namespace sherdmatch {

/// Broad failure categories. The CLI maps each one onto a distinct exit code.
enum class ErrorKind {
  kInternal,
  kUsage,
  kMissingInput,
  kConfig,
  kShape,
  kData,
  kNumeric,
  kIntegrity,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInternal: return "internal";
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kMissingInput: return "missing_input";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kData: return "data";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kIntegrity: return "integrity";
  }
  return "internal";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Tensor or layer shape incompatibility.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::kShape, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

/// Bad input data: malformed names, empty profiles, non-binary targets.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, what) {}
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what) : Error(ErrorKind::kIntegrity, what) {}
};

class MissingInputError : public Error {
 public:
  explicit MissingInputError(const std::string& what)
      : Error(ErrorKind::kMissingInput, what) {}
};

}  // namespace sherdmatch
