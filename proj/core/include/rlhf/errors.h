// Copyright 2026 The rlhf-bilevel Authors
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

#ifndef RLHF_ERRORS_H_
#define RLHF_ERRORS_H_

#include <stdexcept>
#include <string>

namespace rlhf {

// Every failure raised by the library derives from Error so callers can map
// categories onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or parameter shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. replaying a consumed tape or fitting on an empty buffer.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or a failed numerical routine.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or malformed configuration files.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : Error(key.empty() ? what : key + ": " + what), key_(key) {}
  explicit ConfigError(const std::string& what) : ConfigError("", what) {}

  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// A model produced an output that violates its contract (e.g. an
// unnormalized distribution or a non-finite reward).
class ModelError : public Error {
 public:
  using Error::Error;
};

// A requested exact enumeration exceeds the supported size.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// An iterative solver hit its iteration cap.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace rlhf

#endif  // RLHF_ERRORS_H_
