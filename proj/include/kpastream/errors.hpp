// Copyright 2026 The kpastream Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace kpastream {

/// Invalid user-supplied configuration (CLI flags, pipeline definitions,
/// pool sizes). Maps to exit code 1 in the CLI.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline that cannot be planned (e.g. a key column absent from the schema).
class PlanError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Source misbehaviour detected at ingestion, such as a non-monotone watermark.
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A run that stopped because a worker task failed. Carries the diagnostic
/// of the first failure. Maps to exit code 2 in the CLI.
class RuntimeAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Broken internal invariant: dangling record reference, refcount underflow,
/// unsorted input to a merge, mutation of a sealed bundle, double close.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace kpastream
