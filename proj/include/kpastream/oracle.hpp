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

// Naive reference interpreter: evaluates a pipeline over raw rows with hash
// maps, full sorts and nested loops. Used as ground truth for the engine.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kpastream/model.hpp"
#include "kpastream/pipeline_spec.hpp"

namespace kpastream::oracle {

/// Window id -> output rows, sorted.
using OracleResult = std::map<WindowId, std::vector<Row>>;

/// `inputs[i]` holds every record of pipeline input i. Throws ConfigError
/// for operators it cannot evaluate (Sample).
OracleResult evaluate(const Pipeline& pipeline, const std::vector<std::vector<Row>>& inputs);

/// Describes the first window where the two results differ, or nullopt.
std::optional<std::string> first_divergence(const OracleResult& expected, const OracleResult& actual);

}  // namespace kpastream::oracle
