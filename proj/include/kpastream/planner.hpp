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

// Turns a declarative pipeline into the stage lists the runtime executes.
// Grouping stages get KPA inputs: an extraction is inserted before the
// first stage that needs one, key swaps wherever the resident column is not
// the column a stage works on, and row filters and flatmaps are fused into
// the scan that extracts.

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "kpastream/pipeline_spec.hpp"

namespace kpastream {

enum class StageKind {
  Ingest,
  Extract,
  ExtractFiltered,
  FlatMapExtract,  // materialize (if a KPA exists) + flatmap + extract in one pass
  Selection,
  SampleSelection,
  ExternalJoin,
  KeySwap,
  Partition,
  Sort,
  EarlyAggregate,
  ReduceInKpa,
  Save,
  JoinProbe,
  RowScan,
  RowPartition,
  Merge,
  ReduceOutOfKpa,
  CombinePartials,
  FoldUnkeyed,
  RowGroup,
  Materialize,
  Emit,
};

std::string to_string(StageKind k);

inline constexpr std::size_t kNoColumn = std::numeric_limits<std::size_t>::max();

struct Stage {
  StageKind kind = StageKind::Ingest;
  std::size_t column = kNoColumn;
  /// Row filters fused into an extraction, or the selection predicate.
  std::vector<Predicate> filters;
  std::size_t copies = 1;
  bool write_back = false;
  /// FlatMapExtract that first materializes an existing KPA.
  bool from_kpa = false;
  /// Index of the originating operator in Pipeline::operators, if any.
  std::size_t op_index = kNoColumn;
  std::string label;
};

struct InputPlan {
  /// Bundle-scoped stages, ending with the partition into panes.
  std::vector<Stage> bundle_stages;
  /// Stages applied to each pane KPA before it joins the window state.
  std::vector<Stage> pane_stages;
};

struct Plan {
  std::vector<InputPlan> inputs;
  std::vector<Stage> close_stages;
  /// Narrow schema: records are grouped as full rows without extraction.
  bool row_path = false;
  bool early_aggregation = false;

  /// Stage labels in execution order, input 0 first, then close stages.
  std::vector<std::string> describe() const;
  /// Stage labels of one input followed by the close stages.
  std::vector<std::string> describe_input(std::size_t input) const;
};

struct PlanOptions {
  /// Turns on early aggregation for every algebraic keyed aggregation.
  bool early_aggregation = false;
};

/// Throws PlanError for an invalid pipeline.
Plan plan(const Pipeline& pipeline, const PlanOptions& options = {});

}  // namespace kpastream
