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

// Engine-side folding of one key group into output rows.

#include <span>
#include <vector>

#include "kpastream/model.hpp"
#include "kpastream/pipeline_spec.hpp"

namespace kpastream {

/// Appends the rows [key, agg values..., stamp] for one group to `out`.
/// `values` is scratch and may be reordered.
void fold_group(const Aggregate& agg, Value key, std::vector<Value>& values, Value stamp, Bundle& out);

/// Same for an unkeyed aggregate: rows [agg values..., stamp].
void fold_unkeyed(const Aggregate& agg, Value sum, Value count, Value stamp, Bundle& out);

/// Running (sum, count) for Avg partials and unkeyed aggregates.
struct SumCount {
  Value sum = 0;
  Value count = 0;

  void add(Value v) {
    sum += v;
    ++count;
  }
  void merge(const SumCount& o) {
    sum += o.sum;
    count += o.count;
  }
};

}  // namespace kpastream
