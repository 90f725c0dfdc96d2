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

#include "kpastream/aggregate.hpp"

#include <algorithm>
#include <array>
#include <functional>

namespace kpastream {

void fold_group(const Aggregate& agg, Value key, std::vector<Value>& values, Value stamp, Bundle& out) {
  switch (agg.kind) {
    case AggregateKind::Sum: {
      Value s = 0;
      for (Value v : values) s += v;
      const std::array<Value, 3> row{key, s, stamp};
      out.append(row);
      break;
    }
    case AggregateKind::Count: {
      const std::array<Value, 3> row{key, static_cast<Value>(values.size()), stamp};
      out.append(row);
      break;
    }
    case AggregateKind::Avg: {
      Value s = 0;
      for (Value v : values) s += v;
      const Value n = values.size();
      const std::array<Value, 5> row{key, n == 0 ? 0 : s / n, s, n, stamp};
      out.append(row);
      break;
    }
    case AggregateKind::Median: {
      if (values.empty()) break;
      const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
      std::nth_element(values.begin(), mid, values.end());
      const std::array<Value, 3> row{key, *mid, stamp};
      out.append(row);
      break;
    }
    case AggregateKind::TopK: {
      const std::size_t k = std::min(agg.k, values.size());
      std::partial_sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end(),
                        std::greater<>());
      for (std::size_t i = 0; i < k; ++i) {
        const std::array<Value, 3> row{key, values[i], stamp};
        out.append(row);
      }
      break;
    }
    case AggregateKind::DistinctCount: {
      std::sort(values.begin(), values.end());
      const auto n = static_cast<Value>(std::unique(values.begin(), values.end()) - values.begin());
      const std::array<Value, 3> row{key, n, stamp};
      out.append(row);
      break;
    }
  }
}

void fold_unkeyed(const Aggregate& agg, Value sum, Value count, Value stamp, Bundle& out) {
  switch (agg.kind) {
    case AggregateKind::Sum: {
      const std::array<Value, 2> row{sum, stamp};
      out.append(row);
      break;
    }
    case AggregateKind::Count: {
      const std::array<Value, 2> row{count, stamp};
      out.append(row);
      break;
    }
    default: {
      const std::array<Value, 4> row{count == 0 ? 0 : sum / count, sum, count, stamp};
      out.append(row);
      break;
    }
  }
}

}  // namespace kpastream
