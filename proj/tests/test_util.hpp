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

#include <random>
#include <vector>

#include "kpastream/hybrid_memory.hpp"
#include "kpastream/model.hpp"

namespace kpastream::testing {

inline SchemaPtr kv_schema() {
  return std::make_shared<Schema>(std::vector<std::string>{"key", "value", "ts"}, 2);
}

inline BundleHandle make_bundle(HybridMemory& mem, const SchemaPtr& schema, const std::vector<Row>& rows) {
  auto b = mem.new_bundle(schema);
  b->reserve(rows.size());
  for (const auto& r : rows) b->append(r);
  return mem.register_bundle(std::move(b));
}

inline std::vector<Row> random_rows(std::mt19937_64& rng, std::size_t n, Value keys, Value values,
                                    EventTime ts_span) {
  std::vector<Row> rows(n);
  for (auto& r : rows) {
    r = {rng() % keys, rng() % values, static_cast<Value>(rng() % static_cast<std::uint64_t>(ts_span))};
  }
  return rows;
}

inline PoolConfig roomy_pool() {
  PoolConfig p;
  p.fast_capacity_bytes = std::size_t{256} << 20;
  p.with_reserved_fraction(0.1);
  return p;
}

}  // namespace kpastream::testing
