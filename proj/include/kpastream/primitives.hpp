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

// KPA primitives. Maintenance (extract, key_swap, materialize), grouping
// (sort, merge, join, partition, selection) and reduction (in-KPA and
// out-of-KPA), plus the hash-table GroupBy used as a baseline.
//
// Grouping primitives read and write KPA storage only. key_swap, the
// out-of-KPA reductions and materialize dereference records and count it.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "kpastream/kpa.hpp"
#include "kpastream/pipeline_spec.hpp"

namespace kpastream::prim {

/// Bytes charged to the slow pool for one random record access.
inline constexpr std::size_t kDerefBytes = 64;

Kpa extract(ExecContext& ctx, const BundleHandle& bundle, std::size_t key_column);

/// Extract fused with row filters (all must hold) evaluated during the same scan.
Kpa extract_filtered(ExecContext& ctx, const BundleHandle& bundle, std::span<const Predicate> filters,
                     std::size_t key_column);

/// Replaces the resident keys with `new_column`. When the KPA is dirty and
/// `write_back_dirty` is set, the current keys are first written back to
/// the resident column of their records.
void key_swap(ExecContext& ctx, Kpa& kpa, std::size_t new_column, bool write_back_dirty);

void sort(ExecContext& ctx, Kpa& kpa);

/// Throws InvariantError unless both inputs are sorted.
Kpa merge(ExecContext& ctx, const Kpa& left, const Kpa& right);

/// Pairwise merge rounds until one KPA is left. Empty input gives an empty KPA
/// with resident column `resident_column`.
Kpa merge_all(ExecContext& ctx, std::vector<Kpa> kpas, std::size_t resident_column);
/// Same over borrowed inputs, which stay untouched. A single input is copied.
Kpa merge_all(ExecContext& ctx, std::span<const Kpa* const> kpas, std::size_t resident_column);

/// New KPA with the same pairs, links and flags.
Kpa copy(ExecContext& ctx, const Kpa& kpa);

using RefPair = std::pair<RecordRef, RecordRef>;

/// Sort-merge inner join on the resident keys; per-key cross product.
/// Throws InvariantError unless both inputs are sorted.
std::vector<RefPair> join(ExecContext& ctx, const Kpa& left, const Kpa& right);

/// Range partition on the resident key: pair with key k goes to k / width.
/// Each output links only the bundles its pairs point into. width 0 is a
/// ConfigError.
std::vector<std::pair<std::int64_t, Kpa>> partition(ExecContext& ctx, const Kpa& kpa, Value width);

Kpa selection(ExecContext& ctx, const Kpa& kpa, const std::function<bool(Value)>& keep);
Kpa selection_pairs(ExecContext& ctx, const Kpa& kpa, const std::function<bool(const KeyRef&)>& keep);

/// Folds each contiguous run of pairs with equal group_of(key) into one
/// pair. fold(acc, next) returns the new accumulator.
Kpa reduce_in_kpa(ExecContext& ctx, const Kpa& kpa, const std::function<Value(Value)>& group_of,
                  const std::function<KeyRef(const KeyRef&, const KeyRef&)>& fold);

/// One aggregate per contiguous key range over deref(ref)[value_column].
/// Output rows [key, aggregate values..., stamp] in `out_schema`.
BundleHandle reduce_out_of_kpa(ExecContext& ctx, const Kpa& kpa, std::size_t value_column, const Aggregate& agg,
                               Value stamp, const SchemaPtr& out_schema);

/// Combines early-aggregation partial rows (same layout as the final rows)
/// reached through a KPA sorted on the partial rows' key column.
BundleHandle combine_partials(ExecContext& ctx, const Kpa& kpa, const Aggregate& agg, Value stamp,
                              const SchemaPtr& out_schema);

/// Copies the referenced records, in pair order, into a new bundle.
BundleHandle materialize(ExecContext& ctx, const Kpa& kpa, const SchemaPtr& schema);
/// Same, then drops the KPA and its links.
BundleHandle materialize(ExecContext& ctx, Kpa&& kpa, const SchemaPtr& schema);

/// Rewrites resident keys through the table in place and marks the KPA dirty.
void external_join(ExecContext& ctx, Kpa& kpa, const LookupTable& table);

struct HashGroupStats {
  std::size_t initial_slots = 0;
  std::size_t final_slots = 0;
  std::size_t resizes = 0;
};

/// Open-addressing hash GroupBy over whole bundles. Output rows are ordered
/// by key and match sort + reduce_out_of_kpa.
BundleHandle hash_group_by(ExecContext& ctx, std::span<const BundleHandle> bundles, std::size_t key_column,
                           std::size_t value_column, const Aggregate& agg, Value stamp,
                           const SchemaPtr& out_schema, std::size_t expected_keys = 0,
                           HashGroupStats* stats = nullptr);

/// Full-row grouping for narrow schemas: stable sort of the rows by key,
/// then the same fold as reduce_out_of_kpa.
BundleHandle row_group(ExecContext& ctx, std::vector<Row> rows, std::size_t key_column, std::size_t value_column,
                       const Aggregate& agg, Value stamp, const SchemaPtr& out_schema);

}  // namespace kpastream::prim
