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

#include <cstddef>
#include <span>
#include <vector>

#include "kpastream/hybrid_memory.hpp"
#include "kpastream/model.hpp"

namespace kpastream {

/// What a primitive needs to run: the memory system, the impact tag of the
/// task (placement of any KPA it creates) and its intra-op parallelism.
struct ExecContext {
  HybridMemory& memory;
  ImpactTag tag = ImpactTag::High;
  int workers = 1;
};

/// Key Pointer Array: (resident key, record reference) pairs drawn from one
/// column of records that stay in their bundles. The KPA holds one bundle
/// reference per distinct source bundle; destroying it releases them.
class Kpa {
 public:
  /// Places the pair storage according to ctx.tag and links every bundle
  /// the pairs point into, plus `extra_links`.
  static Kpa create(ExecContext& ctx, std::size_t resident_column, std::vector<KeyRef> pairs, bool sorted,
                    std::span<const BundleId> extra_links = {});

  /// Ids of the linked bundles, ascending.
  std::vector<BundleId> link_ids() const;

  Kpa(Kpa&&) noexcept = default;
  Kpa& operator=(Kpa&&) noexcept = default;
  Kpa(const Kpa&) = delete;
  Kpa& operator=(const Kpa&) = delete;

  std::size_t resident_column() const { return resident_column_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  std::size_t bytes() const { return pairs_.size() * sizeof(KeyRef); }

  std::span<const KeyRef> pairs() const { return pairs_; }
  std::span<KeyRef> mutable_pairs() { return pairs_; }

  const std::vector<BundleHandle>& links() const { return links_; }
  bool links_to(BundleId id) const;

  PoolKind pool() const { return allocation_.kind(); }
  const Allocation& allocation() const { return allocation_; }

  bool sorted() const { return sorted_; }
  void set_sorted(bool s) { sorted_ = s; }
  /// Keys were modified in place and differ from the resident column.
  bool dirty() const { return dirty_; }
  void set_dirty(bool d) { dirty_ = d; }
  void set_resident_column(std::size_t c) { resident_column_ = c; }

  /// Drops the pairs, links and storage.
  void clear();

 private:
  Kpa(std::size_t resident_column, std::vector<KeyRef> pairs, std::vector<BundleHandle> links,
      Allocation allocation, bool sorted);

  std::size_t resident_column_ = 0;
  std::vector<KeyRef> pairs_;
  std::vector<BundleHandle> links_;  // ascending bundle id
  Allocation allocation_;
  bool sorted_ = false;
  bool dirty_ = false;
};

/// Resolves record references of one KPA to bundles, through the KPA's own
/// links. A reference outside the links is a dangling reference.
class BundleResolver {
 public:
  explicit BundleResolver(const Kpa& kpa);
  const Bundle& operator()(BundleId id) const;

 private:
  std::vector<std::pair<BundleId, const Bundle*>> bundles_;
};

}  // namespace kpastream
