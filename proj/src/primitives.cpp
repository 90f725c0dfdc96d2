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

#include "kpastream/primitives.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "kpastream/aggregate.hpp"
#include "kpastream/errors.hpp"
#include "kpastream/kernels.hpp"

namespace kpastream::prim {

namespace {

void kpa_pass(ExecContext& ctx, PoolKind pool, std::size_t pairs, TrafficSource src) {
  ctx.memory.record_traffic(pool, pairs * sizeof(KeyRef), src);
}

void require_sorted(const Kpa& kpa, const char* what) {
  if (!kpa.sorted()) throw InvariantError(std::string(what) + ": input KPA is not sorted");
}

std::size_t sort_levels(std::size_t n) {
  const std::size_t blocks = (n + kernels::kBlockSize - 1) / kernels::kBlockSize;
  return 1 + (blocks <= 1 ? 0 : static_cast<std::size_t>(std::bit_width(blocks - 1)));
}

template <class Scan>
Kpa extract_impl(ExecContext& ctx, const BundleHandle& bundle, std::size_t key_column, Scan&& keep) {
  const Bundle& b = *bundle;
  if (!b.schema().has_column(key_column)) {
    throw ConfigError("extract: key column " + std::to_string(key_column) + " absent from schema");
  }
  std::vector<KeyRef> pairs;
  pairs.reserve(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!keep(b, i)) continue;
    pairs.push_back({b.value(i, key_column), {b.id(), static_cast<std::uint32_t>(i)}});
  }
  ctx.memory.record_traffic(PoolKind::Slow, b.size() * b.schema().row_bytes(), TrafficSource::Extract);
  const BundleId id = b.id();
  Kpa kpa = Kpa::create(ctx, key_column, std::move(pairs), false, std::span<const BundleId>(&id, 1));
  kpa_pass(ctx, kpa.pool(), kpa.size(), TrafficSource::Extract);
  return kpa;
}

// Dereference-side group fold shared by the out-of-KPA reductions.
template <class Emit>
void for_each_key_range(std::span<const KeyRef> pairs, Emit&& emit) {
  std::size_t i = 0;
  while (i < pairs.size()) {
    std::size_t j = i + 1;
    while (j < pairs.size() && pairs[j].key == pairs[i].key) ++j;
    emit(i, j);
    i = j;
  }
}

}  // namespace

Kpa extract(ExecContext& ctx, const BundleHandle& bundle, std::size_t key_column) {
  return extract_impl(ctx, bundle, key_column, [](const Bundle&, std::size_t) { return true; });
}

Kpa extract_filtered(ExecContext& ctx, const BundleHandle& bundle, std::span<const Predicate> filters,
                     std::size_t key_column) {
  for (const auto& f : filters) {
    if (!bundle->schema().has_column(f.column)) {
      throw ConfigError("extract: filter column " + std::to_string(f.column) + " absent from schema");
    }
  }
  return extract_impl(ctx, bundle, key_column, [&](const Bundle& b, std::size_t i) {
    for (const auto& f : filters) {
      if (!f.test(b.value(i, f.column))) return false;
    }
    return true;
  });
}

void key_swap(ExecContext& ctx, Kpa& kpa, std::size_t new_column, bool write_back_dirty) {
  BundleResolver resolve(kpa);
  auto pairs = kpa.mutable_pairs();
  const std::size_t home = kpa.resident_column();
  const bool write_back = write_back_dirty && kpa.dirty();
  for (auto& p : pairs) {
    const Bundle& b = resolve(p.ref.bundle);
    if (p.ref.ordinal >= b.size()) throw InvariantError("key_swap: record ordinal out of range");
    if (write_back) b.write_back(p.ref.ordinal, home, p.key);
    p.key = b.value(p.ref.ordinal, new_column);
  }
  ctx.memory.add_derefs(pairs.size());
  ctx.memory.record_traffic(PoolKind::Slow, pairs.size() * kDerefBytes, TrafficSource::KeySwap);
  if (write_back) {
    ctx.memory.record_traffic(PoolKind::Slow, pairs.size() * sizeof(Value), TrafficSource::KeySwap);
  }
  kpa_pass(ctx, kpa.pool(), pairs.size(), TrafficSource::KeySwap);
  kpa.set_dirty(false);
  kpa.set_resident_column(new_column);
  kpa.set_sorted(false);
}

void sort(ExecContext& ctx, Kpa& kpa) {
  if (!kpa.sorted()) kernels::sort_pairs(kpa.mutable_pairs(), ctx.workers);
  kpa.set_sorted(true);
  ctx.memory.record_traffic(kpa.pool(), kpa.bytes() * sort_levels(kpa.size()), TrafficSource::Sort);
}

Kpa merge(ExecContext& ctx, const Kpa& left, const Kpa& right) {
  require_sorted(left, "merge");
  require_sorted(right, "merge");
  std::vector<KeyRef> out(left.size() + right.size());
  kernels::merge_pairs(left.pairs(), right.pairs(), out, ctx.workers);
  std::vector<BundleId> links = left.link_ids();
  const auto r = right.link_ids();
  links.insert(links.end(), r.begin(), r.end());
  Kpa kpa = Kpa::create(ctx, left.resident_column(), std::move(out), true, links);
  kpa_pass(ctx, kpa.pool(), kpa.size(), TrafficSource::Merge);
  return kpa;
}

Kpa merge_all(ExecContext& ctx, std::vector<Kpa> kpas, std::size_t resident_column) {
  if (kpas.empty()) return Kpa::create(ctx, resident_column, {}, true);
  while (kpas.size() > 1) {
    std::vector<Kpa> next;
    next.reserve((kpas.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < kpas.size(); i += 2) next.push_back(merge(ctx, kpas[i], kpas[i + 1]));
    if (kpas.size() % 2 == 1) next.push_back(std::move(kpas.back()));
    kpas = std::move(next);
  }
  return std::move(kpas.front());
}

Kpa merge_all(ExecContext& ctx, std::span<const Kpa* const> kpas, std::size_t resident_column) {
  if (kpas.empty()) return Kpa::create(ctx, resident_column, {}, true);
  if (kpas.size() == 1) return copy(ctx, *kpas[0]);
  std::vector<Kpa> round;
  round.reserve((kpas.size() + 1) / 2);
  for (std::size_t i = 0; i + 1 < kpas.size(); i += 2) round.push_back(merge(ctx, *kpas[i], *kpas[i + 1]));
  if (kpas.size() % 2 == 1) round.push_back(copy(ctx, *kpas.back()));
  return merge_all(ctx, std::move(round), resident_column);
}

Kpa copy(ExecContext& ctx, const Kpa& kpa) {
  std::vector<KeyRef> pairs(kpa.pairs().begin(), kpa.pairs().end());
  Kpa out = Kpa::create(ctx, kpa.resident_column(), std::move(pairs), kpa.sorted(), kpa.link_ids());
  out.set_dirty(kpa.dirty());
  kpa_pass(ctx, out.pool(), out.size(), TrafficSource::Merge);
  return out;
}

std::vector<RefPair> join(ExecContext& ctx, const Kpa& left, const Kpa& right) {
  require_sorted(left, "join");
  require_sorted(right, "join");
  std::vector<RefPair> out;
  const auto l = left.pairs();
  const auto r = right.pairs();
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < l.size() && j < r.size()) {
    if (l[i].key < r[j].key) {
      ++i;
    } else if (r[j].key < l[i].key) {
      ++j;
    } else {
      const Value k = l[i].key;
      std::size_t ie = i;
      std::size_t je = j;
      while (ie < l.size() && l[ie].key == k) ++ie;
      while (je < r.size() && r[je].key == k) ++je;
      for (std::size_t a = i; a < ie; ++a) {
        for (std::size_t b = j; b < je; ++b) out.emplace_back(l[a].ref, r[b].ref);
      }
      i = ie;
      j = je;
    }
  }
  kpa_pass(ctx, left.pool(), left.size(), TrafficSource::Join);
  kpa_pass(ctx, right.pool(), right.size(), TrafficSource::Join);
  return out;
}

std::vector<std::pair<std::int64_t, Kpa>> partition(ExecContext& ctx, const Kpa& kpa, Value width) {
  if (width == 0) throw ConfigError("partition: key range width must be positive");
  auto parts = kernels::partition_pairs(kpa.pairs(), width, ctx.workers);
  kpa_pass(ctx, kpa.pool(), kpa.size(), TrafficSource::Partition);
  std::vector<std::pair<std::int64_t, Kpa>> out;
  out.reserve(parts.ids.size());
  for (std::size_t i = 0; i < parts.ids.size(); ++i) {
    Kpa part = Kpa::create(ctx, kpa.resident_column(), std::move(parts.parts[i]), kpa.sorted());
    part.set_dirty(kpa.dirty());
    kpa_pass(ctx, part.pool(), part.size(), TrafficSource::Partition);
    out.emplace_back(parts.ids[i], std::move(part));
  }
  return out;
}

Kpa selection(ExecContext& ctx, const Kpa& kpa, const std::function<bool(Value)>& keep) {
  return selection_pairs(ctx, kpa, [&](const KeyRef& p) { return keep(p.key); });
}

Kpa selection_pairs(ExecContext& ctx, const Kpa& kpa, const std::function<bool(const KeyRef&)>& keep) {
  auto pairs = kernels::select_pairs(kpa.pairs(), keep, ctx.workers);
  kpa_pass(ctx, kpa.pool(), kpa.size(), TrafficSource::Selection);
  Kpa out = Kpa::create(ctx, kpa.resident_column(), std::move(pairs), kpa.sorted(), kpa.link_ids());
  out.set_dirty(kpa.dirty());
  kpa_pass(ctx, out.pool(), out.size(), TrafficSource::Selection);
  return out;
}

Kpa reduce_in_kpa(ExecContext& ctx, const Kpa& kpa, const std::function<Value(Value)>& group_of,
                  const std::function<KeyRef(const KeyRef&, const KeyRef&)>& fold) {
  std::vector<KeyRef> out;
  const auto pairs = kpa.pairs();
  std::size_t i = 0;
  while (i < pairs.size()) {
    const Value g = group_of(pairs[i].key);
    KeyRef acc = pairs[i];
    std::size_t j = i + 1;
    for (; j < pairs.size() && group_of(pairs[j].key) == g; ++j) acc = fold(acc, pairs[j]);
    out.push_back(acc);
    i = j;
  }
  kpa_pass(ctx, kpa.pool(), kpa.size(), TrafficSource::ReduceInKpa);
  Kpa r = Kpa::create(ctx, kpa.resident_column(), std::move(out), kpa.sorted());
  kpa_pass(ctx, r.pool(), r.size(), TrafficSource::ReduceInKpa);
  return r;
}

BundleHandle reduce_out_of_kpa(ExecContext& ctx, const Kpa& kpa, std::size_t value_column, const Aggregate& agg,
                               Value stamp, const SchemaPtr& out_schema) {
  require_sorted(kpa, "reduce_out_of_kpa");
  BundleResolver resolve(kpa);
  auto out = ctx.memory.new_bundle(out_schema);
  const auto pairs = kpa.pairs();
  std::vector<Value> values;
  for_each_key_range(pairs, [&](std::size_t lo, std::size_t hi) {
    values.clear();
    for (std::size_t i = lo; i < hi; ++i) {
      values.push_back(resolve(pairs[i].ref.bundle).value(pairs[i].ref.ordinal, value_column));
    }
    fold_group(agg, pairs[lo].key, values, stamp, *out);
  });
  ctx.memory.add_derefs(pairs.size());
  ctx.memory.record_traffic(PoolKind::Slow, pairs.size() * kDerefBytes + out->bytes(),
                            TrafficSource::ReduceOutOfKpa);
  kpa_pass(ctx, kpa.pool(), pairs.size(), TrafficSource::ReduceOutOfKpa);
  return ctx.memory.register_bundle(std::move(out));
}

BundleHandle combine_partials(ExecContext& ctx, const Kpa& kpa, const Aggregate& agg, Value stamp,
                              const SchemaPtr& out_schema) {
  require_sorted(kpa, "combine_partials");
  BundleResolver resolve(kpa);
  auto out = ctx.memory.new_bundle(out_schema);
  const auto pairs = kpa.pairs();
  std::vector<Value> values;
  for_each_key_range(pairs, [&](std::size_t lo, std::size_t hi) {
    const Value key = pairs[lo].key;
    values.clear();
    if (agg.kind == AggregateKind::Avg) {
      SumCount sc;
      for (std::size_t i = lo; i < hi; ++i) {
        const Bundle& b = resolve(pairs[i].ref.bundle);
        sc.merge({b.value(pairs[i].ref.ordinal, 2), b.value(pairs[i].ref.ordinal, 3)});
      }
      const std::array<Value, 5> row{key, sc.count == 0 ? 0 : sc.sum / sc.count, sc.sum, sc.count, stamp};
      out->append(row);
      return;
    }
    for (std::size_t i = lo; i < hi; ++i) {
      values.push_back(resolve(pairs[i].ref.bundle).value(pairs[i].ref.ordinal, 1));
    }
    switch (agg.kind) {
      case AggregateKind::Sum:
      case AggregateKind::Count: fold_group({AggregateKind::Sum}, key, values, stamp, *out); break;
      case AggregateKind::TopK: fold_group(agg, key, values, stamp, *out); break;
      default: throw InvariantError("combine_partials: aggregate " + agg.name() + " has no partial form");
    }
  });
  ctx.memory.add_derefs(pairs.size());
  ctx.memory.record_traffic(PoolKind::Slow, pairs.size() * kDerefBytes + out->bytes(),
                            TrafficSource::ReduceOutOfKpa);
  kpa_pass(ctx, kpa.pool(), pairs.size(), TrafficSource::ReduceOutOfKpa);
  return ctx.memory.register_bundle(std::move(out));
}

BundleHandle materialize(ExecContext& ctx, const Kpa& kpa, const SchemaPtr& schema) {
  BundleResolver resolve(kpa);
  auto out = ctx.memory.new_bundle(schema);
  out->reserve(kpa.size());
  Row row(schema->column_count());
  for (const auto& p : kpa.pairs()) {
    const Bundle& b = resolve(p.ref.bundle);
    if (p.ref.ordinal >= b.size()) throw InvariantError("materialize: record ordinal out of range");
    b.copy_record(p.ref.ordinal, row);
    out->append(row);
  }
  ctx.memory.add_derefs(kpa.size());
  ctx.memory.record_traffic(PoolKind::Slow, 2 * out->bytes(), TrafficSource::Materialize);
  kpa_pass(ctx, kpa.pool(), kpa.size(), TrafficSource::Materialize);
  return ctx.memory.register_bundle(std::move(out));
}

BundleHandle materialize(ExecContext& ctx, Kpa&& kpa, const SchemaPtr& schema) {
  BundleHandle h = materialize(ctx, static_cast<const Kpa&>(kpa), schema);
  kpa.clear();
  return h;
}

void external_join(ExecContext& ctx, Kpa& kpa, const LookupTable& table) {
  for (auto& p : kpa.mutable_pairs()) p.key = table.at(p.key);
  kpa.set_dirty(true);
  kpa.set_sorted(false);
  ctx.memory.record_traffic(kpa.pool(), 2 * kpa.bytes(), TrafficSource::ExternalJoin);
}

namespace {

class OpenTable {
 public:
  explicit OpenTable(std::size_t expected) {
    std::size_t slots = 16;
    while (slots < expected * 2) slots <<= 1;
    keys_.assign(slots, 0);
    used_.assign(slots, 0);
    groups_.assign(slots, 0);
  }

  std::size_t slots() const { return keys_.size(); }
  std::size_t resizes() const { return resizes_; }

  std::size_t group_of(Value key) {
    if ((size_ + 1) * 10 > keys_.size() * 7) grow();
    std::size_t i = probe(key);
    if (!used_[i]) {
      used_[i] = 1;
      keys_[i] = key;
      groups_[i] = size_++;
    }
    return groups_[i];
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return x;
  }

  std::size_t probe(Value key) const {
    const std::size_t mask = keys_.size() - 1;
    std::size_t i = mix(key) & mask;
    while (used_[i] && keys_[i] != key) i = (i + 1) & mask;
    return i;
  }

  void grow() {
    std::vector<Value> keys = std::move(keys_);
    std::vector<unsigned char> used = std::move(used_);
    std::vector<std::size_t> groups = std::move(groups_);
    keys_.assign(keys.size() * 2, 0);
    used_.assign(keys.size() * 2, 0);
    groups_.assign(keys.size() * 2, 0);
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (!used[i]) continue;
      const std::size_t j = probe(keys[i]);
      used_[j] = 1;
      keys_[j] = keys[i];
      groups_[j] = groups[i];
    }
    ++resizes_;
  }

  std::vector<Value> keys_;
  std::vector<unsigned char> used_;
  std::vector<std::size_t> groups_;
  std::size_t size_ = 0;
  std::size_t resizes_ = 0;
};

}  // namespace

BundleHandle hash_group_by(ExecContext& ctx, std::span<const BundleHandle> bundles, std::size_t key_column,
                           std::size_t value_column, const Aggregate& agg, Value stamp,
                           const SchemaPtr& out_schema, std::size_t expected_keys, HashGroupStats* stats) {
  OpenTable table(expected_keys);
  const std::size_t initial = table.slots();
  std::vector<Value> group_keys;
  std::vector<std::vector<Value>> group_values;
  std::size_t rows = 0;
  for (const auto& h : bundles) {
    const Bundle& b = *h;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const Value key = b.value(i, key_column);
      const std::size_t g = table.group_of(key);
      if (g == group_keys.size()) {
        group_keys.push_back(key);
        group_values.emplace_back();
      }
      group_values[g].push_back(b.value(i, value_column));
    }
    rows += b.size();
    ctx.memory.record_traffic(PoolKind::Slow, b.size() * b.schema().row_bytes(), TrafficSource::HashGroupBy);
  }
  ctx.memory.record_traffic(PoolKind::Slow, rows * kDerefBytes, TrafficSource::HashGroupBy);
  std::vector<std::size_t> order(group_keys.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return group_keys[a] < group_keys[b]; });
  auto out = ctx.memory.new_bundle(out_schema);
  for (std::size_t g : order) fold_group(agg, group_keys[g], group_values[g], stamp, *out);
  if (stats) *stats = {initial, table.slots(), table.resizes()};
  return ctx.memory.register_bundle(std::move(out));
}

BundleHandle row_group(ExecContext& ctx, std::vector<Row> rows, std::size_t key_column, std::size_t value_column,
                       const Aggregate& agg, Value stamp, const SchemaPtr& out_schema) {
  std::stable_sort(rows.begin(), rows.end(),
                   [&](const Row& a, const Row& b) { return a[key_column] < b[key_column]; });
  auto out = ctx.memory.new_bundle(out_schema);
  std::vector<Value> values;
  std::size_t bytes = 0;
  std::size_t i = 0;
  while (i < rows.size()) {
    const Value key = rows[i][key_column];
    values.clear();
    std::size_t j = i;
    for (; j < rows.size() && rows[j][key_column] == key; ++j) values.push_back(rows[j][value_column]);
    fold_group(agg, key, values, stamp, *out);
    i = j;
  }
  for (const auto& r : rows) bytes += r.size() * sizeof(Value);
  ctx.memory.record_traffic(PoolKind::Slow, bytes * (1 + sort_levels(rows.size())), TrafficSource::RowGroup);
  return ctx.memory.register_bundle(std::move(out));
}

}  // namespace kpastream::prim
