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

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <unordered_map>

#include "kpastream/errors.hpp"
#include "kpastream/primitives.hpp"
#include "test_util.hpp"

namespace kpastream {
namespace {

using testing::kv_schema;
using testing::make_bundle;
using testing::random_rows;

class PrimitivesTest : public ::testing::Test {
 protected:
  HybridMemory mem{testing::roomy_pool()};
  ExecContext ctx{mem, ImpactTag::High, 2};
  std::mt19937_64 rng{123};

  Kpa sorted_kpa(const BundleHandle& b, std::size_t col) {
    Kpa k = prim::extract(ctx, b, col);
    prim::sort(ctx, k);
    return k;
  }
};

std::vector<std::pair<Value, Value>> key_value_pairs(const HybridMemory& mem, std::span<const KeyRef> pairs,
                                                     std::size_t col) {
  std::vector<std::pair<Value, Value>> out;
  for (const auto& p : pairs) out.emplace_back(p.key, mem.bundle(p.ref.bundle).value(p.ref.ordinal, col));
  return out;
}

TEST_F(PrimitivesTest, ExtractProjectsColumn) {
  const auto rows = random_rows(rng, 10000, 500, 1000, 5000);
  auto b = make_bundle(mem, kv_schema(), rows);
  Kpa k = prim::extract(ctx, b, 1);
  std::multiset<Value> expected;
  for (const auto& r : rows) expected.insert(r[1]);
  std::multiset<Value> got;
  for (const auto& p : k.pairs()) got.insert(p.key);
  EXPECT_EQ(got, expected);
  EXPECT_TRUE(k.links_to(b.id()));
  EXPECT_EQ(mem.refcount(b.id()), 2);
  EXPECT_EQ(k.resident_column(), 1u);
}

TEST_F(PrimitivesTest, ExtractFilteredAppliesAllPredicates) {
  const auto rows = random_rows(rng, 5000, 100, 100, 5000);
  auto b = make_bundle(mem, kv_schema(), rows);
  const std::vector<Predicate> preds{{0, CompareOp::Lt, 50}, {1, CompareOp::Ge, 10}};
  Kpa k = prim::extract_filtered(ctx, b, preds, 2);
  std::vector<Value> expected;
  for (const auto& r : rows) {
    if (r[0] < 50 && r[1] >= 10) expected.push_back(r[2]);
  }
  std::vector<Value> got;
  for (const auto& p : k.pairs()) got.push_back(p.key);
  EXPECT_EQ(got, expected);
}

TEST_F(PrimitivesTest, SortIsStableAndWorkerInvariant) {
  for (int trial = 0; trial < 1000; ++trial) {
    const auto rows = random_rows(rng, 1 + rng() % 300, 1 + rng() % 40, 100, 1000);
    auto b = make_bundle(mem, kv_schema(), rows);
    Kpa k = prim::extract(ctx, b, 0);
    std::vector<KeyRef> expected(k.pairs().begin(), k.pairs().end());
    std::stable_sort(expected.begin(), expected.end(), [](auto& x, auto& y) { return x.key < y.key; });
    ctx.workers = 1 + static_cast<int>(trial % 8);
    prim::sort(ctx, k);
    ASSERT_TRUE(k.sorted());
    ASSERT_TRUE(std::equal(expected.begin(), expected.end(), k.pairs().begin(), k.pairs().end()));
  }
}

TEST_F(PrimitivesTest, MergeEqualsSortedConcatAndRejectsUnsorted) {
  for (int trial = 0; trial < 1000; ++trial) {
    auto b1 = make_bundle(mem, kv_schema(), random_rows(rng, 1 + rng() % 100, 30, 100, 1000));
    auto b2 = make_bundle(mem, kv_schema(), random_rows(rng, 1 + rng() % 100, 30, 100, 1000));
    Kpa l = sorted_kpa(b1, 0);
    Kpa r = sorted_kpa(b2, 0);
    std::vector<KeyRef> expected(l.pairs().begin(), l.pairs().end());
    expected.insert(expected.end(), r.pairs().begin(), r.pairs().end());
    std::stable_sort(expected.begin(), expected.end(), [](auto& x, auto& y) { return x.key < y.key; });
    Kpa m = prim::merge(ctx, l, r);
    ASSERT_TRUE(std::equal(expected.begin(), expected.end(), m.pairs().begin(), m.pairs().end()));
    ASSERT_TRUE(m.links_to(b1.id()) && m.links_to(b2.id()));
  }
  auto b = make_bundle(mem, kv_schema(), {{2, 0, 0}, {1, 0, 0}});
  Kpa unsorted = prim::extract(ctx, b, 0);
  Kpa sorted = sorted_kpa(b, 0);
  EXPECT_THROW(prim::merge(ctx, unsorted, sorted), InvariantError);
}

TEST_F(PrimitivesTest, JoinMatchesNestedLoop) {
  {
    auto lb = make_bundle(mem, kv_schema(), {{2, 1, 0}, {2, 2, 0}, {3, 3, 0}});
    auto rb = make_bundle(mem, kv_schema(), {{2, 9, 0}, {4, 9, 0}});
    EXPECT_EQ(prim::join(ctx, sorted_kpa(lb, 0), sorted_kpa(rb, 0)).size(), 2u);
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const auto lrows = random_rows(rng, rng() % 60, 20, 100, 1000);
    const auto rrows = random_rows(rng, rng() % 60, 20, 100, 1000);
    if (lrows.empty() || rrows.empty()) continue;
    auto lb = make_bundle(mem, kv_schema(), lrows);
    auto rb = make_bundle(mem, kv_schema(), rrows);
    std::multiset<std::pair<std::uint32_t, std::uint32_t>> expected;
    for (std::uint32_t i = 0; i < lrows.size(); ++i) {
      for (std::uint32_t j = 0; j < rrows.size(); ++j) {
        if (lrows[i][0] == rrows[j][0]) expected.emplace(i, j);
      }
    }
    std::multiset<std::pair<std::uint32_t, std::uint32_t>> got;
    for (const auto& [l, r] : prim::join(ctx, sorted_kpa(lb, 0), sorted_kpa(rb, 0))) {
      ASSERT_EQ(l.bundle, lb.id());
      ASSERT_EQ(r.bundle, rb.id());
      got.emplace(l.ordinal, r.ordinal);
    }
    ASSERT_EQ(got, expected);
  }
}

TEST_F(PrimitivesTest, PartitionMatchesWindowAssignment) {
  const auto spec = WindowSpec::fixed(1000);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto rows = random_rows(rng, 1 + rng() % 100, 50, 100, 10000);
    auto b = make_bundle(mem, kv_schema(), rows);
    Kpa k = prim::extract(ctx, b, 2);
    std::map<std::int64_t, std::size_t> expected;
    for (const auto& r : rows) ++expected[assign_windows(static_cast<EventTime>(r[2]), spec).front() / 1000];
    const auto parts = prim::partition(ctx, k, 1000);
    ASSERT_EQ(parts.size(), expected.size());
    for (const auto& [id, part] : parts) {
      ASSERT_EQ(part.size(), expected.at(id));
      for (const auto& p : part.pairs()) ASSERT_EQ(static_cast<std::int64_t>(p.key / 1000), id);
    }
  }
  auto b = make_bundle(mem, kv_schema(), {{1, 1, 1}});
  Kpa k = prim::extract(ctx, b, 2);
  EXPECT_THROW(prim::partition(ctx, k, 0), ConfigError);
}

TEST_F(PrimitivesTest, PartitionLinksOnlyReferencedBundles) {
  auto b1 = make_bundle(mem, kv_schema(), {{1, 1, 100}});
  auto b2 = make_bundle(mem, kv_schema(), {{1, 1, 2100}});
  Kpa l = sorted_kpa(b1, 2);
  Kpa r = sorted_kpa(b2, 2);
  Kpa m = prim::merge(ctx, l, r);
  const auto parts = prim::partition(ctx, m, 1000);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_TRUE(parts[0].second.links_to(b1.id()));
  EXPECT_FALSE(parts[0].second.links_to(b2.id()));
  EXPECT_TRUE(parts[1].second.links_to(b2.id()));
}

TEST_F(PrimitivesTest, SelectionMatchesScanFilter) {
  for (int trial = 0; trial < 1000; ++trial) {
    const auto rows = random_rows(rng, rng() % 200 + 1, 1000, 100, 1000);
    auto b = make_bundle(mem, kv_schema(), rows);
    Kpa k = prim::extract(ctx, b, 0);
    const Value threshold = rng() % 1000;
    std::vector<Value> expected;
    for (const auto& r : rows) {
      if (r[0] < threshold) expected.push_back(r[0]);
    }
    Kpa s = prim::selection(ctx, k, [&](Value v) { return v < threshold; });
    std::vector<Value> got;
    for (const auto& p : s.pairs()) got.push_back(p.key);
    ASSERT_EQ(got, expected);
  }
}

TEST_F(PrimitivesTest, ReduceInKpaMinPerKey) {
  for (int trial = 0; trial < 1000; ++trial) {
    const auto rows = random_rows(rng, rng() % 200 + 1, 20, 1000, 1000);
    auto b = make_bundle(mem, kv_schema(), rows);
    Kpa k = sorted_kpa(b, 0);
    std::map<Value, Value> expected;
    for (const auto& r : rows) {
      auto [it, fresh] = expected.emplace(r[0], r[1]);
      if (!fresh) it->second = std::min(it->second, r[1]);
    }
    const Bundle& raw = *b;
    Kpa red = prim::reduce_in_kpa(
        ctx, k, [](Value key) { return key; },
        [&](const KeyRef& acc, const KeyRef& next) {
          return raw.value(next.ref.ordinal, 1) < raw.value(acc.ref.ordinal, 1) ? next : acc;
        });
    ASSERT_EQ(red.size(), expected.size());
    for (const auto& p : red.pairs()) ASSERT_EQ(raw.value(p.ref.ordinal, 1), expected.at(p.key));
  }
}

std::map<Value, std::vector<Value>> groups_of(const std::vector<Row>& rows) {
  std::map<Value, std::vector<Value>> g;
  for (const auto& r : rows) g[r[0]].push_back(r[1]);
  return g;
}

TEST_F(PrimitivesTest, MedianPerKeyIsLowerMedian) {
  const auto schema = std::make_shared<Schema>(std::vector<std::string>{"key", "median", "window"}, 2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto rows = random_rows(rng, rng() % 300 + 1, 30, 1000, 1000);
    auto b = make_bundle(mem, kv_schema(), rows);
    Kpa k = sorted_kpa(b, 0);
    auto out = prim::reduce_out_of_kpa(ctx, k, 1, Aggregate{AggregateKind::Median}, 7, schema);
    auto g = groups_of(rows);
    ASSERT_EQ(out->size(), g.size());
    std::size_t i = 0;
    for (auto& [key, vals] : g) {
      std::sort(vals.begin(), vals.end());
      ASSERT_EQ(out->value(i, 0), key);
      ASSERT_EQ(out->value(i, 1), vals[(vals.size() - 1) / 2]);
      ASSERT_EQ(out->value(i, 2), 7u);
      ++i;
    }
  }
  auto b = make_bundle(mem, kv_schema(), {{1, 5, 0}, {1, 1, 0}, {1, 9, 0}, {1, 3, 0}});
  auto out = prim::reduce_out_of_kpa(ctx, sorted_kpa(b, 0), 1, Aggregate{AggregateKind::Median}, 0, schema);
  EXPECT_EQ(out->value(0, 1), 3u);
}

TEST_F(PrimitivesTest, ReduceOutOfKpaAggregates) {
  const auto rows = random_rows(rng, 3000, 50, 1000, 1000);
  auto b = make_bundle(mem, kv_schema(), rows);
  Kpa k = sorted_kpa(b, 0);
  auto g = groups_of(rows);
  const auto avg_schema =
      std::make_shared<Schema>(std::vector<std::string>{"key", "mean", "sum", "count", "window"}, 4);
  auto avg = prim::reduce_out_of_kpa(ctx, k, 1, Aggregate{AggregateKind::Avg}, 0, avg_schema);
  const auto topk_schema = std::make_shared<Schema>(std::vector<std::string>{"key", "value", "window"}, 2);
  auto top = prim::reduce_out_of_kpa(ctx, k, 1, Aggregate{AggregateKind::TopK, 3}, 0, topk_schema);
  auto distinct = prim::reduce_out_of_kpa(ctx, k, 1, Aggregate{AggregateKind::DistinctCount}, 0, topk_schema);
  std::size_t i = 0;
  std::size_t t = 0;
  for (auto& [key, vals] : g) {
    Value sum = 0;
    for (Value v : vals) sum += v;
    EXPECT_EQ(avg->value(i, 1), sum / vals.size());
    EXPECT_EQ(avg->value(i, 2), sum);
    EXPECT_EQ(avg->value(i, 3), vals.size());
    EXPECT_EQ(distinct->value(i, 1), std::set<Value>(vals.begin(), vals.end()).size());
    std::sort(vals.rbegin(), vals.rend());
    for (std::size_t j = 0; j < std::min<std::size_t>(3, vals.size()); ++j, ++t) {
      EXPECT_EQ(top->value(t, 0), key);
      EXPECT_EQ(top->value(t, 1), vals[j]);
    }
    ++i;
  }
  EXPECT_EQ(t, top->size());
  Kpa unsorted = prim::extract(ctx, b, 0);
  EXPECT_THROW(prim::reduce_out_of_kpa(ctx, unsorted, 1, Aggregate{}, 0, topk_schema), InvariantError);
}

TEST_F(PrimitivesTest, KeySwapAndMaterializePreserveRecords) {
  for (int trial = 0; trial < 1000; ++trial) {
    const auto rows = random_rows(rng, rng() % 100 + 1, 10, 10, 100);
    auto b = make_bundle(mem, kv_schema(), rows);
    Kpa k = prim::extract(ctx, b, 0);
    const int steps = 1 + static_cast<int>(rng() % 4);
    for (int s = 0; s < steps; ++s) {
      if (rng() % 2) {
        prim::key_swap(ctx, k, rng() % 3, false);
      } else {
        prim::sort(ctx, k);
      }
    }
    for (const auto& [key, v] : key_value_pairs(mem, k.pairs(), k.resident_column())) ASSERT_EQ(key, v);
    auto out = prim::materialize(ctx, k, kv_schema());
    std::multiset<Row> expected(rows.begin(), rows.end());
    std::multiset<Row> got;
    for (std::size_t i = 0; i < out->size(); ++i) {
      auto rec = out->record(i);
      got.emplace(rec.begin(), rec.end());
    }
    ASSERT_EQ(got, expected);
  }
}

TEST_F(PrimitivesTest, ExternalJoinWriteBack) {
  auto b = make_bundle(mem, kv_schema(), {{1, 0, 5}, {2, 0, 6}});
  auto table = LookupTable(std::unordered_map<Value, Value>{{1, 10}, {2, 20}});
  Kpa k = prim::extract(ctx, b, 0);
  prim::external_join(ctx, k, table);
  EXPECT_TRUE(k.dirty());
  EXPECT_FALSE(k.sorted());
  prim::key_swap(ctx, k, 2, true);
  EXPECT_FALSE(k.dirty());
  EXPECT_EQ(b->value(0, 0), 10u);
  EXPECT_EQ(b->value(1, 0), 20u);
  EXPECT_EQ(b->record(0)[0], 1u);
  auto missing = LookupTable(std::unordered_map<Value, Value>{{1, 10}});
  Kpa k2 = prim::extract(ctx, b, 2);
  prim::key_swap(ctx, k2, 0, false);
  EXPECT_NO_THROW(prim::external_join(ctx, k2, LookupTable(std::unordered_map<Value, Value>{{10, 1}, {20, 2}})));
  Kpa k3 = prim::extract(ctx, make_bundle(mem, kv_schema(), {{7, 0, 0}}), 0);
  try {
    prim::external_join(ctx, k3, missing);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find('7'), std::string::npos);
  }
}

TEST_F(PrimitivesTest, HashGroupByMatchesSortPath) {
  const auto rows = random_rows(rng, 100000, 5000, 1000000, 1000);
  std::vector<BundleHandle> bundles;
  for (std::size_t i = 0; i < rows.size(); i += 10000) {
    bundles.push_back(make_bundle(mem, kv_schema(),
                                  std::vector<Row>(rows.begin() + static_cast<std::ptrdiff_t>(i),
                                                   rows.begin() + static_cast<std::ptrdiff_t>(i + 10000))));
  }
  const auto schema = std::make_shared<Schema>(std::vector<std::string>{"key", "mean", "sum", "count", "window"}, 4);
  for (auto kind : {AggregateKind::Sum, AggregateKind::Avg, AggregateKind::Median, AggregateKind::DistinctCount}) {
    const Aggregate agg{kind};
    const auto out_schema = kind == AggregateKind::Avg ? schema
                                                       : std::make_shared<Schema>(
                                                             std::vector<std::string>{"key", "v", "window"}, 2);
    prim::HashGroupStats stats;
    auto hashed = prim::hash_group_by(ctx, bundles, 0, 1, agg, 3, out_schema, 16, &stats);
    EXPECT_GT(stats.resizes, 0u);
    std::vector<Kpa> parts;
    for (const auto& b : bundles) parts.push_back(sorted_kpa(b, 0));
    Kpa all = prim::merge_all(ctx, std::move(parts), 0);
    auto sorted = prim::reduce_out_of_kpa(ctx, all, 1, agg, 3, out_schema);
    ASSERT_EQ(hashed->size(), sorted->size());
    for (std::size_t i = 0; i < hashed->size(); ++i) {
      for (std::size_t c = 0; c < out_schema->column_count(); ++c) {
        ASSERT_EQ(hashed->value(i, c), sorted->value(i, c));
      }
    }
  }
}

TEST_F(PrimitivesTest, GroupingPrimitivesNeverDereference) {
  const auto rows = random_rows(rng, 20000, 100, 1000, 5000);
  auto b1 = make_bundle(mem, kv_schema(), rows);
  auto b2 = make_bundle(mem, kv_schema(), rows);
  Kpa a = prim::extract(ctx, b1, 0);
  Kpa c = prim::extract(ctx, b2, 0);
  const auto before = mem.deref_count();
  prim::sort(ctx, a);
  prim::sort(ctx, c);
  Kpa m = prim::merge(ctx, a, c);
  auto joined = prim::join(ctx, a, c);
  auto parts = prim::partition(ctx, m, 10);
  Kpa s = prim::selection(ctx, m, [](Value v) { return v % 2 == 0; });
  std::vector<Kpa> many;
  many.push_back(prim::copy(ctx, a));
  many.push_back(prim::copy(ctx, c));
  Kpa all = prim::merge_all(ctx, std::move(many), 0);
  Kpa red = prim::reduce_in_kpa(
      ctx, all, [](Value k) { return k; }, [](const KeyRef& acc, const KeyRef&) { return acc; });
  EXPECT_EQ(mem.deref_count(), before);
  EXPECT_GT(joined.size(), 0u);

  prim::key_swap(ctx, s, 1, false);
  EXPECT_EQ(mem.deref_count(), before + s.size());
  const auto after_swap = mem.deref_count();
  prim::sort(ctx, red);
  const auto schema = std::make_shared<Schema>(std::vector<std::string>{"key", "sum", "window"}, 2);
  prim::reduce_out_of_kpa(ctx, red, 1, Aggregate{}, 0, schema);
  EXPECT_EQ(mem.deref_count(), after_swap + red.size());
  prim::materialize(ctx, a, kv_schema());
  EXPECT_EQ(mem.deref_count(), after_swap + red.size() + a.size());
}

TEST_F(PrimitivesTest, KpaReleasesBundlesOnDestruction) {
  BundleId id;
  {
    auto b = make_bundle(mem, kv_schema(), {{1, 2, 3}, {4, 5, 6}});
    id = b.id();
    Kpa k = prim::extract(ctx, b, 0);
    b.reset();
    EXPECT_EQ(mem.refcount(id), 1);
    Kpa c = prim::copy(ctx, k);
    EXPECT_EQ(mem.refcount(id), 2);
  }
  EXPECT_EQ(mem.refcount(id), -1);
  EXPECT_EQ(mem.live_bundles(), 0u);
}

TEST_F(PrimitivesTest, RowGroupMatchesSortPath) {
  const auto rows = random_rows(rng, 5000, 200, 1000, 1000);
  auto b = make_bundle(mem, kv_schema(), rows);
  const auto schema = std::make_shared<Schema>(std::vector<std::string>{"key", "v", "window"}, 2);
  for (auto kind : {AggregateKind::Sum, AggregateKind::Median, AggregateKind::Count}) {
    auto by_rows = prim::row_group(ctx, rows, 0, 1, Aggregate{kind}, 9, schema);
    auto by_kpa = prim::reduce_out_of_kpa(ctx, sorted_kpa(b, 0), 1, Aggregate{kind}, 9, schema);
    ASSERT_EQ(by_rows->size(), by_kpa->size());
    for (std::size_t i = 0; i < by_rows->size(); ++i) {
      for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(by_rows->value(i, c), by_kpa->value(i, c));
    }
  }
}

}  // namespace
}  // namespace kpastream
