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
#include <random>

#include "kpastream/errors.hpp"
#include "kpastream/oracle.hpp"
#include "test_util.hpp"

namespace kpastream {
namespace {

using oracle::evaluate;
using oracle::OracleResult;

SchemaPtr kv() { return testing::kv_schema(); }

Pipeline keyed(Aggregate agg, WindowSpec spec = WindowSpec::fixed(1000)) {
  return Pipeline{"keyed", {kv()}, {ops::Window{spec}, ops::KeyedAggregation{0, 1, agg}}};
}

TEST(OracleTest, HandComputedSum) {
  const std::vector<Row> rows{{1, 10, 0}, {2, 5, 100}, {1, 7, 999}, {2, 1, 1000}, {3, 4, 1500}, {2, 2, 1999}};
  const OracleResult got = evaluate(keyed(Aggregate{}), {rows});
  const OracleResult expected{{0, {{1, 17, 0}, {2, 5, 0}}}, {1000, {{2, 3, 1000}, {3, 4, 1000}}}};
  EXPECT_EQ(got, expected);
}

TEST(OracleTest, HandComputedAggregates) {
  const std::vector<Row> rows{{1, 4, 0}, {1, 9, 1}, {1, 1, 2}, {1, 9, 3}, {2, 6, 4}};
  EXPECT_EQ(evaluate(keyed({AggregateKind::Avg}), {rows}).at(0), (std::vector<Row>{{1, 5, 23, 4, 0}, {2, 6, 6, 1, 0}}));
  EXPECT_EQ(evaluate(keyed({AggregateKind::Median}), {rows}).at(0), (std::vector<Row>{{1, 4, 0}, {2, 6, 0}}));
  EXPECT_EQ(evaluate(keyed({AggregateKind::DistinctCount}), {rows}).at(0), (std::vector<Row>{{1, 3, 0}, {2, 1, 0}}));
  EXPECT_EQ(evaluate(keyed({AggregateKind::TopK, 2}), {rows}).at(0),
            (std::vector<Row>{{1, 9, 0}, {1, 9, 0}, {2, 6, 0}}));
  const Pipeline all{"all", {kv()}, {ops::Window{WindowSpec::fixed(1000)}, ops::AggregateAll{1, {}}}};
  EXPECT_EQ(evaluate(all, {rows}).at(0), (std::vector<Row>{{29, 0}}));
}

TEST(OracleTest, SlidingWindowsCountEveryCoveringWindow) {
  const std::vector<Row> rows{{1, 1, 500}, {1, 1, 1500}};
  const auto got = evaluate(keyed({AggregateKind::Count}, WindowSpec::sliding(2000, 1000)), {rows});
  const OracleResult expected{{-1000, {{1, 1, window_stamp(-1000)}}}, {0, {{1, 2, 0}}}, {1000, {{1, 1, 1000}}}};
  EXPECT_EQ(got, expected);
}

TEST(OracleTest, EmptyInputGivesEmptyResult) {
  EXPECT_TRUE(evaluate(keyed(Aggregate{}), {{}}).empty());
}

TEST(OracleTest, StatelessOperatorsApplyInOrder) {
  auto table = std::make_shared<LookupTable>(std::unordered_map<Value, Value>{{1, 100}, {2, 200}});
  const Pipeline p{"ops",
                   {kv()},
                   {ops::Filter{{1, CompareOp::Ge, 5}}, ops::ExternalJoin{0, table, "x"}, ops::FlatMap{2},
                    ops::Window{WindowSpec::fixed(1000)}, ops::KeyedAggregation{0, 1, {AggregateKind::Count}}}};
  const std::vector<Row> rows{{1, 5, 0}, {2, 4, 0}, {2, 9, 10}};
  EXPECT_EQ(evaluate(p, {rows}).at(0), (std::vector<Row>{{100, 2, 0}, {200, 2, 0}}));
}

TEST(OracleTest, SampleIsRejected) {
  const Pipeline p{"s", {kv()}, {ops::Sample{}, ops::Window{WindowSpec::fixed(1000)}, ops::KeyedAggregation{}}};
  EXPECT_THROW(evaluate(p, {{{1, 1, 1}}}), ConfigError);
}

TEST(OracleTest, HandComputedTemporalJoin) {
  const Pipeline p{"j", {kv(), kv()}, {ops::Window{WindowSpec::fixed(1000)}, ops::TemporalJoin{0}}};
  const std::vector<Row> left{{1, 10, 0}, {1, 11, 1}, {2, 12, 2}, {1, 13, 1000}};
  const std::vector<Row> right{{1, 20, 5}, {3, 21, 6}, {1, 22, 1001}};
  const OracleResult expected{{0, {{1, 10, 0, 20, 5}, {1, 11, 1, 20, 5}}}, {1000, {{1, 13, 1000, 22, 1001}}}};
  EXPECT_EQ(evaluate(p, {left, right}), expected);
}

TEST(OracleTest, HandComputedWindowedFilter) {
  const auto wide = std::make_shared<Schema>(std::vector<std::string>{"key", "value", "ts", "key2"}, 2);
  const Pipeline p{"wf", {wide, wide}, {ops::Window{WindowSpec::fixed(1000)}, ops::WindowedFilter{1, 3}}};
  const std::vector<Row> values{{0, 10, 0, 0}, {0, 21, 1, 0}};
  const std::vector<Row> probes{{0, 0, 2, 14}, {0, 0, 3, 15}, {0, 0, 4, 16}, {0, 0, 1500, 1}};
  EXPECT_EQ(evaluate(p, {values, probes}), (OracleResult{{0, {{0, 0, 2, 14}}}}));
}

TEST(OracleTest, InsensitiveToInputOrder) {
  std::mt19937_64 rng(17);
  auto rows = testing::random_rows(rng, 5000, 40, 1000, 8000);
  const std::vector<Aggregate> aggs{{}, {AggregateKind::Avg}, {AggregateKind::Median}, {AggregateKind::TopK, 3},
                                    {AggregateKind::DistinctCount}};
  for (const auto& agg : aggs) {
    const auto base = evaluate(keyed(agg, WindowSpec::sliding(3000, 1000)), {rows});
    for (int trial = 0; trial < 5; ++trial) {
      std::shuffle(rows.begin(), rows.end(), rng);
      ASSERT_EQ(evaluate(keyed(agg, WindowSpec::sliding(3000, 1000)), {rows}), base);
    }
  }
}

TEST(OracleTest, DivergenceReportNamesWindowAndRow) {
  const OracleResult a{{0, {{1, 2, 0}}}, {1000, {{3, 4, 1000}}}};
  OracleResult b = a;
  EXPECT_FALSE(oracle::first_divergence(a, b).has_value());
  b[1000][0][1] = 5;
  const auto d = oracle::first_divergence(a, b);
  ASSERT_TRUE(d.has_value());
  EXPECT_NE(d->find("1000"), std::string::npos);
  b.erase(1000);
  EXPECT_TRUE(oracle::first_divergence(a, b).has_value());
}

}  // namespace
}  // namespace kpastream
