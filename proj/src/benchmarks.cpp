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

#include "kpastream/benchmarks.hpp"

#include <algorithm>

#include "kpastream/errors.hpp"

namespace kpastream::bench {
namespace {

SchemaPtr kv_schema() { return std::make_shared<Schema>(std::vector<std::string>{"key", "value", "ts"}, 2); }

SchemaPtr filter_schema() {
  return std::make_shared<Schema>(std::vector<std::string>{"key", "value", "ts", "key2"}, 2);
}

ops::KeyedAggregation keyed(AggregateKind kind, std::size_t k = 1) {
  ops::KeyedAggregation a;
  a.key_column = 0;
  a.value_column = 1;
  a.aggregate = Aggregate{kind, k};
  return a;
}

}  // namespace

bool is_benchmark(std::string_view name) {
  return std::find(kBenchmarkNames.begin(), kBenchmarkNames.end(), name) != kBenchmarkNames.end();
}

Value default_key_cardinality(std::string_view name, std::size_t records_per_window) {
  if (name == "temporal_join") return std::max<Value>(1, records_per_window);
  return 1000;
}

Benchmark make_benchmark(std::string_view name, const WorkloadParams& params) {
  if (!is_benchmark(name)) throw ConfigError("unknown pipeline '" + std::string(name) + "'");
  Benchmark b;
  Pipeline& p = b.pipeline;
  p.name = std::string(name);
  p.target_delay_ms = params.target_delay_ms;
  const ops::Window window{WindowSpec::fixed(params.window_ms)};

  SourceConfig base;
  base.seed = params.seed;
  base.records_per_window = params.records_per_window;
  base.window_length_ms = params.window_ms;
  base.num_windows = params.num_windows;
  base.bundle_size = params.records_per_window == 0 ? std::max<std::size_t>(1, params.bundle_size)
                                                    : std::min(params.bundle_size, params.records_per_window);
  base.disorder_bound_ms = params.disorder_ms;
  base.key_cardinality =
      params.key_cardinality ? params.key_cardinality : default_key_cardinality(name, params.records_per_window);
  base.rate_schedule = params.rate_schedule;
  base.withhold_from = params.withhold_from;
  base.withhold_count = params.withhold_count;

  if (name == "ysb") {
    p.inputs = {ysb_schema()};
    ops::ExternalJoin join;
    join.column = kYsbAdId;
    join.table = ysb_campaign_table(params.ysb, params.seed);
    join.output_name = "camp_id";
    ops::KeyedAggregation count = keyed(AggregateKind::Count);
    count.key_column = kYsbAdId;
    count.value_column = kYsbEventType;
    p.operators = {ops::Filter{Predicate{kYsbAdType, CompareOp::Eq, 0}}, join, window, count};
    base.schema = ysb_schema();
    b.ysb = true;
    b.ysb_config = params.ysb;
    b.sources = {base};
  } else if (name == "temporal_join" || name == "windowed_filter") {
    const bool join = name == "temporal_join";
    const SchemaPtr schema = join ? kv_schema() : filter_schema();
    p.inputs = {schema, schema};
    if (join) {
      p.operators = {window, ops::TemporalJoin{0}};
    } else {
      p.operators = {window, ops::WindowedFilter{1, 3}};
    }
    base.schema = schema;
    if (!join) {
      base.roles = {ColumnRole::Key, ColumnRole::Value, ColumnRole::Timestamp, ColumnRole::Key2};
      base.key2_cardinality = base.value_max;
    }
    SourceConfig second = base;
    second.seed = params.seed ^ 0x9e3779b97f4a7c15ULL;
    b.sources = {base, second};
  } else {
    p.inputs = {kv_schema()};
    base.schema = kv_schema();
    b.sources = {base};
    if (name == "topk_per_key") {
      p.operators = {window, keyed(AggregateKind::TopK, 3)};
    } else if (name == "sum_per_key") {
      p.operators = {window, keyed(AggregateKind::Sum)};
    } else if (name == "median_per_key") {
      p.operators = {window, keyed(AggregateKind::Median)};
    } else if (name == "avg_per_key") {
      p.operators = {window, keyed(AggregateKind::Avg)};
    } else if (name == "distinct_per_key") {
      p.operators = {window, keyed(AggregateKind::DistinctCount)};
    } else {
      p.operators = {window, ops::AggregateAll{1, Aggregate{AggregateKind::Avg}}};
    }
  }
  for (const auto& s : b.sources) s.validate();
  p.validate();
  return b;
}

std::unique_ptr<Source> make_source(const Benchmark& benchmark) {
  auto one = [&](std::size_t i) -> std::unique_ptr<Source> {
    if (benchmark.ysb) {
      return std::make_unique<GeneratedSource>(benchmark.sources[i], benchmark.ysb_config, static_cast<int>(i));
    }
    return std::make_unique<GeneratedSource>(benchmark.sources[i], static_cast<int>(i));
  };
  if (benchmark.sources.size() == 1) return one(0);
  std::vector<std::unique_ptr<Source>> parts;
  for (std::size_t i = 0; i < benchmark.sources.size(); ++i) parts.push_back(one(i));
  return std::make_unique<InterleavedSource>(std::move(parts));
}

}  // namespace kpastream::bench
