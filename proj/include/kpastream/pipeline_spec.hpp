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

// Declarative pipeline definitions. Pure data: the engine plans and runs
// them, the reference interpreter evaluates them directly.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "kpastream/model.hpp"

namespace kpastream {

enum class CompareOp { Lt, Le, Eq, Ne, Ge, Gt };

struct Predicate {
  std::size_t column = 0;
  CompareOp op = CompareOp::Eq;
  Value constant = 0;

  bool test(Value v) const {
    switch (op) {
      case CompareOp::Lt: return v < constant;
      case CompareOp::Le: return v <= constant;
      case CompareOp::Eq: return v == constant;
      case CompareOp::Ne: return v != constant;
      case CompareOp::Ge: return v >= constant;
      case CompareOp::Gt: return v > constant;
    }
    return false;
  }
  std::string describe(const Schema& schema) const;
};

/// Small key/value table consulted by the external join.
class LookupTable {
 public:
  LookupTable() = default;
  explicit LookupTable(std::unordered_map<Value, Value> entries) : entries_(std::move(entries)) {}

  const Value* find(Value key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }
  /// Throws ConfigError naming the missing key.
  Value at(Value key) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t bytes() const { return entries_.size() * 2 * sizeof(Value); }

 private:
  std::unordered_map<Value, Value> entries_;
};

enum class AggregateKind { Sum, Count, Avg, Median, TopK, DistinctCount };

struct Aggregate {
  AggregateKind kind = AggregateKind::Sum;
  std::size_t k = 1;  // TopK only

  /// Whether per-bundle partials can be combined exactly at window close.
  bool algebraic() const {
    return kind == AggregateKind::Sum || kind == AggregateKind::Count || kind == AggregateKind::Avg ||
           kind == AggregateKind::TopK;
  }
  std::string name() const;
  /// "sum", "count", "avg", "median", "distinct", "topk:3".
  static Aggregate parse(const std::string& text);

  /// Value columns of one output row (between the key and the window).
  std::vector<std::string> value_columns() const;

  bool operator==(const Aggregate&) const = default;
};

namespace ops {

struct Filter {
  Predicate predicate;
};
/// Emits `copies` identical copies of each record.
struct FlatMap {
  std::size_t copies = 2;
};
/// Keeps each record with probability `rate`, decided per record reference.
struct Sample {
  double rate = 0.5;
  std::uint64_t seed = 0;
};
/// Replaces column `column` with table[value] (the YSB ad_id -> campaign lookup).
struct ExternalJoin {
  std::size_t column = 0;
  std::shared_ptr<const LookupTable> table;
  /// Label for the looked-up values in plans ("camp_id").
  std::string output_name;
};
struct Window {
  WindowSpec spec;
};
/// Output rows: [key, aggregate values..., window].
struct KeyedAggregation {
  std::size_t key_column = 0;
  std::size_t value_column = 1;
  Aggregate aggregate;
  bool early_aggregation = false;
};
/// Unkeyed per-window aggregate (Sum, Count or Avg). Output rows:
/// [aggregate values..., window].
struct AggregateAll {
  std::size_t value_column = 1;
  Aggregate aggregate{AggregateKind::Avg};
};
/// Two inputs. Output rows: [key, left non-key columns..., right non-key columns...].
struct TemporalJoin {
  std::size_t key_column = 0;
};
/// Two inputs. Per window, averages input 0's `value_column` (floor of
/// sum/count) and emits input 1's records whose `filter_column` is below it.
struct WindowedFilter {
  std::size_t value_column = 1;
  std::size_t filter_column = 3;
};

}  // namespace ops

using OperatorSpec = std::variant<ops::Filter, ops::FlatMap, ops::Sample, ops::ExternalJoin, ops::Window,
                                  ops::KeyedAggregation, ops::AggregateAll, ops::TemporalJoin,
                                  ops::WindowedFilter>;

std::string describe(const OperatorSpec& op);

struct Pipeline {
  std::string name;
  std::vector<SchemaPtr> inputs;
  /// Stateless operators, then exactly one Window, then one terminal
  /// grouping operator. For two-input pipelines the operators before the
  /// terminal apply to both inputs.
  std::vector<OperatorSpec> operators;
  EventTime target_delay_ms = 1000;

  /// Throws PlanError.
  void validate() const;
  const WindowSpec& window() const;
  const OperatorSpec& terminal() const;
  std::size_t terminal_index() const;
  SchemaPtr output_schema() const;
  bool two_input() const { return inputs.size() == 2; }
};

/// Timestamp of the records a window emits ("window" column value).
inline Value window_stamp(WindowId w) { return static_cast<Value>(w); }

}  // namespace kpastream
