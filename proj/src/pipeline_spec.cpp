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

#include "kpastream/pipeline_spec.hpp"

#include <algorithm>
#include <sstream>

#include "kpastream/errors.hpp"

namespace kpastream {

namespace {

const char* op_symbol(CompareOp op) {
  switch (op) {
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Eq: return "==";
    case CompareOp::Ne: return "!=";
    case CompareOp::Ge: return ">=";
    case CompareOp::Gt: return ">";
  }
  return "?";
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

bool is_stateless(const OperatorSpec& op) {
  return std::holds_alternative<ops::Filter>(op) || std::holds_alternative<ops::FlatMap>(op) ||
         std::holds_alternative<ops::Sample>(op) || std::holds_alternative<ops::ExternalJoin>(op);
}

void check_column(const Schema& schema, std::size_t col, const std::string& what) {
  if (!schema.has_column(col)) {
    throw PlanError(what + " column " + std::to_string(col) + " absent from schema");
  }
}

}  // namespace

std::string Predicate::describe(const Schema& schema) const {
  std::ostringstream os;
  os << (schema.has_column(column) ? schema.column_name(column) : "col" + std::to_string(column)) << op_symbol(op)
     << constant;
  return os.str();
}

Value LookupTable::at(Value key) const {
  if (const Value* v = find(key)) return *v;
  throw ConfigError("external join: lookup table has no entry for key " + std::to_string(key));
}

std::string Aggregate::name() const {
  switch (kind) {
    case AggregateKind::Sum: return "sum";
    case AggregateKind::Count: return "count";
    case AggregateKind::Avg: return "avg";
    case AggregateKind::Median: return "median";
    case AggregateKind::TopK: return "topk:" + std::to_string(k);
    case AggregateKind::DistinctCount: return "distinct";
  }
  return "?";
}

Aggregate Aggregate::parse(const std::string& text) {
  if (text == "sum") return {AggregateKind::Sum};
  if (text == "count") return {AggregateKind::Count};
  if (text == "avg") return {AggregateKind::Avg};
  if (text == "median") return {AggregateKind::Median};
  if (text == "distinct") return {AggregateKind::DistinctCount};
  if (text.rfind("topk", 0) == 0) {
    std::size_t k = 3;
    if (text.size() > 5 && text[4] == ':') k = std::stoul(text.substr(5));
    if (k == 0) throw ConfigError("topk needs k >= 1");
    return {AggregateKind::TopK, k};
  }
  throw ConfigError("unknown aggregate '" + text + "'");
}

std::vector<std::string> Aggregate::value_columns() const {
  switch (kind) {
    case AggregateKind::Sum: return {"sum"};
    case AggregateKind::Count: return {"count"};
    case AggregateKind::Avg: return {"mean", "sum", "count"};
    case AggregateKind::Median: return {"median"};
    case AggregateKind::TopK: return {"value"};
    case AggregateKind::DistinctCount: return {"distinct"};
  }
  return {};
}

std::string describe(const OperatorSpec& op) {
  return std::visit(
      Overloaded{
          [](const ops::Filter& f) { return "Filter(col" + std::to_string(f.predicate.column) + ")"; },
          [](const ops::FlatMap& f) { return "FlatMap(x" + std::to_string(f.copies) + ")"; },
          [](const ops::Sample& s) { return "Sample(" + std::to_string(s.rate) + ")"; },
          [](const ops::ExternalJoin& e) { return "ExternalJoin(col" + std::to_string(e.column) + ")"; },
          [](const ops::Window& w) {
            return "Window(" + std::to_string(w.spec.length_ms) + "/" + std::to_string(w.spec.slide_ms) + ")";
          },
          [](const ops::KeyedAggregation& k) { return "KeyedAggregation(" + k.aggregate.name() + ")"; },
          [](const ops::AggregateAll& a) { return "AggregateAll(" + a.aggregate.name() + ")"; },
          [](const ops::TemporalJoin&) { return std::string("TemporalJoin"); },
          [](const ops::WindowedFilter&) { return std::string("WindowedFilter"); },
      },
      op);
}

std::size_t Pipeline::terminal_index() const {
  if (operators.empty()) throw PlanError("pipeline '" + name + "' has no operators");
  return operators.size() - 1;
}

const OperatorSpec& Pipeline::terminal() const { return operators[terminal_index()]; }

const WindowSpec& Pipeline::window() const {
  for (const auto& op : operators) {
    if (const auto* w = std::get_if<ops::Window>(&op)) return w->spec;
  }
  throw PlanError("pipeline '" + name + "' has no Window operator");
}

void Pipeline::validate() const {
  if (inputs.empty() || inputs.size() > 2) throw PlanError("pipeline needs one or two inputs");
  for (const auto& s : inputs) {
    if (!s) throw PlanError("null input schema");
  }
  const std::size_t t = terminal_index();
  if (t == 0 || !std::holds_alternative<ops::Window>(operators[t - 1])) {
    throw PlanError("pipeline '" + name + "': a Window must directly precede the terminal operator");
  }
  window().validate();
  for (std::size_t i = 0; i + 1 < t; ++i) {
    if (!is_stateless(operators[i])) {
      throw PlanError("pipeline '" + name + "': only stateless operators may precede the Window, got " +
                      describe(operators[i]));
    }
  }
  const OperatorSpec& term = terminal();
  const bool binary =
      std::holds_alternative<ops::TemporalJoin>(term) || std::holds_alternative<ops::WindowedFilter>(term);
  if (binary != two_input()) {
    throw PlanError("pipeline '" + name + "': " + describe(term) + " takes " + (binary ? "two" : "one") +
                    " input(s)");
  }
  if (two_input() && *inputs[0] != *inputs[1] && std::holds_alternative<ops::TemporalJoin>(term)) {
    throw PlanError("temporal join inputs must share a schema");
  }
  for (const auto& schema : inputs) {
    for (std::size_t i = 0; i < t; ++i) {
      std::visit(Overloaded{
                     [&](const ops::Filter& f) { check_column(*schema, f.predicate.column, "filter"); },
                     [&](const ops::ExternalJoin& e) {
                       check_column(*schema, e.column, "external join");
                       if (!e.table) throw PlanError("external join without a lookup table");
                     },
                     [&](const ops::Sample& s) {
                       if (!(s.rate >= 0.0 && s.rate <= 1.0)) throw PlanError("sample rate outside [0,1]");
                     },
                     [&](const ops::FlatMap& f) {
                       if (f.copies == 0) throw PlanError("flatmap needs at least one copy");
                     },
                     [](const auto&) {},
                 },
                 operators[i]);
    }
  }
  std::visit(Overloaded{
                 [&](const ops::KeyedAggregation& k) {
                   check_column(*inputs[0], k.key_column, "grouping key");
                   check_column(*inputs[0], k.value_column, "value");
                   if (k.aggregate.kind == AggregateKind::TopK && k.aggregate.k == 0) {
                     throw PlanError("topk needs k >= 1");
                   }
                 },
                 [&](const ops::AggregateAll& a) {
                   check_column(*inputs[0], a.value_column, "value");
                   const auto kind = a.aggregate.kind;
                   if (kind != AggregateKind::Sum && kind != AggregateKind::Count && kind != AggregateKind::Avg) {
                     throw PlanError("unkeyed aggregation supports sum, count and avg");
                   }
                 },
                 [&](const ops::TemporalJoin& j) { check_column(*inputs[0], j.key_column, "join key"); },
                 [&](const ops::WindowedFilter& f) {
                   check_column(*inputs[0], f.value_column, "value");
                   check_column(*inputs[1], f.filter_column, "filter");
                 },
                 [&](const auto&) { throw PlanError("terminal operator must be a grouping operator"); },
             },
             term);
}

SchemaPtr Pipeline::output_schema() const {
  return std::visit(
      Overloaded{
          [&](const ops::KeyedAggregation& k) -> SchemaPtr {
            std::vector<std::string> names{inputs[0]->column_name(k.key_column)};
            for (auto& c : k.aggregate.value_columns()) names.push_back(c);
            names.push_back("window");
            return std::make_shared<Schema>(names, names.size() - 1);
          },
          [&](const ops::AggregateAll& a) -> SchemaPtr {
            std::vector<std::string> names = a.aggregate.value_columns();
            names.push_back("window");
            return std::make_shared<Schema>(names, names.size() - 1);
          },
          [&](const ops::TemporalJoin& j) -> SchemaPtr {
            const Schema& s = *inputs[0];
            std::vector<std::string> names{s.column_name(j.key_column)};
            std::size_t ts = 0;
            for (const char* side : {"l_", "r_"}) {
              for (std::size_t c = 0; c < s.column_count(); ++c) {
                if (c == j.key_column) continue;
                if (c == s.timestamp_column() && ts == 0) ts = names.size();
                names.push_back(side + s.column_name(c));
              }
            }
            return std::make_shared<Schema>(names, ts);
          },
          [&](const ops::WindowedFilter&) -> SchemaPtr { return inputs[1]; },
          [&](const auto&) -> SchemaPtr { throw PlanError("no output schema for non-terminal operator"); },
      },
      terminal());
}

}  // namespace kpastream
