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

#include "kpastream/oracle.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_map>
#include <variant>

#include "kpastream/errors.hpp"

namespace kpastream::oracle {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

std::vector<Row> apply_stateless(const OperatorSpec& op, std::vector<Row> rows) {
  std::vector<Row> out;
  if (const auto* f = std::get_if<ops::Filter>(&op)) {
    for (auto& r : rows) {
      if (f->predicate.test(r.at(f->predicate.column))) out.push_back(std::move(r));
    }
  } else if (const auto* fm = std::get_if<ops::FlatMap>(&op)) {
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < fm->copies; ++c) out.push_back(r);
    }
  } else if (const auto* ej = std::get_if<ops::ExternalJoin>(&op)) {
    for (auto& r : rows) {
      const Value* v = ej->table->find(r.at(ej->column));
      if (v == nullptr) throw ConfigError("external join: no entry for key " + std::to_string(r[ej->column]));
      r[ej->column] = *v;
      out.push_back(std::move(r));
    }
  } else if (std::holds_alternative<ops::Sample>(op)) {
    throw ConfigError("oracle: unsupported operator Sample");
  } else {
    return rows;
  }
  return out;
}

std::map<WindowId, std::vector<Row>> by_window(const std::vector<Row>& rows, std::size_t ts_col,
                                               const WindowSpec& spec) {
  std::map<WindowId, std::vector<Row>> out;
  for (const auto& r : rows) {
    for (WindowId w : assign_windows(static_cast<EventTime>(r.at(ts_col)), spec)) out[w].push_back(r);
  }
  return out;
}

void aggregate_group(const Aggregate& agg, Value key, std::vector<Value> vals, Value stamp, std::vector<Row>& out) {
  Value sum = 0;
  for (Value v : vals) sum += v;
  const auto n = static_cast<Value>(vals.size());
  switch (agg.kind) {
    case AggregateKind::Sum:
      out.push_back({key, sum, stamp});
      break;
    case AggregateKind::Count:
      out.push_back({key, n, stamp});
      break;
    case AggregateKind::Avg:
      out.push_back({key, sum / n, sum, n, stamp});
      break;
    case AggregateKind::Median:
      std::sort(vals.begin(), vals.end());
      out.push_back({key, vals[(vals.size() - 1) / 2], stamp});
      break;
    case AggregateKind::TopK:
      std::sort(vals.begin(), vals.end(), [](Value a, Value b) { return a > b; });
      for (std::size_t i = 0; i < vals.size() && i < agg.k; ++i) out.push_back({key, vals[i], stamp});
      break;
    case AggregateKind::DistinctCount:
      out.push_back({key, static_cast<Value>(std::set<Value>(vals.begin(), vals.end()).size()), stamp});
      break;
  }
}

}  // namespace

OracleResult evaluate(const Pipeline& pipeline, const std::vector<std::vector<Row>>& inputs) {
  pipeline.validate();
  if (inputs.size() != pipeline.inputs.size()) {
    throw ConfigError("oracle: expected " + std::to_string(pipeline.inputs.size()) + " inputs, got " +
                      std::to_string(inputs.size()));
  }
  const WindowSpec& spec = pipeline.window();
  std::vector<std::map<WindowId, std::vector<Row>>> windows;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<Row> rows = inputs[i];
    for (std::size_t o = 0; o < pipeline.terminal_index(); ++o) rows = apply_stateless(pipeline.operators[o], rows);
    windows.push_back(by_window(rows, pipeline.inputs[i]->timestamp_column(), spec));
  }

  OracleResult result;
  std::visit(
      Overloaded{
          [&](const ops::KeyedAggregation& k) {
            for (const auto& [w, rows] : windows[0]) {
              std::unordered_map<Value, std::vector<Value>> groups;
              for (const auto& r : rows) groups[r[k.key_column]].push_back(r[k.value_column]);
              auto& out = result[w];
              for (auto& [key, vals] : groups) aggregate_group(k.aggregate, key, std::move(vals), window_stamp(w), out);
            }
          },
          [&](const ops::AggregateAll& a) {
            for (const auto& [w, rows] : windows[0]) {
              Value sum = 0;
              for (const auto& r : rows) sum += r[a.value_column];
              const auto n = static_cast<Value>(rows.size());
              auto& out = result[w];
              if (a.aggregate.kind == AggregateKind::Sum) {
                out.push_back({sum, window_stamp(w)});
              } else if (a.aggregate.kind == AggregateKind::Count) {
                out.push_back({n, window_stamp(w)});
              } else {
                out.push_back({sum / n, sum, n, window_stamp(w)});
              }
            }
          },
          [&](const ops::TemporalJoin& j) {
            for (const auto& [w, left] : windows[0]) {
              auto rit = windows[1].find(w);
              if (rit == windows[1].end()) continue;
              std::vector<Row> out;
              for (const auto& l : left) {
                for (const auto& r : rit->second) {
                  if (l[j.key_column] != r[j.key_column]) continue;
                  Row row{l[j.key_column]};
                  for (std::size_t c = 0; c < l.size(); ++c) {
                    if (c != j.key_column) row.push_back(l[c]);
                  }
                  for (std::size_t c = 0; c < r.size(); ++c) {
                    if (c != j.key_column) row.push_back(r[c]);
                  }
                  out.push_back(std::move(row));
                }
              }
              if (!out.empty()) result[w] = std::move(out);
            }
          },
          [&](const ops::WindowedFilter& f) {
            for (const auto& [w, averaged] : windows[0]) {
              auto rit = windows[1].find(w);
              if (rit == windows[1].end()) continue;
              Value sum = 0;
              for (const auto& r : averaged) sum += r[f.value_column];
              const Value threshold = sum / static_cast<Value>(averaged.size());
              std::vector<Row> out;
              for (const auto& r : rit->second) {
                if (r[f.filter_column] < threshold) out.push_back(r);
              }
              if (!out.empty()) result[w] = std::move(out);
            }
          },
          [&](const auto&) { throw ConfigError("oracle: unsupported terminal operator"); },
      },
      pipeline.terminal());
  for (auto& [w, rows] : result) std::sort(rows.begin(), rows.end());
  return result;
}

namespace {

std::string format_row(const Row& r) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
  os << ']';
  return os.str();
}

}  // namespace

std::optional<std::string> first_divergence(const OracleResult& expected, const OracleResult& actual) {
  std::set<WindowId> ids;
  for (const auto& [w, rows] : expected) ids.insert(w);
  for (const auto& [w, rows] : actual) ids.insert(w);
  static const std::vector<Row> kEmpty;
  for (WindowId w : ids) {
    auto e = expected.find(w);
    auto a = actual.find(w);
    const auto& er = e == expected.end() ? kEmpty : e->second;
    const auto& ar = a == actual.end() ? kEmpty : a->second;
    if (er == ar) continue;
    std::ostringstream os;
    os << "window " << w << ": expected " << er.size() << " rows, engine produced " << ar.size();
    std::size_t i = 0;
    while (i < er.size() && i < ar.size() && er[i] == ar[i]) ++i;
    os << "; first difference at row " << i << ": expected "
       << (i < er.size() ? format_row(er[i]) : std::string("<none>")) << ", got "
       << (i < ar.size() ? format_row(ar[i]) : std::string("<none>"));
    return os.str();
  }
  return std::nullopt;
}

}  // namespace kpastream::oracle
