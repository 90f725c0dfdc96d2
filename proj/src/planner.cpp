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

#include "kpastream/planner.hpp"

#include <variant>

#include "kpastream/errors.hpp"

namespace kpastream {

std::string to_string(StageKind k) {
  switch (k) {
    case StageKind::Ingest: return "ingest";
    case StageKind::Extract: return "extract";
    case StageKind::ExtractFiltered: return "extract_filter";
    case StageKind::FlatMapExtract: return "flatmap_extract";
    case StageKind::Selection: return "selection";
    case StageKind::SampleSelection: return "sample";
    case StageKind::ExternalJoin: return "external_join";
    case StageKind::KeySwap: return "key_swap";
    case StageKind::Partition: return "partition";
    case StageKind::Sort: return "sort";
    case StageKind::EarlyAggregate: return "early_aggregate";
    case StageKind::ReduceInKpa: return "reduce_in_kpa";
    case StageKind::Save: return "save";
    case StageKind::JoinProbe: return "join";
    case StageKind::RowScan: return "row_scan";
    case StageKind::RowPartition: return "row_partition";
    case StageKind::Merge: return "merge";
    case StageKind::ReduceOutOfKpa: return "reduce_out_of_kpa";
    case StageKind::CombinePartials: return "combine_partials";
    case StageKind::FoldUnkeyed: return "fold_unkeyed";
    case StageKind::RowGroup: return "row_group";
    case StageKind::Materialize: return "materialize";
    case StageKind::Emit: return "emit";
  }
  return "?";
}

namespace {

Stage make_stage(StageKind k) {
  Stage s;
  s.kind = k;
  return s;
}

class InputPlanner {
 public:
  InputPlanner(const Pipeline& p, const Schema& schema) : pipeline_(p), schema_(schema) {
    for (std::size_t c = 0; c < schema.column_count(); ++c) names_.push_back(schema.column_name(c));
  }

  InputPlan plan_kpa_path(const OperatorSpec& terminal, std::size_t input, bool early) {
    add(make_stage(StageKind::Ingest), "ingest");
    const std::size_t t = pipeline_.terminal_index();
    for (std::size_t i = 0; i + 1 < t; ++i) {
      const OperatorSpec& op = pipeline_.operators[i];
      if (const auto* f = std::get_if<ops::Filter>(&op)) {
        if (!have_kpa_) {
          pending_filters_.push_back(f->predicate);
          continue;
        }
        swap_to(f->predicate.column);
        Stage s = make_stage(StageKind::Selection);
        s.filters.push_back(f->predicate);
        s.op_index = i;
        add(s, "selection(" + f->predicate.describe(schema_) + ")");
      } else if (const auto* m = std::get_if<ops::FlatMap>(&op)) {
        pending_copies_ *= m->copies;
        if (have_kpa_) {
          // Records change identity; the next extraction materializes first.
          pending_materialize_ = true;
          have_kpa_ = false;
        }
      } else if (const auto* s = std::get_if<ops::Sample>(&op)) {
        ensure_kpa(schema_.timestamp_column());
        Stage st = make_stage(StageKind::SampleSelection);
        st.op_index = i;
        add(st, "sample(" + std::to_string(s->rate) + ")");
      } else if (const auto* e = std::get_if<ops::ExternalJoin>(&op)) {
        ensure_kpa(e->column);
        swap_to(e->column);
        Stage st = make_stage(StageKind::ExternalJoin);
        st.column = e->column;
        st.op_index = i;
        const std::string out = e->output_name.empty() ? "joined" : e->output_name;
        add(st, "external_join(" + names_[e->column] + " -> " + out + ", in place)");
        names_[e->column] = out + "@" + schema_.column_name(e->column);
        dirty_ = true;
      }
    }
    // Window: partition on the timestamp column into panes of one slide.
    const std::size_t ts = schema_.timestamp_column();
    ensure_kpa(ts);
    swap_to(ts);
    Stage part = make_stage(StageKind::Partition);
    part.column = ts;
    part.op_index = t - 1;
    add(part, "partition(" + names_[ts] + "/" + std::to_string(pipeline_.window().slide_ms) + ")");

    in_pane_ = true;
    std::visit(
        [&](const auto& op) {
          using T = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<T, ops::KeyedAggregation>) {
            swap_to(op.key_column);
            add(make_stage(StageKind::Sort), "sort");
            if (early) {
              Stage s = make_stage(StageKind::EarlyAggregate);
              s.column = op.value_column;
              add(s, "early_aggregate(" + op.aggregate.name() + ")");
            }
            add(make_stage(StageKind::Save), "save");
          } else if constexpr (std::is_same_v<T, ops::AggregateAll>) {
            swap_to(op.value_column);
            add(make_stage(StageKind::ReduceInKpa), "reduce_in_kpa(sum)");
            add(make_stage(StageKind::Save), "save");
          } else if constexpr (std::is_same_v<T, ops::TemporalJoin>) {
            swap_to(op.key_column);
            add(make_stage(StageKind::Sort), "sort");
            add(make_stage(StageKind::JoinProbe), "join");
            add(make_stage(StageKind::Save), "merge_into_state");
          } else if constexpr (std::is_same_v<T, ops::WindowedFilter>) {
            if (input == 0) {
              swap_to(op.value_column);
              add(make_stage(StageKind::ReduceInKpa), "reduce_in_kpa(sum)");
            } else {
              swap_to(op.filter_column);
            }
            add(make_stage(StageKind::Save), "save");
          }
        },
        terminal);
    return std::move(plan_);
  }

  InputPlan plan_row_path(const ops::KeyedAggregation&) {
    add(make_stage(StageKind::Ingest), "ingest");
    Stage scan = make_stage(StageKind::RowScan);
    std::string label = "row_scan(";
    const std::size_t t = pipeline_.terminal_index();
    for (std::size_t i = 0; i + 1 < t; ++i) {
      if (i > 0) label += ",";
      label += describe(pipeline_.operators[i]);
    }
    add(scan, label + ")");
    Stage part = make_stage(StageKind::RowPartition);
    part.column = schema_.timestamp_column();
    add(part, "row_partition(" + names_[part.column] + "/" + std::to_string(pipeline_.window().slide_ms) + ")");
    in_pane_ = true;
    add(make_stage(StageKind::Save), "save");
    return std::move(plan_);
  }

 private:
  void add(Stage s, std::string label) {
    s.label = std::move(label);
    (in_pane_ ? plan_.pane_stages : plan_.bundle_stages).push_back(std::move(s));
  }

  std::string filter_text() const {
    std::string out;
    for (const auto& f : pending_filters_) {
      if (!out.empty()) out += ",";
      out += f.describe(schema_);
    }
    return out;
  }

  void ensure_kpa(std::size_t column) {
    if (have_kpa_) return;
    if (pending_copies_ > 1 || pending_materialize_) {
      Stage s = make_stage(StageKind::FlatMapExtract);
      s.column = column;
      s.copies = pending_copies_;
      s.filters = pending_filters_;
      s.from_kpa = pending_materialize_;
      s.write_back = dirty_;
      std::string label = "flatmap_extract(x" + std::to_string(pending_copies_);
      if (!pending_filters_.empty()) label += ", " + filter_text();
      label += " -> " + names_[column] + ")";
      if (pending_materialize_) label = "materialize+" + label;
      add(s, label);
    } else if (!pending_filters_.empty()) {
      Stage s = make_stage(StageKind::ExtractFiltered);
      s.column = column;
      s.filters = pending_filters_;
      add(s, "extract_filter(" + filter_text() + " -> " + names_[column] + ")");
    } else {
      Stage s = make_stage(StageKind::Extract);
      s.column = column;
      add(s, "extract(" + names_[column] + ")");
    }
    pending_filters_.clear();
    pending_copies_ = 1;
    pending_materialize_ = false;
    dirty_ = false;
    have_kpa_ = true;
    resident_ = column;
  }

  void swap_to(std::size_t column) {
    if (resident_ == column) return;
    Stage s = make_stage(StageKind::KeySwap);
    s.column = column;
    s.write_back = dirty_;
    add(s, "key_swap(" + names_[column] + (dirty_ ? ", write_back)" : ")"));
    dirty_ = false;
    resident_ = column;
  }

  const Pipeline& pipeline_;
  const Schema& schema_;
  std::vector<std::string> names_;
  InputPlan plan_;
  std::vector<Predicate> pending_filters_;
  std::size_t pending_copies_ = 1;
  bool pending_materialize_ = false;
  bool have_kpa_ = false;
  bool dirty_ = false;
  bool in_pane_ = false;
  std::size_t resident_ = kNoColumn;
};

void append_labels(const std::vector<Stage>& stages, std::vector<std::string>& out) {
  for (const auto& s : stages) out.push_back(s.label);
}

}  // namespace

std::vector<std::string> Plan::describe_input(std::size_t input) const {
  std::vector<std::string> out;
  append_labels(inputs.at(input).bundle_stages, out);
  append_labels(inputs.at(input).pane_stages, out);
  append_labels(close_stages, out);
  return out;
}

std::vector<std::string> Plan::describe() const {
  std::vector<std::string> out;
  for (const auto& in : inputs) {
    append_labels(in.bundle_stages, out);
    append_labels(in.pane_stages, out);
  }
  append_labels(close_stages, out);
  return out;
}

Plan plan(const Pipeline& pipeline, const PlanOptions& options) {
  pipeline.validate();
  Plan p;
  const OperatorSpec& terminal = pipeline.terminal();
  const auto* keyed = std::get_if<ops::KeyedAggregation>(&terminal);
  p.early_aggregation =
      keyed != nullptr && keyed->aggregate.algebraic() && (keyed->early_aggregation || options.early_aggregation);
  p.row_path = keyed != nullptr && pipeline.inputs[0]->column_count() < 3;

  for (std::size_t i = 0; i < pipeline.inputs.size(); ++i) {
    InputPlanner planner(pipeline, *pipeline.inputs[i]);
    p.inputs.push_back(p.row_path ? planner.plan_row_path(*keyed)
                                  : planner.plan_kpa_path(terminal, i, p.early_aggregation));
  }

  auto close = [&](StageKind k, std::string label) {
    Stage s = make_stage(k);
    s.label = std::move(label);
    p.close_stages.push_back(std::move(s));
  };
  std::visit(
      [&](const auto& op) {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, ops::KeyedAggregation>) {
          if (p.row_path) {
            close(StageKind::RowGroup, "row_group(" + op.aggregate.name() + ")");
          } else {
            close(StageKind::Merge, "merge");
            if (p.early_aggregation) {
              close(StageKind::CombinePartials, "combine_partials(" + op.aggregate.name() + ")");
            } else {
              close(StageKind::ReduceOutOfKpa, "reduce_out_of_kpa(" + op.aggregate.name() + ")");
            }
          }
        } else if constexpr (std::is_same_v<T, ops::AggregateAll>) {
          close(StageKind::FoldUnkeyed, "fold_unkeyed(" + op.aggregate.name() + ")");
        } else if constexpr (std::is_same_v<T, ops::WindowedFilter>) {
          close(StageKind::FoldUnkeyed, "fold_unkeyed(avg)");
          Stage s = make_stage(StageKind::Selection);
          s.label = "selection(" + pipeline.inputs[1]->column_name(op.filter_column) + "<avg)";
          p.close_stages.push_back(s);
          close(StageKind::Materialize, "materialize");
        }
      },
      terminal);
  close(StageKind::Emit, "emit");
  return p;
}

}  // namespace kpastream
