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

#include "kpastream/operators.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <string>

#include "kpastream/aggregate.hpp"
#include "kpastream/errors.hpp"
#include "kpastream/primitives.hpp"

namespace kpastream {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const OperatorSpec& op_at(const Pipeline& p, const Stage& s) { return p.operators.at(s.op_index); }

bool passes(const std::vector<Predicate>& filters, std::span<const Value> row) {
  for (const auto& f : filters) {
    if (!f.test(row[f.column])) return false;
  }
  return true;
}

// Materializes (from a KPA, honouring in-place keys) or copies (from a
// bundle) the filtered records `copies` times into a new bundle.
BundleHandle flatmap_source(ExecContext& ctx, const Stage& s, const BundleHandle& bundle, const Kpa* kpa) {
  const SchemaPtr& schema = bundle->schema_ptr();
  auto out = ctx.memory.new_bundle(schema);
  Row row(schema->column_count());
  auto emit = [&] {
    if (!passes(s.filters, row)) return;
    for (std::size_t c = 0; c < s.copies; ++c) out->append(row);
  };
  if (kpa != nullptr) {
    BundleResolver resolve(*kpa);
    for (const auto& p : kpa->pairs()) {
      resolve(p.ref.bundle).copy_record(p.ref.ordinal, row);
      if (kpa->dirty()) row[kpa->resident_column()] = p.key;
      emit();
    }
    ctx.memory.add_derefs(kpa->size());
    ctx.memory.record_traffic(PoolKind::Slow, kpa->size() * prim::kDerefBytes, TrafficSource::Materialize);
  } else {
    const Bundle& b = *bundle;
    for (std::size_t i = 0; i < b.size(); ++i) {
      b.copy_record(i, row);
      emit();
    }
    ctx.memory.record_traffic(PoolKind::Slow, b.size() * schema->row_bytes(), TrafficSource::Materialize);
  }
  ctx.memory.record_traffic(PoolKind::Slow, out->bytes(), TrafficSource::Materialize);
  return ctx.memory.register_bundle(std::move(out));
}

std::vector<Row> row_scan(const Pipeline& pipeline, const Bundle& b) {
  const std::size_t t = pipeline.terminal_index();
  std::vector<Row> rows;
  rows.reserve(b.size());
  Row row(b.schema().column_count());
  for (std::size_t i = 0; i < b.size(); ++i) {
    b.copy_record(i, row);
    std::vector<Row> cur{row};
    for (std::size_t o = 0; o + 1 < t && !cur.empty(); ++o) {
      const OperatorSpec& op = pipeline.operators[o];
      std::vector<Row> next;
      for (std::size_t r = 0; r < cur.size(); ++r) {
        Row& x = cur[r];
        if (const auto* f = std::get_if<ops::Filter>(&op)) {
          if (f->predicate.test(x[f->predicate.column])) next.push_back(std::move(x));
        } else if (const auto* m = std::get_if<ops::FlatMap>(&op)) {
          for (std::size_t c = 0; c < m->copies; ++c) next.push_back(x);
        } else if (const auto* s = std::get_if<ops::Sample>(&op)) {
          const KeyRef pair{x[0], {b.id(), static_cast<std::uint32_t>(i * cur.size() + r)}};
          if (sample_keep(*s, pair)) next.push_back(std::move(x));
        } else if (const auto* e = std::get_if<ops::ExternalJoin>(&op)) {
          x[e->column] = e->table->at(x[e->column]);
          next.push_back(std::move(x));
        }
      }
      cur = std::move(next);
    }
    for (auto& r : cur) rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

bool sample_keep(const ops::Sample& s, const KeyRef& pair) {
  const std::uint64_t h = splitmix(s.seed ^ splitmix(pair.key ^ splitmix(pair.ref.ordinal)));
  return static_cast<double>(h >> 11) * 0x1.0p-53 < s.rate;
}

BundleHandle flat_map(ExecContext& ctx, const BundleHandle& bundle, std::size_t copies) {
  Stage s;
  s.kind = StageKind::FlatMapExtract;
  s.copies = copies;
  return flatmap_source(ctx, s, bundle, nullptr);
}

BundleStageResult run_bundle_stages(ExecContext& ctx, const Pipeline& pipeline, const InputPlan& plan,
                                    const BundleHandle& bundle) {
  BundleStageResult result;
  BundleHandle current = bundle;
  std::optional<Kpa> kpa;
  std::vector<Row> rows;
  for (const Stage& s : plan.bundle_stages) {
    switch (s.kind) {
      case StageKind::Ingest: break;
      case StageKind::Extract: kpa = prim::extract(ctx, current, s.column); break;
      case StageKind::ExtractFiltered: kpa = prim::extract_filtered(ctx, current, s.filters, s.column); break;
      case StageKind::FlatMapExtract: {
        current = flatmap_source(ctx, s, current, s.from_kpa ? &*kpa : nullptr);
        kpa = prim::extract(ctx, current, s.column);
        break;
      }
      case StageKind::Selection: {
        const Predicate pred = s.filters.at(0);
        kpa = prim::selection(ctx, *kpa, [&](Value v) { return pred.test(v); });
        break;
      }
      case StageKind::SampleSelection: {
        const auto& sample = std::get<ops::Sample>(op_at(pipeline, s));
        kpa = prim::selection_pairs(ctx, *kpa, [&](const KeyRef& p) { return sample_keep(sample, p); });
        break;
      }
      case StageKind::ExternalJoin:
        prim::external_join(ctx, *kpa, *std::get<ops::ExternalJoin>(op_at(pipeline, s)).table);
        break;
      case StageKind::KeySwap: prim::key_swap(ctx, *kpa, s.column, s.write_back); break;
      case StageKind::Partition: {
        for (auto& [id, part] : prim::partition(ctx, *kpa, static_cast<Value>(pipeline.window().slide_ms))) {
          result.panes.push_back({id, std::move(part)});
        }
        kpa.reset();
        break;
      }
      case StageKind::RowScan: rows = row_scan(pipeline, *current); break;
      case StageKind::RowPartition: {
        const std::size_t ts = s.column;
        std::map<std::int64_t, std::vector<Row>> panes;
        for (auto& r : rows) panes[pane_of(static_cast<EventTime>(r[ts]), pipeline.window())].push_back(std::move(r));
        for (auto& [id, pr] : panes) result.row_panes.push_back({id, std::move(pr)});
        rows.clear();
        break;
      }
      default: throw InvariantError("stage " + s.label + " is not a bundle stage");
    }
  }
  return result;
}

void WindowOperator::on_rows(ExecContext&, int, std::uint64_t, PaneRows) {
  throw InvariantError("operator does not take full rows");
}

WindowOperator::WindowOperator(const Pipeline& pipeline, const Plan& plan)
    : pipeline_(pipeline), plan_(plan), spec_(pipeline.window()), out_schema_(pipeline.output_schema()) {}

std::vector<std::int64_t> WindowOperator::panes_of(WindowId w) const {
  std::vector<std::int64_t> out;
  const std::int64_t first = floor_div(w, spec_.slide_ms);
  for (std::size_t i = 0; i < spec_.panes_per_window(); ++i) out.push_back(first + static_cast<std::int64_t>(i));
  return out;
}

std::vector<WindowId> WindowOperator::windows_of_pane(std::int64_t pane) const {
  return assign_windows(pane * spec_.slide_ms, spec_);
}

void WindowOperator::mark_closed(WindowId w) {
  std::lock_guard lock(closed_mu_);
  if (!closed_.insert(w).second) throw InvariantError("window " + std::to_string(w) + " closed twice");
}

void WindowOperator::run_common_pane_stages(ExecContext& ctx, int input, Kpa& kpa) const {
  for (const Stage& s : plan_.inputs.at(static_cast<std::size_t>(input)).pane_stages) {
    if (s.kind == StageKind::KeySwap) {
      prim::key_swap(ctx, kpa, s.column, s.write_back);
    } else if (s.kind == StageKind::Sort) {
      prim::sort(ctx, kpa);
    }
  }
}

namespace {

template <class T>
struct Seq {
  std::uint64_t seq;
  T item;
};

class KeyedAggregationOp final : public WindowOperator {
 public:
  KeyedAggregationOp(const Pipeline& p, const Plan& plan)
      : WindowOperator(p, plan), op_(std::get<ops::KeyedAggregation>(p.terminal())) {}

  void on_pane(ExecContext& ctx, int input, std::uint64_t seq, PaneKpa pane) override {
    Kpa kpa = std::move(pane.kpa);
    run_common_pane_stages(ctx, input, kpa);
    if (plan_.early_aggregation) {
      const Value stamp = window_stamp(pane.pane * spec_.slide_ms);
      BundleHandle partial = prim::reduce_out_of_kpa(ctx, kpa, op_.value_column, op_.aggregate, stamp, out_schema_);
      kpa = prim::extract(ctx, partial, 0);
      kpa.set_sorted(true);
    }
    std::shared_ptr<Pane> p = pane_for(pane.pane);
    std::lock_guard lock(p->mu);
    p->kpas.push_back({seq, std::move(kpa)});
  }

  BundleHandle on_close(ExecContext& ctx, WindowId w) override {
    mark_closed(w);
    std::vector<std::shared_ptr<Pane>> panes = collect(w);
    std::vector<std::pair<std::uint64_t, const Kpa*>> ordered;
    for (const auto& p : panes) {
      std::vector<std::pair<std::uint64_t, const Kpa*>> local;
      std::lock_guard lock(p->mu);
      for (const auto& e : p->kpas) local.emplace_back(e.seq, &e.item);
      std::sort(local.begin(), local.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      ordered.insert(ordered.end(), local.begin(), local.end());
    }
    if (ordered.empty()) return {};
    std::vector<const Kpa*> inputs;
    for (const auto& e : ordered) inputs.push_back(e.second);
    const std::size_t resident = plan_.early_aggregation ? 0 : op_.key_column;
    Kpa merged = prim::merge_all(ctx, inputs, resident);
    if (merged.empty()) return {};
    BundleHandle out = plan_.early_aggregation
                           ? prim::combine_partials(ctx, merged, op_.aggregate, window_stamp(w), out_schema_)
                           : prim::reduce_out_of_kpa(ctx, merged, op_.value_column, op_.aggregate,
                                                     window_stamp(w), out_schema_);
    return out->empty() ? BundleHandle{} : out;
  }

  void release_panes_before(std::int64_t first_open_pane) override {
    std::lock_guard lock(mu_);
    panes_.erase(panes_.begin(), panes_.lower_bound(first_open_pane));
  }

  std::size_t state_pairs() const override {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [id, p] : panes_) {
      std::lock_guard plock(p->mu);
      for (const auto& e : p->kpas) n += e.item.size();
    }
    return n;
  }

 private:
  struct Pane {
    mutable std::mutex mu;
    std::vector<Seq<Kpa>> kpas;
  };

  std::shared_ptr<Pane> pane_for(std::int64_t id) {
    std::lock_guard lock(mu_);
    auto& p = panes_[id];
    if (!p) p = std::make_shared<Pane>();
    return p;
  }

  std::vector<std::shared_ptr<Pane>> collect(WindowId w) {
    std::vector<std::shared_ptr<Pane>> out;
    std::lock_guard lock(mu_);
    for (std::int64_t id : panes_of(w)) {
      auto it = panes_.find(id);
      if (it != panes_.end()) out.push_back(it->second);
    }
    return out;
  }

  ops::KeyedAggregation op_;
  mutable std::mutex mu_;
  std::map<std::int64_t, std::shared_ptr<Pane>> panes_;
};

class RowGroupOp final : public WindowOperator {
 public:
  RowGroupOp(const Pipeline& p, const Plan& plan)
      : WindowOperator(p, plan), op_(std::get<ops::KeyedAggregation>(p.terminal())) {}

  void on_pane(ExecContext&, int, std::uint64_t, PaneKpa) override {
    throw InvariantError("row grouping path takes full rows");
  }

  void on_rows(ExecContext& ctx, int, std::uint64_t seq, PaneRows rows) override {
    std::size_t bytes = 0;
    for (const auto& r : rows.rows) bytes += r.size() * sizeof(Value);
    Allocation a = ctx.memory.alloc(PoolKind::Slow, SizeClass::WindowState, bytes);
    std::lock_guard lock(mu_);
    auto& pane = panes_[rows.pane];
    pane.push_back({seq, {std::move(rows.rows), std::move(a)}});
  }

  BundleHandle on_close(ExecContext& ctx, WindowId w) override {
    mark_closed(w);
    std::vector<std::pair<std::uint64_t, const std::vector<Row>*>> ordered;
    std::vector<Row> rows;
    {
      std::lock_guard lock(mu_);
      for (std::int64_t id : panes_of(w)) {
        auto it = panes_.find(id);
        if (it == panes_.end()) continue;
        std::vector<std::pair<std::uint64_t, const std::vector<Row>*>> local;
        for (const auto& e : it->second) local.emplace_back(e.seq, &e.item.rows);
        std::sort(local.begin(), local.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& l : local) rows.insert(rows.end(), l.second->begin(), l.second->end());
      }
    }
    if (rows.empty()) return {};
    return prim::row_group(ctx, std::move(rows), op_.key_column, op_.value_column, op_.aggregate,
                           window_stamp(w), out_schema_);
  }

  void release_panes_before(std::int64_t first_open_pane) override {
    std::lock_guard lock(mu_);
    panes_.erase(panes_.begin(), panes_.lower_bound(first_open_pane));
  }

  std::size_t state_pairs() const override { return 0; }

 private:
  struct Held {
    std::vector<Row> rows;
    Allocation allocation;
  };
  ops::KeyedAggregation op_;
  std::mutex mu_;
  std::map<std::int64_t, std::vector<Seq<Held>>> panes_;
};

// Sum of the resident keys and the pair count of one pane KPA, computed as
// an in-KPA reduction.
SumCount reduce_sum(ExecContext& ctx, const Kpa& kpa) {
  if (kpa.empty()) return {};
  Kpa r = prim::reduce_in_kpa(
      ctx, kpa, [](Value) { return Value{0}; },
      [](const KeyRef& acc, const KeyRef& x) { return KeyRef{acc.key + x.key, acc.ref}; });
  return {r.pairs()[0].key, kpa.size()};
}

class AggregateAllOp final : public WindowOperator {
 public:
  AggregateAllOp(const Pipeline& p, const Plan& plan)
      : WindowOperator(p, plan), op_(std::get<ops::AggregateAll>(p.terminal())) {}

  void on_pane(ExecContext& ctx, int input, std::uint64_t, PaneKpa pane) override {
    run_common_pane_stages(ctx, input, pane.kpa);
    const SumCount sc = reduce_sum(ctx, pane.kpa);
    std::lock_guard lock(mu_);
    panes_[pane.pane].merge(sc);
  }

  BundleHandle on_close(ExecContext& ctx, WindowId w) override {
    mark_closed(w);
    SumCount total;
    {
      std::lock_guard lock(mu_);
      for (std::int64_t id : panes_of(w)) {
        auto it = panes_.find(id);
        if (it != panes_.end()) total.merge(it->second);
      }
    }
    if (total.count == 0) return {};
    auto out = ctx.memory.new_bundle(out_schema_);
    fold_unkeyed(op_.aggregate, total.sum, total.count, window_stamp(w), *out);
    return ctx.memory.register_bundle(std::move(out));
  }

  void release_panes_before(std::int64_t first_open_pane) override {
    std::lock_guard lock(mu_);
    panes_.erase(panes_.begin(), panes_.lower_bound(first_open_pane));
  }

  std::size_t state_pairs() const override { return 0; }

 private:
  ops::AggregateAll op_;
  std::mutex mu_;
  std::map<std::int64_t, SumCount> panes_;
};

class TemporalJoinOp final : public WindowOperator {
 public:
  TemporalJoinOp(const Pipeline& p, const Plan& plan)
      : WindowOperator(p, plan), op_(std::get<ops::TemporalJoin>(p.terminal())), schema_(p.inputs[0]) {}

  void on_pane(ExecContext& ctx, int input, std::uint64_t, PaneKpa pane) override {
    run_common_pane_stages(ctx, input, pane.kpa);
    const std::size_t side = static_cast<std::size_t>(input);
    for (WindowId w : windows_of_pane(pane.pane)) {
      std::shared_ptr<State> st = state_for(w);
      std::lock_guard lock(st->mu);
      if (st->closed) throw InvariantError("temporal join: pane arrived for closed window " + std::to_string(w));
      if (const auto& other = st->side[1 - side]) {
        const auto matches = side == 0 ? prim::join(ctx, pane.kpa, *other) : prim::join(ctx, *other, pane.kpa);
        const Kpa& left = side == 0 ? pane.kpa : *other;
        const Kpa& right = side == 0 ? *other : pane.kpa;
        emit(ctx, left, right, matches, st->rows);
      }
      auto& mine = st->side[side];
      mine = mine ? prim::merge(ctx, *mine, pane.kpa) : prim::copy(ctx, pane.kpa);
    }
  }

  BundleHandle on_close(ExecContext& ctx, WindowId w) override {
    mark_closed(w);
    std::shared_ptr<State> st;
    {
      std::lock_guard lock(mu_);
      auto it = windows_.find(w);
      if (it == windows_.end()) return {};
      st = it->second;
      windows_.erase(it);
    }
    std::lock_guard lock(st->mu);
    st->closed = true;
    st->side[0].reset();
    st->side[1].reset();
    if (st->rows.empty()) return {};
    std::sort(st->rows.begin(), st->rows.end());
    auto out = ctx.memory.new_bundle(out_schema_);
    out->reserve(st->rows.size());
    for (const auto& r : st->rows) out->append(r);
    st->rows.clear();
    return ctx.memory.register_bundle(std::move(out));
  }

  void release_panes_before(std::int64_t) override {}

  std::size_t state_pairs() const override {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [w, st] : windows_) {
      std::lock_guard slock(st->mu);
      for (const auto& s : st->side) n += s ? s->size() : 0;
    }
    return n;
  }

 private:
  struct State {
    mutable std::mutex mu;
    std::array<std::optional<Kpa>, 2> side;
    std::vector<Row> rows;
    bool closed = false;
  };

  std::shared_ptr<State> state_for(WindowId w) {
    std::lock_guard lock(mu_);
    auto& st = windows_[w];
    if (!st) st = std::make_shared<State>();
    return st;
  }

  void emit(ExecContext& ctx, const Kpa& left, const Kpa& right, const std::vector<prim::RefPair>& matches,
            std::vector<Row>& rows) const {
    if (matches.empty()) return;
    BundleResolver lres(left);
    BundleResolver rres(right);
    const std::size_t width = schema_->column_count();
    const std::size_t key = op_.key_column;
    for (const auto& [l, r] : matches) {
      const Bundle& lb = lres(l.bundle);
      const Bundle& rb = rres(r.bundle);
      Row row;
      row.reserve(2 * width - 1);
      row.push_back(lb.value(l.ordinal, key));
      for (std::size_t c = 0; c < width; ++c) {
        if (c != key) row.push_back(lb.value(l.ordinal, c));
      }
      for (std::size_t c = 0; c < width; ++c) {
        if (c != key) row.push_back(rb.value(r.ordinal, c));
      }
      rows.push_back(std::move(row));
    }
    ctx.memory.add_derefs(2 * matches.size());
    ctx.memory.record_traffic(PoolKind::Slow, matches.size() * (2 * prim::kDerefBytes), TrafficSource::Join);
  }

  ops::TemporalJoin op_;
  SchemaPtr schema_;
  mutable std::mutex mu_;
  std::map<WindowId, std::shared_ptr<State>> windows_;
};

class WindowedFilterOp final : public WindowOperator {
 public:
  WindowedFilterOp(const Pipeline& p, const Plan& plan)
      : WindowOperator(p, plan), op_(std::get<ops::WindowedFilter>(p.terminal())), schema_(p.inputs[1]) {}

  void on_pane(ExecContext& ctx, int input, std::uint64_t seq, PaneKpa pane) override {
    run_common_pane_stages(ctx, input, pane.kpa);
    std::lock_guard lock(mu_);
    Pane& p = panes_[pane.pane];
    if (input == 0) {
      p.averaged.merge(reduce_sum(ctx, pane.kpa));
    } else {
      p.filtered.push_back({seq, std::move(pane.kpa)});
    }
  }

  BundleHandle on_close(ExecContext& ctx, WindowId w) override {
    mark_closed(w);
    SumCount avg;
    std::vector<std::pair<std::uint64_t, const Kpa*>> kpas;
    {
      std::lock_guard lock(mu_);
      for (std::int64_t id : panes_of(w)) {
        auto it = panes_.find(id);
        if (it == panes_.end()) continue;
        avg.merge(it->second.averaged);
        std::vector<std::pair<std::uint64_t, const Kpa*>> local;
        for (const auto& e : it->second.filtered) local.emplace_back(e.seq, &e.item);
        std::sort(local.begin(), local.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        kpas.insert(kpas.end(), local.begin(), local.end());
      }
    }
    if (avg.count == 0 || kpas.empty()) return {};
    const Value threshold = avg.sum / avg.count;
    std::vector<KeyRef> kept;
    for (const auto& [seq, kpa] : kpas) {
      Kpa sel = prim::selection(ctx, *kpa, [&](Value v) { return v < threshold; });
      kept.insert(kept.end(), sel.pairs().begin(), sel.pairs().end());
    }
    if (kept.empty()) return {};
    Kpa all = Kpa::create(ctx, op_.filter_column, std::move(kept), false);
    return prim::materialize(ctx, std::move(all), schema_);
  }

  void release_panes_before(std::int64_t first_open_pane) override {
    std::lock_guard lock(mu_);
    panes_.erase(panes_.begin(), panes_.lower_bound(first_open_pane));
  }

  std::size_t state_pairs() const override {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [id, p] : panes_) {
      for (const auto& e : p.filtered) n += e.item.size();
    }
    return n;
  }

 private:
  struct Pane {
    SumCount averaged;
    std::vector<Seq<Kpa>> filtered;
  };
  ops::WindowedFilter op_;
  SchemaPtr schema_;
  mutable std::mutex mu_;
  std::map<std::int64_t, Pane> panes_;
};

}  // namespace

std::unique_ptr<WindowOperator> make_window_operator(const Pipeline& pipeline, const Plan& plan) {
  const OperatorSpec& t = pipeline.terminal();
  if (std::holds_alternative<ops::KeyedAggregation>(t)) {
    if (plan.row_path) return std::make_unique<RowGroupOp>(pipeline, plan);
    return std::make_unique<KeyedAggregationOp>(pipeline, plan);
  }
  if (std::holds_alternative<ops::AggregateAll>(t)) return std::make_unique<AggregateAllOp>(pipeline, plan);
  if (std::holds_alternative<ops::TemporalJoin>(t)) return std::make_unique<TemporalJoinOp>(pipeline, plan);
  if (std::holds_alternative<ops::WindowedFilter>(t)) return std::make_unique<WindowedFilterOp>(pipeline, plan);
  throw PlanError("no window operator for " + describe(t));
}

}  // namespace kpastream
