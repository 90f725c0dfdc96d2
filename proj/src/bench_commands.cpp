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

#include "kpastream/bench_commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "kpastream/errors.hpp"
#include "kpastream/kernels.hpp"
#include "kpastream/oracle.hpp"
#include "kpastream/primitives.hpp"

namespace kpastream::bench {
namespace {

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

RunOptions run_options(const BenchConfig& cfg) {
  RunOptions o;
  o.workers = cfg.workers;
  o.pool = cfg.pool;
  o.early_aggregation = cfg.early_aggregation;
  o.rate_limit_records_per_s = cfg.rate_limit_records_per_s;
  return o;
}

void write_csv_to(const RunReport& report, const std::string& path, std::ostream& fallback) {
  if (path.empty() || path == "-") {
    write_metrics_csv(report, fallback);
    return;
  }
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open metrics file '" + path + "'");
  write_metrics_csv(report, f);
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

}  // namespace

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{
      "row_kind",          "virtual_ms",       "records_ingested",      "records_per_s",
      "fast_used_bytes",   "fast_capacity_fraction", "slow_bandwidth_fraction", "k_low",
      "k_high",            "spill_count",      "windows_externalized",  "egress_delay_ms",
      "paused"};
  return cols;
}

void write_metrics_csv(const RunReport& report, std::ostream& out) {
  const auto& cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  out << std::setprecision(6);
  for (const MetricsRow& m : report.metrics) {
    out << "interval," << m.virtual_ms << ',' << m.records_ingested << ',' << m.records_per_s << ','
        << m.fast_used_bytes << ',' << m.fast_capacity_fraction << ',' << m.slow_bandwidth_fraction << ','
        << m.k_low << ',' << m.k_high << ',' << m.spill_count << ',' << m.windows_externalized << ','
        << m.egress_delay_ms << ',' << (m.paused ? 1 : 0) << '\n';
  }
  const EventTime end = report.metrics.empty() ? 0 : report.metrics.back().virtual_ms;
  const double rate =
      end > 0 ? static_cast<double>(report.records_ingested) / (static_cast<double>(end) / 1000.0) : 0.0;
  double max_fast = 0.0;
  double max_slow = 0.0;
  for (const MetricsRow& m : report.metrics) {
    max_fast = std::max(max_fast, m.fast_capacity_fraction);
    max_slow = std::max(max_slow, m.slow_bandwidth_fraction);
  }
  const MetricsRow last = report.metrics.empty() ? MetricsRow{} : report.metrics.back();
  out << "summary," << end << ',' << report.records_ingested << ',' << rate << ','
      << report.max_sampled_fast_used << ',' << max_fast << ',' << max_slow << ',' << last.k_low << ','
      << last.k_high << ',' << report.spill_count << ',' << report.externalized.size() << ','
      << report.max_egress_delay_ms << ',' << report.pauses << '\n';
}

int cmd_run(const BenchConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Benchmark b = make_benchmark(cfg.pipeline, cfg.workload);
    auto source = make_source(b);
    RunReport r = run(b.pipeline, *source, run_options(cfg));
    if (!cfg.metrics_path.empty()) write_csv_to(r, cfg.metrics_path, out);
    const EventTime end = r.metrics.empty() ? 0 : r.metrics.back().virtual_ms;
    out << "pipeline: " << r.pipeline << " (workers " << cfg.workers << ")\n";
    for (const auto& line : r.plan.describe()) out << "  " << line << '\n';
    out << "records ingested: " << r.records_ingested << " in " << r.bundles_ingested << " bundles, "
        << r.late_records << " late\n";
    out << "windows externalized: " << r.externalized.size() << '\n';
    out << "throughput: "
        << (end > 0 ? static_cast<double>(r.records_ingested) * 1000.0 / static_cast<double>(end) : 0.0)
        << " records/s (event time), "
        << (r.wall_ms > 0 ? static_cast<double>(r.records_ingested) * 1000.0 / r.wall_ms : 0.0)
        << " records/s (wall, " << r.wall_ms << " ms)\n";
    out << "max egress delay: " << r.max_egress_delay_ms << " ms (target " << r.target_delay_ms << " ms)\n";
    out << "spills: " << r.spill_count << ", fast peak: " << r.fast_peak_bytes << " B, pauses: " << r.pauses
        << '\n';
    return kExitOk;
  });
}

VerifyResult verify(const Benchmark& benchmark, const RunOptions& options) {
  VerifyResult v;
  auto source = make_source(benchmark);
  std::vector<StreamEvent> events = drain(*source);
  const std::size_t inputs = benchmark.pipeline.inputs.size();
  for (std::size_t i = 0; i < inputs; ++i) {
    std::vector<StreamEvent> mine;
    for (const auto& e : events) {
      if (static_cast<std::size_t>(e.input) == i) mine.push_back(e);
    }
    v.watermark_violations += watermark_violations(mine, benchmark.pipeline.inputs[i]->timestamp_column());
  }
  const oracle::OracleResult expected = oracle::evaluate(benchmark.pipeline, records_of(events, inputs));
  VectorSource replay(std::move(events), inputs);
  v.report = run(benchmark.pipeline, replay, options);
  const oracle::OracleResult actual = v.report.rows();
  v.windows = expected.size();
  for (const auto& [w, rows] : expected) v.rows += rows.size();
  auto diff = oracle::first_divergence(expected, actual);
  v.match = !diff.has_value();
  if (diff) v.diagnostic = *diff;
  return v;
}

int cmd_verify(const BenchConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Benchmark b = make_benchmark(cfg.pipeline, cfg.workload);
    kernels::set_comparator_fault(cfg.inject_comparator_fault);
    VerifyResult v;
    try {
      v = verify(b, run_options(cfg));
    } catch (...) {
      kernels::set_comparator_fault(false);
      throw;
    }
    kernels::set_comparator_fault(false);
    if (!v.match) {
      out << "MISMATCH " << cfg.pipeline << " seed=" << cfg.workload.seed << " workers=" << cfg.workers << ": "
          << v.diagnostic << '\n';
      return kExitMismatch;
    }
    if (v.watermark_violations > 0) {
      out << "MISMATCH " << cfg.pipeline << ": " << v.watermark_violations << " watermark contract violations\n";
      return kExitMismatch;
    }
    out << "PASS " << cfg.pipeline << " seed=" << cfg.workload.seed << " workers=" << cfg.workers
        << " windows=" << v.windows << " rows=" << v.rows << '\n';
    return kExitOk;
  });
}

MicrobenchResult microbench(const std::string& kind, std::size_t size, int workers, std::uint64_t seed) {
  if (kind != "sort" && kind != "merge" && kind != "hash_groupby" && kind != "keyswap") {
    throw ConfigError("unknown microbench kind '" + kind + "' (sort, merge, hash_groupby, keyswap)");
  }
  MicrobenchResult r;
  r.kind = kind;
  r.size = size;
  r.workers = workers;
  if (size == 0) return r;

  PoolConfig pool;
  pool.fast_capacity_bytes = std::max<std::size_t>(pool.fast_capacity_bytes, size * sizeof(KeyRef) * 6);
  pool.with_reserved_fraction(0.1);
  HybridMemory mem(pool);
  ExecContext ctx{mem, ImpactTag::High, workers};

  const auto schema = std::make_shared<Schema>(std::vector<std::string>{"key", "value", "ts"}, 2);
  const Value keys = std::max<Value>(1, size / 16);
  std::mt19937_64 rng(seed);
  std::vector<BundleHandle> bundles;
  constexpr std::size_t kBundle = 100000;
  for (std::size_t done = 0; done < size;) {
    const std::size_t n = std::min(kBundle, size - done);
    auto b = mem.new_bundle(schema);
    b->reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::array<Value, 3> row{rng() % keys, rng() % 1000000, static_cast<Value>(done + i)};
      b->append(row);
    }
    bundles.push_back(mem.register_bundle(std::move(b)));
    done += n;
  }
  auto extract_all = [&](std::size_t col) {
    std::vector<Kpa> parts;
    for (const auto& b : bundles) parts.push_back(prim::extract(ctx, b, col));
    std::vector<KeyRef> pairs;
    std::vector<BundleId> ids;
    for (auto& p : parts) {
      pairs.insert(pairs.end(), p.pairs().begin(), p.pairs().end());
      for (BundleId id : p.link_ids()) ids.push_back(id);
    }
    return Kpa::create(ctx, col, std::move(pairs), false, ids);
  };

  const std::uint64_t fast0 = mem.traffic_total(PoolKind::Fast);
  const std::uint64_t slow0 = mem.traffic_total(PoolKind::Slow);
  std::uint64_t fast_base = fast0;
  std::uint64_t slow_base = slow0;
  auto mark = [&] {
    fast_base = mem.traffic_total(PoolKind::Fast);
    slow_base = mem.traffic_total(PoolKind::Slow);
  };
  double seconds = 0.0;
  if (kind == "sort") {
    Kpa kpa = extract_all(0);
    mark();
    Timer t;
    prim::sort(ctx, kpa);
    seconds = t.seconds();
  } else if (kind == "merge") {
    Kpa all = extract_all(0);
    std::vector<KeyRef> pairs(all.pairs().begin(), all.pairs().end());
    const auto half = static_cast<std::ptrdiff_t>(pairs.size() / 2);
    Kpa a = Kpa::create(ctx, 0, std::vector<KeyRef>(pairs.begin(), pairs.begin() + half), false);
    Kpa b = Kpa::create(ctx, 0, std::vector<KeyRef>(pairs.begin() + half, pairs.end()), false);
    prim::sort(ctx, a);
    prim::sort(ctx, b);
    mark();
    Timer t;
    Kpa m = prim::merge(ctx, a, b);
    seconds = t.seconds();
  } else if (kind == "keyswap") {
    Kpa kpa = extract_all(0);
    mark();
    Timer t;
    prim::key_swap(ctx, kpa, 1, false);
    seconds = t.seconds();
  } else {
    const Aggregate agg{AggregateKind::Sum};
    const auto out_schema = std::make_shared<Schema>(std::vector<std::string>{"key", "sum", "window"}, 2);
    mark();
    Timer t;
    BundleHandle hashed = prim::hash_group_by(ctx, bundles, 0, 1, agg, 0, out_schema);
    seconds = t.seconds();
    r.fast_bytes = mem.traffic_total(PoolKind::Fast) - fast_base;
    r.slow_bytes = mem.traffic_total(PoolKind::Slow) - slow_base;
    Kpa kpa = extract_all(0);
    prim::sort(ctx, kpa);
    BundleHandle sorted = prim::reduce_out_of_kpa(ctx, kpa, 1, agg, 0, out_schema);
    r.outputs_agree = hashed->size() == sorted->size();
    for (std::size_t i = 0; r.outputs_agree && i < hashed->size(); ++i) {
      for (std::size_t c = 0; c < out_schema->column_count(); ++c) {
        if (hashed->value(i, c) != sorted->value(i, c)) r.outputs_agree = false;
      }
    }
  }
  if (kind != "hash_groupby") {
    r.fast_bytes = mem.traffic_total(PoolKind::Fast) - fast_base;
    r.slow_bytes = mem.traffic_total(PoolKind::Slow) - slow_base;
  }
  r.seconds = seconds;
  r.records_per_s = seconds > 0 ? static_cast<double>(size) / seconds : 0.0;
  return r;
}

int cmd_microbench(const BenchConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (cfg.workers < 1) throw ConfigError("workers must be at least 1");
    std::vector<int> counts;
    if (cfg.scan_workers) {
      for (int w = 1; w < cfg.workers; w *= 2) counts.push_back(w);
    }
    counts.push_back(cfg.workers);
    out << "kind,size,workers,seconds,records_per_s,fast_bytes,slow_bytes,speedup,outputs_agree\n";
    if (cfg.micro_size == 0) return kExitOk;
    double base = 0.0;
    bool agree = true;
    for (int w : counts) {
      const MicrobenchResult r = microbench(cfg.micro_kind, cfg.micro_size, w, cfg.workload.seed);
      if (base == 0.0) base = r.seconds;
      agree = agree && r.outputs_agree;
      out << r.kind << ',' << r.size << ',' << r.workers << ',' << r.seconds << ',' << r.records_per_s << ','
          << r.fast_bytes << ',' << r.slow_bytes << ',' << (r.seconds > 0 ? base / r.seconds : 0.0) << ','
          << (r.outputs_agree ? 1 : 0) << '\n';
    }
    if (!agree) {
      err << "hash and sort GroupBy disagree\n";
      return kExitMismatch;
    }
    return kExitOk;
  });
}

Experiment knobtrace_experiment(const std::string& scenario, const BenchConfig& cfg) {
  Experiment e;
  WorkloadParams w;
  w.seed = cfg.workload.seed;
  w.window_ms = 1000;
  w.bundle_size = 500;
  w.key_cardinality = 1000;
  w.target_delay_ms = 1000;
  PoolConfig pool;
  int slide_panes = 1;
  pool.sample_interval_ms = 10;
  pool.kpa_chunk_bytes = 4 << 10;
  if (scenario == "rising_ingest") {
    w.records_per_window = 10000;
    w.bundle_size = 1000;
    w.num_windows = 10;
    w.rate_schedule = {1, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    pool.fast_capacity_bytes = 2 * w.records_per_window * sizeof(KeyRef);
    pool.slow_bandwidth_budget_bytes_per_interval = 2 << 20;
    e.options.horizon_windows = 0;
    slide_panes = 4;
  } else if (scenario == "delayed_watermarks") {
    w.records_per_window = 10000;
    w.num_windows = 12;
    e.delay_from = 3;
    e.delay_windows = cfg.delay_windows;
    w.withhold_from = e.delay_from;
    w.withhold_count = e.delay_windows;
    pool.fast_capacity_bytes = 8 * w.records_per_window * sizeof(KeyRef);
    pool.slow_bandwidth_budget_bytes_per_interval = 256 << 10;
  } else if (scenario == "static") {
    w.records_per_window = 2000;
    w.num_windows = 8;
    pool.slow_bandwidth_budget_bytes_per_interval = 1 << 20;
  } else {
    throw ConfigError("unknown knobtrace scenario '" + scenario +
                      "' (rising_ingest, delayed_watermarks, static)");
  }
  pool.with_reserved_fraction(0.1);
  e.benchmark = make_benchmark("sum_per_key", w);
  if (slide_panes > 1) {
    std::get<ops::Window>(e.benchmark.pipeline.operators[0]).spec = WindowSpec::sliding(w.window_ms * slide_panes, w.window_ms);
  }
  e.options.workers = cfg.workers;
  e.options.pool = pool;
  return e;
}

int cmd_knobtrace(const BenchConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Experiment e = knobtrace_experiment(cfg.scenario, cfg);
    auto source = make_source(e.benchmark);
    const RunReport r = run(e.benchmark.pipeline, *source, e.options);
    write_csv_to(r, cfg.metrics_path, out);
    return kExitOk;
  });
}

}  // namespace kpastream::bench
