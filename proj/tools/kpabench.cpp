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

// kpabench: runs the benchmark pipelines, checks them against the reference
// interpreter, and drives the kernel and controller experiments.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "kpastream/bench_commands.hpp"
#include "kpastream/errors.hpp"

using namespace kpastream;
using namespace kpastream::bench;

int main(int argc, char** argv) {
  CLI::App app{"KPA stream engine benchmarks"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file (key = value per line); command-line flags override it");

  BenchConfig cfg;
  WorkloadParams& w = cfg.workload;
  PoolConfig& pool = cfg.pool;
  double fast_mb = static_cast<double>(pool.fast_capacity_bytes) / (1 << 20);
  double reserved_frac = 0.1;
  double slow_mbps = static_cast<double>(pool.slow_bandwidth_budget_bytes_per_interval) / (1 << 20) * 1000.0 /
                     static_cast<double>(pool.sample_interval_ms);

  app.add_option("--pipeline", cfg.pipeline, "Benchmark pipeline")->capture_default_str();
  app.add_option("--seed", w.seed, "Generator seed")->capture_default_str();
  app.add_option("--workers", cfg.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--records-per-window", w.records_per_window, "Records per window")->capture_default_str();
  app.add_option("--windows", w.num_windows, "Number of windows")->capture_default_str();
  app.add_option("--window-ms", w.window_ms, "Window length in event-time ms")->capture_default_str();
  app.add_option("--bundle-size", w.bundle_size, "Records per bundle")->capture_default_str();
  app.add_option("--disorder-ms", w.disorder_ms, "Maximum out-of-order lag in ms")->capture_default_str();
  app.add_option("--key-cardinality", w.key_cardinality, "Distinct keys (0 = per-pipeline default)")
      ->capture_default_str();
  app.add_option("--fast-capacity-mb", fast_mb, "Fast pool capacity in MiB")->capture_default_str();
  app.add_option("--fast-reserved-frac", reserved_frac, "Fast pool share reserved for urgent work")
      ->capture_default_str();
  app.add_option("--slow-bandwidth-mbps", slow_mbps, "Slow pool bandwidth budget in MiB/s")->capture_default_str();
  app.add_option("--sample-interval-ms", pool.sample_interval_ms, "Monitor interval in event-time ms")
      ->capture_default_str();
  app.add_option("--delta", pool.delta, "Knob step")->capture_default_str();
  app.add_option("--deadband", pool.deadband, "Controller dead band")->capture_default_str();
  app.add_option("--target-delay-ms", w.target_delay_ms, "Target egress delay")->capture_default_str();
  app.add_option("--metrics", cfg.metrics_path, "Metrics CSV path ('-' for stdout)");
  app.add_flag("--early-aggregation", cfg.early_aggregation, "Fold algebraic aggregates per bundle");
  app.add_option("--rate-limit", cfg.rate_limit_records_per_s, "Ingest limit in records per wall second (0 = off)");

  auto* run_cmd = app.add_subcommand("run", "Run a pipeline and report metrics")->fallthrough();
  auto* verify_cmd = app.add_subcommand("verify", "Compare engine output with the reference interpreter")
                         ->fallthrough();
  verify_cmd->add_flag("--inject-comparator-fault", cfg.inject_comparator_fault)->group("");
  auto* micro_cmd = app.add_subcommand("microbench", "Time a grouping primitive")->fallthrough();
  micro_cmd->add_option("--kind", cfg.micro_kind, "sort, merge, hash_groupby or keyswap")->capture_default_str();
  micro_cmd->add_option("--size", cfg.micro_size, "Number of records")->capture_default_str();
  micro_cmd->add_flag("--scan-workers", cfg.scan_workers, "Also run 1, 2, 4, ... workers below --workers");
  auto* knob_cmd = app.add_subcommand("knobtrace", "Trace the memory controller under a scenario")->fallthrough();
  knob_cmd->add_option("--scenario", cfg.scenario, "rising_ingest, delayed_watermarks or static")
      ->capture_default_str();
  knob_cmd->add_option("--delay-windows", cfg.delay_windows, "Withheld watermarks (delayed_watermarks)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (!(fast_mb > 0.0)) throw ConfigError("--fast-capacity-mb must be positive");
    if (!(slow_mbps > 0.0)) throw ConfigError("--slow-bandwidth-mbps must be positive");
    if (pool.sample_interval_ms <= 0) throw ConfigError("--sample-interval-ms must be positive");
    pool.fast_capacity_bytes = static_cast<std::size_t>(fast_mb * (1 << 20));
    pool.with_reserved_fraction(reserved_frac);
    pool.slow_bandwidth_budget_bytes_per_interval = static_cast<std::size_t>(
        slow_mbps * (1 << 20) * static_cast<double>(pool.sample_interval_ms) / 1000.0);
    pool.validate();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  if (run_cmd->parsed()) return cmd_run(cfg, std::cout, std::cerr);
  if (verify_cmd->parsed()) return cmd_verify(cfg, std::cout, std::cerr);
  if (micro_cmd->parsed()) return cmd_microbench(cfg, std::cout, std::cerr);
  if (knob_cmd->parsed()) return cmd_knobtrace(cfg, std::cout, std::cerr);
  return kExitConfig;
}
