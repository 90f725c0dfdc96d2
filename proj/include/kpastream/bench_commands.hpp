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

// Implementation of the kpabench subcommands. Each returns a process exit
// code: 0 ok, 1 config error, 2 runtime abort, 3 verification mismatch.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "kpastream/benchmarks.hpp"
#include "kpastream/hybrid_memory.hpp"
#include "kpastream/runtime.hpp"

namespace kpastream::bench {

enum ExitCode { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2, kExitMismatch = 3 };

struct BenchConfig {
  std::string pipeline = "avg_per_key";
  WorkloadParams workload;
  PoolConfig pool;
  int workers = 1;
  bool early_aggregation = false;
  double rate_limit_records_per_s = 0.0;
  /// CSV destination; empty writes nothing (run) or stdout (knobtrace).
  std::string metrics_path;

  bool inject_comparator_fault = false;

  std::string micro_kind = "sort";
  std::size_t micro_size = 1000000;
  bool scan_workers = false;

  std::string scenario = "rising_ingest";
  std::size_t delay_windows = 3;
};

/// Column names of the metrics CSV, in order.
const std::vector<std::string>& metrics_columns();
/// Header, one "interval" row per monitor sample, then one "summary" row.
void write_metrics_csv(const RunReport& report, std::ostream& out);

int cmd_run(const BenchConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_verify(const BenchConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_microbench(const BenchConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_knobtrace(const BenchConfig& cfg, std::ostream& out, std::ostream& err);

struct VerifyResult {
  bool match = false;
  std::size_t windows = 0;
  std::size_t rows = 0;
  std::size_t watermark_violations = 0;
  std::string diagnostic;
  RunReport report;
};

/// Runs engine and oracle over the same generated stream.
VerifyResult verify(const Benchmark& benchmark, const RunOptions& options);

struct MicrobenchResult {
  std::string kind;
  std::size_t size = 0;
  int workers = 1;
  double seconds = 0.0;
  double records_per_s = 0.0;
  std::uint64_t fast_bytes = 0;
  std::uint64_t slow_bytes = 0;
  /// hash_groupby only: hash and sort paths produced the same rows.
  bool outputs_agree = true;
};

MicrobenchResult microbench(const std::string& kind, std::size_t size, int workers, std::uint64_t seed);

struct Experiment {
  Benchmark benchmark;
  RunOptions options;
  /// Windows whose watermarks are withheld (delayed_watermarks only).
  std::size_t delay_from = 0;
  std::size_t delay_windows = 0;
};

/// Scenarios: rising_ingest, delayed_watermarks, static. Throws ConfigError
/// for anything else.
Experiment knobtrace_experiment(const std::string& scenario, const BenchConfig& cfg);

}  // namespace kpastream::bench
