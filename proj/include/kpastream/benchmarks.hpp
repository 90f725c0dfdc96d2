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

// The nine benchmark pipelines and their generated inputs.

#include <array>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "kpastream/ingest.hpp"
#include "kpastream/pipeline_spec.hpp"

namespace kpastream::bench {

inline constexpr std::array<std::string_view, 9> kBenchmarkNames = {
    "topk_per_key", "sum_per_key",   "median_per_key", "avg_per_key", "avg_all",
    "distinct_per_key", "temporal_join", "windowed_filter", "ysb"};

bool is_benchmark(std::string_view name);

struct WorkloadParams {
  std::uint64_t seed = 1;
  std::size_t records_per_window = 100000;
  std::size_t num_windows = 20;
  EventTime window_ms = 1000;
  /// Clamped to records_per_window.
  std::size_t bundle_size = 1000;
  EventTime disorder_ms = 0;
  /// 0 picks a per-benchmark default (see default_key_cardinality).
  Value key_cardinality = 0;
  EventTime target_delay_ms = 1000;
  std::vector<double> rate_schedule;
  std::size_t withhold_from = 0;
  std::size_t withhold_count = 0;
  YsbConfig ysb;
};

/// 1000 keys per window, or one key per record for the temporal join so
/// its output stays linear in the input.
Value default_key_cardinality(std::string_view name, std::size_t records_per_window);

struct Benchmark {
  Pipeline pipeline;
  std::vector<SourceConfig> sources;
  bool ysb = false;
  YsbConfig ysb_config;
};

/// Throws ConfigError for unknown names or invalid parameters.
Benchmark make_benchmark(std::string_view name, const WorkloadParams& params);

/// Fresh source for the benchmark's inputs (interleaved when there are two).
std::unique_ptr<Source> make_source(const Benchmark& benchmark);

}  // namespace kpastream::bench
