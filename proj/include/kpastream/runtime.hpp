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

// Pipeline execution. One scheduler (the calling thread) ingests events,
// tags and submits bundle tasks, tracks watermarks, closes windows and
// runs the memory controller; a pool of workers executes tasks by tag
// priority. With one worker every task runs inline on the scheduler, which
// makes a run bit-for-bit reproducible.
//
// The monitor runs on a virtual clock: the largest event time ingested so
// far plus time spent stalled by back-pressure. Samples and knob updates
// happen whenever that clock crosses a sampling interval.

#include <array>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "kpastream/hybrid_memory.hpp"
#include "kpastream/ingest.hpp"
#include "kpastream/pipeline_spec.hpp"
#include "kpastream/planner.hpp"

namespace kpastream {

/// Urgent when the window is due at the target watermark (its last
/// timestamp is at or below it), High within `horizon_windows` windows
/// beyond that, Low otherwise.
ImpactTag assign_tag(EventTime window_end, EventTime target_watermark, EventTime window_length,
                     int horizon_windows = 2);

/// Whether a window is due for closing at `target_watermark`.
inline bool window_due(EventTime window_end, EventTime target_watermark) {
  return window_end <= target_watermark + 1;
}

/// Per-source watermarks and the global target (their minimum).
class WatermarkTracker {
 public:
  static constexpr EventTime kNone = -1;
  static constexpr EventTime kEndOfStream = INT64_MAX - 1;

  explicit WatermarkTracker(std::size_t sources);

  /// Throws IngestError when `wm` does not exceed the source's previous one.
  EventTime advance(std::size_t source, EventTime wm);
  EventTime target() const { return target_; }
  EventTime source_watermark(std::size_t source) const { return per_source_.at(source); }
  void finish();

 private:
  std::vector<EventTime> per_source_;
  EventTime target_ = kNone;
};

/// Window ids (ascending) that are due at `target` among `pending`, which
/// holds windows that received data and are not closed yet.
std::vector<WindowId> due_windows(const std::vector<WindowId>& pending, EventTime target, const WindowSpec& spec);

/// Fixed-size worker pool with Urgent > High > Low priority. With one
/// worker, submit() runs the task inline.
class WorkerPool {
 public:
  explicit WorkerPool(int workers);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int workers() const { return workers_; }
  bool inline_mode() const { return workers_ <= 1; }
  void submit(ImpactTag tag, std::function<void()> task);
  /// Blocks until no task is queued or running.
  void wait_idle();
  /// Blocks while more than `limit` tasks are queued.
  void wait_queue_below(std::size_t limit);
  /// Caps concurrently running non-urgent tasks.
  void set_nonurgent_limit(int limit);
  std::size_t queued() const;

 private:
  void loop();
  bool pick(std::function<void()>& task, bool& urgent);

  int workers_;
  int nonurgent_limit_;
  int running_ = 0;
  int running_nonurgent_ = 0;
  bool stop_ = false;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<std::function<void()>> queues_[3];
  std::vector<std::thread> threads_;
};

struct RunOptions {
  int workers = 1;
  PoolConfig pool;
  int horizon_windows = 2;
  bool early_aggregation = false;
  double pause_threshold = 0.95;
  double resume_threshold = 0.85;
  /// Wall-clock ingestion cap in records per second; 0 disables it.
  double rate_limit_records_per_s = 0.0;
  /// Tasks allowed in the queue before ingestion waits; 0 means 4 per worker.
  std::size_t max_queued_tasks = 0;
};

struct WindowOutput {
  WindowId window = 0;
  BundleHandle bundle;
  /// Virtual clock at externalization minus the window end.
  EventTime egress_delay_ms = 0;
};

/// One monitor sample. Times are on the virtual clock.
struct MetricsRow {
  EventTime virtual_ms = 0;
  std::uint64_t records_ingested = 0;
  double records_per_s = 0.0;
  std::size_t fast_used_bytes = 0;
  double fast_capacity_fraction = 0.0;
  double slow_bandwidth_fraction = 0.0;
  double k_low = 1.0;
  double k_high = 1.0;
  std::uint64_t spill_count = 0;
  std::size_t windows_externalized = 0;
  /// Largest egress delay among windows externalized in this sample, -1 if none.
  EventTime egress_delay_ms = -1;
  bool paused = false;
};

struct RunReport {
  // Declared first so the output handles below are released before it.
  std::shared_ptr<HybridMemory> memory;
  std::string pipeline;
  Plan plan;
  std::vector<WindowOutput> outputs;
  /// Every closed window in externalization order, including empty ones.
  std::vector<WindowId> externalized;
  std::vector<MetricsRow> metrics;

  std::uint64_t records_ingested = 0;
  std::uint64_t bundles_ingested = 0;
  std::uint64_t late_records = 0;
  std::uint64_t spill_count = 0;
  std::size_t fast_peak_bytes = 0;
  std::size_t max_sampled_fast_used = 0;
  std::uint64_t derefs = 0;
  std::uint64_t pauses = 0;
  std::uint64_t stall_intervals = 0;
  std::array<std::uint64_t, 3> tasks_by_tag{};
  std::uint64_t unsound_urgent_tags = 0;
  EventTime max_egress_delay_ms = 0;
  EventTime target_delay_ms = 0;
  double wall_ms = 0.0;

  /// Output rows per window, each window's rows sorted.
  std::map<WindowId, std::vector<Row>> rows() const;
};

/// Throws ConfigError/PlanError for invalid input, IngestError for a
/// misbehaving source and RuntimeAbort when a task fails.
RunReport run(const Pipeline& pipeline, Source& source, const RunOptions& options);

}  // namespace kpastream
