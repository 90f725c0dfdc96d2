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

#include "kpastream/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <set>

#include "kpastream/errors.hpp"
#include "kpastream/operators.hpp"

namespace kpastream {

ImpactTag assign_tag(EventTime window_end, EventTime target_watermark, EventTime window_length,
                     int horizon_windows) {
  if (window_due(window_end, target_watermark)) return ImpactTag::Urgent;
  if (window_end <= target_watermark + 1 + horizon_windows * window_length) return ImpactTag::High;
  return ImpactTag::Low;
}

WatermarkTracker::WatermarkTracker(std::size_t sources) : per_source_(sources, kNone) {}

EventTime WatermarkTracker::advance(std::size_t source, EventTime wm) {
  EventTime& cur = per_source_.at(source);
  if (cur != kNone && wm <= cur) {
    throw IngestError("non-monotone watermark on input " + std::to_string(source) + ": " + std::to_string(wm) +
                      " after " + std::to_string(cur));
  }
  cur = wm;
  target_ = *std::min_element(per_source_.begin(), per_source_.end());
  return target_;
}

void WatermarkTracker::finish() {
  std::fill(per_source_.begin(), per_source_.end(), kEndOfStream);
  target_ = kEndOfStream;
}

std::vector<WindowId> due_windows(const std::vector<WindowId>& pending, EventTime target, const WindowSpec& spec) {
  std::vector<WindowId> out;
  for (WindowId w : pending) {
    if (window_due(window_end(w, spec), target)) out.push_back(w);
  }
  std::sort(out.begin(), out.end());
  return out;
}

WorkerPool::WorkerPool(int workers) : workers_(std::max(1, workers)), nonurgent_limit_(std::max(1, workers)) {
  if (inline_mode()) return;
  for (int i = 0; i < workers_; ++i) threads_.emplace_back([this] { loop(); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::submit(ImpactTag tag, std::function<void()> task) {
  if (inline_mode()) {
    task();
    return;
  }
  {
    std::lock_guard lock(mu_);
    queues_[static_cast<int>(tag)].push_back(std::move(task));
  }
  cv_.notify_one();
}

bool WorkerPool::pick(std::function<void()>& task, bool& urgent) {
  if (!queues_[0].empty()) {
    task = std::move(queues_[0].front());
    queues_[0].pop_front();
    urgent = true;
    return true;
  }
  if (running_nonurgent_ >= nonurgent_limit_) return false;
  for (int q = 1; q < 3; ++q) {
    if (!queues_[q].empty()) {
      task = std::move(queues_[q].front());
      queues_[q].pop_front();
      urgent = false;
      return true;
    }
  }
  return false;
}

void WorkerPool::loop() {
  std::unique_lock lock(mu_);
  while (true) {
    std::function<void()> task;
    bool urgent = false;
    cv_.wait(lock, [&] { return stop_ || pick(task, urgent); });
    if (!task) return;
    ++running_;
    if (!urgent) ++running_nonurgent_;
    lock.unlock();
    task();
    task = nullptr;
    lock.lock();
    --running_;
    if (!urgent) --running_nonurgent_;
    cv_.notify_all();
    idle_cv_.notify_all();
  }
}

void WorkerPool::wait_idle() {
  if (inline_mode()) return;
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [&] {
    return running_ == 0 && queues_[0].empty() && queues_[1].empty() && queues_[2].empty();
  });
}

void WorkerPool::wait_queue_below(std::size_t limit) {
  if (inline_mode()) return;
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [&] { return queues_[0].size() + queues_[1].size() + queues_[2].size() < limit; });
}

void WorkerPool::set_nonurgent_limit(int limit) {
  {
    std::lock_guard lock(mu_);
    nonurgent_limit_ = std::max(1, limit);
  }
  cv_.notify_all();
}

std::size_t WorkerPool::queued() const {
  std::lock_guard lock(mu_);
  return queues_[0].size() + queues_[1].size() + queues_[2].size();
}

std::map<WindowId, std::vector<Row>> RunReport::rows() const {
  std::map<WindowId, std::vector<Row>> out;
  for (const auto& o : outputs) {
    if (!o.bundle.valid()) continue;
    auto& rows = out[o.window];
    for (std::size_t i = 0; i < o.bundle->size(); ++i) {
      Row r(o.bundle->schema().column_count());
      o.bundle->copy_record(i, r);
      rows.push_back(std::move(r));
    }
  }
  for (auto& [w, rows] : out) std::sort(rows.begin(), rows.end());
  return out;
}

namespace {

class Engine {
 public:
  Engine(const Pipeline& pipeline, Source& source, const RunOptions& options)
      : pipeline_(pipeline),
        source_(source),
        options_(options),
        spec_(pipeline.window()),
        tracker_(pipeline.inputs.size()) {
    options_.pool.validate();
    if (options_.workers < 1) throw ConfigError("workers must be at least 1");
    if (source.input_count() != pipeline.inputs.size()) {
      throw ConfigError("source provides " + std::to_string(source.input_count()) + " inputs, pipeline needs " +
                        std::to_string(pipeline.inputs.size()));
    }
    report_.memory = std::make_shared<HybridMemory>(options_.pool);
    report_.pipeline = pipeline.name;
    report_.plan = plan(pipeline, PlanOptions{options_.early_aggregation});
    report_.target_delay_ms = pipeline.target_delay_ms;
    op_ = make_window_operator(pipeline_, report_.plan);
    pool_ = std::make_unique<WorkerPool>(options_.workers);
    interval_ = options_.pool.sample_interval_ms;
    next_sample_at_ = interval_;
  }

  RunReport execute() {
    const auto wall_start = std::chrono::steady_clock::now();
    const std::size_t queue_cap =
        options_.max_queued_tasks ? options_.max_queued_tasks : static_cast<std::size_t>(4 * options_.workers);
    while (auto ev = source_.next()) {
      if (aborted()) break;
      if (ev->kind == StreamEvent::Kind::Watermark) {
        on_watermark(*ev);
      } else {
        pool_->wait_queue_below(queue_cap);
        on_records(std::move(*ev));
        throttle_rate(wall_start);
      }
      advance_clock();
      while (paused_ && !aborted()) stall();
    }
    {
      std::lock_guard lock(mu_);
      tracker_.finish();
    }
    close_due();
    pool_->wait_idle();
    take_sample(1.0);
    pool_.reset();
    if (failure_) {
      std::string what = "task failed";
      try {
        std::rethrow_exception(failure_);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      throw RuntimeAbort("run aborted: " + what);
    }
    op_.reset();
    report_.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall_start).count();
    HybridMemory& mem = *report_.memory;
    report_.spill_count = mem.spill_count();
    report_.fast_peak_bytes = mem.fast_peak_bytes();
    report_.derefs = mem.deref_count();
    return std::move(report_);
  }

 private:
  bool aborted() const {
    std::lock_guard lock(fail_mu_);
    return failure_ != nullptr;
  }

  void fail(std::exception_ptr e) {
    std::lock_guard lock(fail_mu_);
    if (!failure_) failure_ = e;
  }

  void throttle_rate(std::chrono::steady_clock::time_point start) {
    if (options_.rate_limit_records_per_s <= 0.0) return;
    const auto due = start + std::chrono::duration<double>(static_cast<double>(report_.records_ingested) /
                                                           options_.rate_limit_records_per_s);
    std::this_thread::sleep_until(due);
  }

  void on_watermark(const StreamEvent& ev) {
    vclock_ = std::max(vclock_.load(), ev.watermark);
    {
      std::lock_guard lock(mu_);
      tracker_.advance(static_cast<std::size_t>(ev.input), ev.watermark);
    }
    close_due();
  }

  void on_records(StreamEvent ev) {
    const std::size_t input = static_cast<std::size_t>(ev.input);
    const SchemaPtr& schema = pipeline_.inputs.at(input);
    if (ev.batch.width != schema->column_count()) {
      throw IngestError("record width " + std::to_string(ev.batch.width) + " does not match input " +
                        std::to_string(input));
    }
    const std::size_t ts_col = schema->timestamp_column();
    HybridMemory& mem = *report_.memory;
    auto bundle = mem.new_bundle(schema);
    bundle->reserve(ev.batch.size());
    std::set<WindowId> windows;
    EventTime max_ts = vclock_.load();
    {
      std::lock_guard lock(mu_);
      const EventTime target = tracker_.target();
      for (std::size_t i = 0; i < ev.batch.size(); ++i) {
        const auto row = ev.batch.row(i);
        const auto ts = static_cast<EventTime>(row[ts_col]);
        const auto wins = assign_windows(ts, spec_);
        if (window_due(window_end(wins.front(), spec_), target)) {
          ++report_.late_records;
          continue;
        }
        bundle->append(row);
        windows.insert(wins.begin(), wins.end());
        max_ts = std::max(max_ts, ts);
      }
    }
    report_.records_ingested += bundle->size();
    mem.record_traffic(PoolKind::Slow, bundle->bytes(), TrafficSource::Ingest);
    if (bundle->empty()) return;
    BundleHandle handle = mem.register_bundle(std::move(bundle));
    const EventTime min_ts = handle->min_timestamp();
    const std::uint64_t seq = next_seq_++;
    ++report_.bundles_ingested;

    ImpactTag tag;
    {
      std::lock_guard lock(mu_);
      for (WindowId w : windows) pending_.insert(w);
      inflight_.insert(min_ts);
      const EventTime target = tracker_.target();
      const EventTime end = window_end(assign_windows(min_ts, spec_).front(), spec_);
      tag = assign_tag(end, target, spec_.length_ms, options_.horizon_windows);
      if (tag == ImpactTag::Urgent && !window_due(end, target)) ++report_.unsound_urgent_tags;
      ++report_.tasks_by_tag[static_cast<std::size_t>(tag)];
    }
    vclock_ = std::max(vclock_.load(), max_ts);

    pool_->submit(tag, [this, handle = std::move(handle), input, seq, min_ts, tag]() mutable {
      if (!aborted()) {
        try {
          ExecContext ctx{*report_.memory, tag, 1};
          auto result = run_bundle_stages(ctx, pipeline_, report_.plan.inputs[input], handle);
          handle.reset();
          for (auto& p : result.panes) op_->on_pane(ctx, static_cast<int>(input), seq, std::move(p));
          for (auto& r : result.row_panes) op_->on_rows(ctx, static_cast<int>(input), seq, std::move(r));
        } catch (...) {
          fail(std::current_exception());
        }
      }
      {
        std::lock_guard lock(mu_);
        inflight_.erase(inflight_.find(min_ts));
      }
      close_due();
    });
  }

  // Closes, in window order, every due window no in-flight task can still
  // contribute to.
  void close_due() {
    std::vector<WindowId> to_close;
    {
      std::lock_guard lock(mu_);
      const EventTime target = tracker_.target();
      while (!pending_.empty()) {
        const WindowId w = *pending_.begin();
        const EventTime end = window_end(w, spec_);
        if (!window_due(end, target)) break;
        if (!inflight_.empty() && *inflight_.begin() < end) break;
        pending_.erase(pending_.begin());
        close_order_.push_back(w);
        to_close.push_back(w);
      }
    }
    for (WindowId w : to_close) {
      pool_->submit(ImpactTag::Urgent, [this, w] {
        BundleHandle out;
        if (!aborted()) {
          try {
            ExecContext ctx{*report_.memory, ImpactTag::Urgent, options_.workers};
            out = op_->on_close(ctx, w);
          } catch (...) {
            fail(std::current_exception());
          }
        }
        externalize(w, std::move(out));
      });
    }
  }

  void externalize(WindowId w, BundleHandle out) {
    std::lock_guard lock(mu_);
    results_.emplace(w, std::move(out));
    while (!close_order_.empty()) {
      auto it = results_.find(close_order_.front());
      if (it == results_.end()) break;
      const WindowId win = it->first;
      const EventTime delay = std::max<EventTime>(0, vclock_.load() - window_end(win, spec_));
      report_.externalized.push_back(win);
      if (it->second.valid()) report_.outputs.push_back({win, std::move(it->second), delay});
      report_.max_egress_delay_ms = std::max(report_.max_egress_delay_ms, delay);
      interval_delay_ = std::max(interval_delay_, delay);
      last_delay_ = delay;
      ++interval_windows_;
      results_.erase(it);
      close_order_.pop_front();
      op_->release_panes_before(floor_div(win, spec_.slide_ms) + 1);
    }
  }

  void advance_clock() {
    const EventTime now = vclock_.load();
    if (now < next_sample_at_) return;
    const EventTime crossed = (now - next_sample_at_) / interval_ + 1;
    next_sample_at_ += crossed * interval_;
    take_sample(static_cast<double>(crossed));
  }

  void stall() {
    pool_->wait_idle();
    vclock_ = vclock_.load() + interval_;
    next_sample_at_ += interval_;
    ++report_.stall_intervals;
    take_sample(1.0);
  }

  void take_sample(double elapsed) {
    HybridMemory& mem = *report_.memory;
    const MemoryMonitorSample s = mem.sample(elapsed);
    EventTime delay;
    std::size_t windows;
    {
      std::lock_guard lock(mu_);
      delay = interval_windows_ > 0 ? interval_delay_ : -1;
      windows = interval_windows_;
      interval_windows_ = 0;
      interval_delay_ = 0;
    }
    const double target_delay = static_cast<double>(std::max<EventTime>(1, pipeline_.target_delay_ms));
    const double headroom = std::clamp(1.0 - static_cast<double>(last_delay_) / target_delay, 0.0, 1.0);
    KnobState knob = mem.knob();
    knob.delta = options_.pool.delta;
    knob = update_knob(knob, s, headroom, options_.pool.deadband, options_.pool.headroom_threshold);
    mem.set_knob(knob);

    const bool saturated = s.fast_capacity_fraction > options_.pause_threshold &&
                           s.slow_bandwidth_fraction > options_.pause_threshold;
    if (!paused_ && saturated) {
      paused_ = true;
      ++report_.pauses;
    } else if (paused_ && (s.fast_capacity_fraction < options_.resume_threshold ||
                           s.slow_bandwidth_fraction < options_.resume_threshold)) {
      paused_ = false;
    }
    const int limit = saturated ? static_cast<int>(std::ceil(options_.pool.max_slow_worker_share *
                                                             static_cast<double>(options_.workers)))
                                : options_.workers;
    pool_->set_nonurgent_limit(limit);

    MetricsRow row;
    row.virtual_ms = vclock_.load();
    row.records_ingested = report_.records_ingested;
    const double span_s = elapsed * static_cast<double>(interval_) / 1000.0;
    row.records_per_s = static_cast<double>(report_.records_ingested - last_records_) / span_s;
    last_records_ = report_.records_ingested;
    row.fast_used_bytes = s.fast_used_bytes;
    row.fast_capacity_fraction = s.fast_capacity_fraction;
    row.slow_bandwidth_fraction = s.slow_bandwidth_fraction;
    row.k_low = knob.k_low;
    row.k_high = knob.k_high;
    row.spill_count = mem.spill_count();
    row.windows_externalized = windows;
    row.egress_delay_ms = delay;
    row.paused = paused_;
    report_.max_sampled_fast_used = std::max(report_.max_sampled_fast_used, s.fast_used_bytes);
    report_.metrics.push_back(row);
  }

  const Pipeline& pipeline_;
  Source& source_;
  RunOptions options_;
  WindowSpec spec_;
  RunReport report_;
  std::unique_ptr<WindowOperator> op_;
  std::unique_ptr<WorkerPool> pool_;

  std::mutex mu_;  // tracker_, pending_, inflight_, close_order_, results_, interval stats
  WatermarkTracker tracker_;
  std::set<WindowId> pending_;
  std::multiset<EventTime> inflight_;
  std::deque<WindowId> close_order_;
  std::map<WindowId, BundleHandle> results_;
  EventTime interval_delay_ = 0;
  std::size_t interval_windows_ = 0;
  EventTime last_delay_ = 0;

  mutable std::mutex fail_mu_;
  std::exception_ptr failure_;

  std::atomic<EventTime> vclock_{0};
  EventTime interval_ = 10;
  EventTime next_sample_at_ = 10;
  std::uint64_t next_seq_ = 0;
  std::uint64_t last_records_ = 0;
  bool paused_ = false;
};

}  // namespace

RunReport run(const Pipeline& pipeline, Source& source, const RunOptions& options) {
  pipeline.validate();
  Engine engine(pipeline, source, options);
  return engine.execute();
}

}  // namespace kpastream
