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

// Deterministic in-process sources: per-window random records with bounded
// disorder, one watermark per window boundary, optional rate schedule and
// withheld watermarks. Streams are produced lazily, a window at a time.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <unordered_map>
#include <vector>

#include "kpastream/model.hpp"
#include "kpastream/pipeline_spec.hpp"

namespace kpastream {

/// Row-major batch of records for one input.
struct RecordBatch {
  std::size_t width = 0;
  std::vector<Value> data;

  std::size_t size() const { return width == 0 ? 0 : data.size() / width; }
  std::span<const Value> row(std::size_t i) const { return {data.data() + i * width, width}; }
};

struct StreamEvent {
  enum class Kind { Records, Watermark };
  Kind kind = Kind::Records;
  int input = 0;
  RecordBatch batch;
  EventTime watermark = 0;
};

class Source {
 public:
  virtual ~Source() = default;
  virtual std::size_t input_count() const = 0;
  virtual std::optional<StreamEvent> next() = 0;
};

/// How column values are drawn.
enum class ColumnRole { Key, Value, Timestamp, Key2 };

struct SourceConfig {
  std::uint64_t seed = 1;
  SchemaPtr schema;
  /// Role per column; empty means column 0 is the key, the timestamp column
  /// is the timestamp and everything else is a value.
  std::vector<ColumnRole> roles;
  std::size_t records_per_window = 10000;
  EventTime window_length_ms = 1000;
  std::size_t num_windows = 20;
  std::size_t bundle_size = 1000;
  EventTime disorder_bound_ms = 0;
  Value key_cardinality = 1000;
  Value key2_cardinality = 1000;
  /// Values are drawn from [0, value_max].
  Value value_max = 1000000;
  /// Multiplier on records_per_window for window i (last entry repeats).
  std::vector<double> rate_schedule;
  /// Watermarks for boundaries of windows [withhold_from, withhold_from + withhold_count)
  /// are not emitted; the next emitted watermark covers them.
  std::size_t withhold_from = 0;
  std::size_t withhold_count = 0;

  void validate() const;
  std::size_t records_in_window(std::size_t w) const;
};

struct YsbConfig {
  std::size_t num_campaigns = 100;
  std::size_t ads_per_campaign = 10;
  double ad_type_pass_fraction = 1.0 / 3.0;
};

/// The seven YSB columns; ad_type 0 is the "view" type the filter keeps.
SchemaPtr ysb_schema();
inline constexpr std::size_t kYsbAdId = 0;
inline constexpr std::size_t kYsbAdType = 1;
inline constexpr std::size_t kYsbEventType = 2;
inline constexpr std::size_t kYsbTs = 3;

/// ad_id -> campaign id; every campaign owns ads_per_campaign ads.
std::shared_ptr<LookupTable> ysb_campaign_table(const YsbConfig& cfg, std::uint64_t seed);

/// Single-input generator.
class GeneratedSource final : public Source {
 public:
  explicit GeneratedSource(SourceConfig cfg, int input = 0);
  /// YSB records. `cfg.schema` is ignored and replaced by ysb_schema().
  GeneratedSource(SourceConfig cfg, YsbConfig ysb, int input = 0);

  std::size_t input_count() const override { return 1; }
  std::optional<StreamEvent> next() override;

  std::size_t records_emitted() const { return emitted_; }

 private:
  struct Pending {
    EventTime arrival;
    std::uint64_t seq;
    Row row;
    bool operator>(const Pending& o) const {
      return arrival != o.arrival ? arrival > o.arrival : seq > o.seq;
    }
  };

  void generate_window(std::size_t w);
  Row make_row(EventTime ts);
  bool emit_due_watermark();
  StreamEvent flush();

  SourceConfig cfg_;
  std::optional<YsbConfig> ysb_;
  int input_;
  std::mt19937_64 rng_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> pending_;
  std::vector<std::size_t> remaining_;  // per window, records not yet emitted
  std::size_t generated_windows_ = 0;
  std::size_t next_boundary_ = 0;  // index of the window whose end is the next watermark
  std::uint64_t seq_ = 0;
  std::size_t emitted_ = 0;
  RecordBatch batch_;
  std::optional<EventTime> queued_watermark_;
  bool done_ = false;
  std::vector<Value> ysb_ads_;
};

/// Interleaves several sources event by event; input ids are rewritten to
/// the position of each source.
class InterleavedSource final : public Source {
 public:
  explicit InterleavedSource(std::vector<std::unique_ptr<Source>> sources);
  std::size_t input_count() const override { return sources_.size(); }
  std::optional<StreamEvent> next() override;

 private:
  std::vector<std::unique_ptr<Source>> sources_;
  std::vector<bool> exhausted_;
  std::size_t turn_ = 0;
};

/// Replays a recorded event list.
class VectorSource final : public Source {
 public:
  VectorSource(std::vector<StreamEvent> events, std::size_t inputs)
      : events_(std::move(events)), inputs_(inputs) {}
  std::size_t input_count() const override { return inputs_; }
  std::optional<StreamEvent> next() override {
    if (pos_ >= events_.size()) return std::nullopt;
    return events_[pos_++];
  }

 private:
  std::vector<StreamEvent> events_;
  std::size_t inputs_;
  std::size_t pos_ = 0;
};

std::vector<StreamEvent> drain(Source& source);

/// Records of each input in arrival order.
std::vector<std::vector<Row>> records_of(const std::vector<StreamEvent>& events, std::size_t inputs);

/// Post-hoc watermark contract scan. Returns the number of violations:
/// a watermark not strictly above the previous one of its input, or a
/// record at or below an earlier watermark of its input.
std::size_t watermark_violations(const std::vector<StreamEvent>& events, std::size_t timestamp_column);

}  // namespace kpastream
