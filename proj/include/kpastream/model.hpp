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

// Core vocabulary shared by the engine and the reference interpreter:
// schemas, bundles of fixed-width records, record references, windows.

#include <atomic>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace kpastream {

using Value = std::uint64_t;
/// Event time in milliseconds. Signed so that sliding windows which start
/// before t=0 keep their natural identifiers.
using EventTime = std::int64_t;
/// A window is identified by its start time.
using WindowId = std::int64_t;
using BundleId = std::uint32_t;

class Schema {
 public:
  Schema(std::vector<std::string> column_names, std::size_t timestamp_column);

  std::size_t column_count() const { return names_.size(); }
  const std::vector<std::string>& column_names() const { return names_; }
  const std::string& column_name(std::size_t i) const { return names_.at(i); }
  std::size_t timestamp_column() const { return timestamp_column_; }
  std::size_t row_bytes() const { return names_.size() * sizeof(Value); }

  /// Throws ConfigError when the column does not exist.
  std::size_t index_of(const std::string& name) const;
  bool has_column(std::size_t i) const { return i < names_.size(); }

  bool operator==(const Schema&) const = default;

 private:
  std::vector<std::string> names_;
  std::size_t timestamp_column_;
};

using SchemaPtr = std::shared_ptr<const Schema>;

/// A row as an owned value, used at the edges (ingest, oracle, results).
using Row = std::vector<Value>;

/// Location of one record: the bundle it lives in and its position there.
/// Packs into 64 bits so a key/reference pair is 16 bytes.
struct RecordRef {
  BundleId bundle = 0;
  std::uint32_t ordinal = 0;

  friend auto operator<=>(const RecordRef&, const RecordRef&) = default;
};
static_assert(sizeof(RecordRef) == 8);

/// One KPA entry: a resident key and the record it was taken from.
struct KeyRef {
  Value key = 0;
  RecordRef ref;

  friend bool operator==(const KeyRef&, const KeyRef&) = default;
};
static_assert(sizeof(KeyRef) == 16);

/// Row-major batch of records. Appends are allowed until seal(); after that
/// the record content is immutable. Write-back of in-place modified KPA
/// keys lands in a per-column shadow store and is visible through value().
class Bundle {
 public:
  Bundle(BundleId id, SchemaPtr schema);
  Bundle(const Bundle&) = delete;
  Bundle& operator=(const Bundle&) = delete;
  ~Bundle();

  BundleId id() const { return id_; }
  const Schema& schema() const { return *schema_; }
  const SchemaPtr& schema_ptr() const { return schema_; }

  void reserve(std::size_t records);
  void append(std::span<const Value> record);
  void seal();
  bool sealed() const { return sealed_; }

  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::size_t bytes() const { return data_.size() * sizeof(Value); }

  /// Raw stored record, ignoring write-back.
  std::span<const Value> record(std::size_t ordinal) const;
  /// Column value including any written-back key.
  Value value(std::size_t ordinal, std::size_t column) const;
  /// Copies the (written-back) record into `out`.
  void copy_record(std::size_t ordinal, std::span<Value> out) const;

  /// Shadow-store write; leaves the sealed record content untouched.
  void write_back(std::size_t ordinal, std::size_t column, Value v) const;
  bool has_write_back(std::size_t column) const;

  EventTime min_timestamp() const { return min_ts_; }
  EventTime max_timestamp() const { return max_ts_; }

 private:
  BundleId id_;
  SchemaPtr schema_;
  std::vector<Value> data_;
  std::size_t count_ = 0;
  bool sealed_ = false;
  EventTime min_ts_ = 0;
  EventTime max_ts_ = 0;

  std::unique_ptr<std::atomic<Value*>[]> shadow_;
  mutable std::vector<std::unique_ptr<Value[]>> shadow_storage_;
  mutable std::mutex shadow_mu_;
};

enum class WindowKind { Fixed, Sliding };

struct WindowSpec {
  WindowKind kind = WindowKind::Fixed;
  EventTime length_ms = 1000;
  EventTime slide_ms = 1000;

  static WindowSpec fixed(EventTime length_ms);
  static WindowSpec sliding(EventTime length_ms, EventTime slide_ms);

  /// Throws ConfigError. Sliding windows require slide | length so a window
  /// is an exact union of panes.
  void validate() const;
  std::size_t panes_per_window() const { return static_cast<std::size_t>(length_ms / slide_ms); }

  bool operator==(const WindowSpec&) const = default;
};

struct Watermark {
  EventTime timestamp_ms = 0;
};

inline EventTime floor_div(EventTime a, EventTime b) {
  EventTime q = a / b;
  return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}

/// Start times of every window containing `t`, ascending.
std::vector<WindowId> assign_windows(EventTime t, const WindowSpec& spec);

/// floor(t / slide).
std::int64_t pane_of(EventTime t, const WindowSpec& spec);

inline EventTime window_end(WindowId start, const WindowSpec& spec) { return start + spec.length_ms; }

}  // namespace kpastream
