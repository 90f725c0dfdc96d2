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

#include "kpastream/model.hpp"

#include <algorithm>
#include <set>

#include "kpastream/errors.hpp"

namespace kpastream {

Schema::Schema(std::vector<std::string> column_names, std::size_t timestamp_column)
    : names_(std::move(column_names)), timestamp_column_(timestamp_column) {
  if (names_.size() < 2) {
    throw ConfigError("schema needs a timestamp plus at least one data column");
  }
  if (timestamp_column_ >= names_.size()) {
    throw ConfigError("timestamp column index out of range");
  }
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw ConfigError("empty column name");
    if (!seen.insert(n).second) throw ConfigError("duplicate column name '" + n + "'");
  }
}

std::size_t Schema::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ConfigError("no column named '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

Bundle::Bundle(BundleId id, SchemaPtr schema)
    : id_(id),
      schema_(std::move(schema)),
      shadow_(new std::atomic<Value*>[schema_->column_count()]),
      shadow_storage_(schema_->column_count()) {
  for (std::size_t c = 0; c < schema_->column_count(); ++c) shadow_[c].store(nullptr);
}

Bundle::~Bundle() = default;

void Bundle::reserve(std::size_t records) { data_.reserve(records * schema_->column_count()); }

void Bundle::append(std::span<const Value> record) {
  if (sealed_) throw InvariantError("append to sealed bundle " + std::to_string(id_));
  if (record.size() != schema_->column_count()) {
    throw InvariantError("record width does not match schema");
  }
  data_.insert(data_.end(), record.begin(), record.end());
  ++count_;
}

void Bundle::seal() {
  if (sealed_) return;
  sealed_ = true;
  if (count_ == 0) return;
  const std::size_t ts = schema_->timestamp_column();
  const std::size_t w = schema_->column_count();
  EventTime lo = static_cast<EventTime>(data_[ts]);
  EventTime hi = lo;
  for (std::size_t i = 1; i < count_; ++i) {
    auto t = static_cast<EventTime>(data_[i * w + ts]);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  min_ts_ = lo;
  max_ts_ = hi;
}

std::span<const Value> Bundle::record(std::size_t ordinal) const {
  const std::size_t w = schema_->column_count();
  return {data_.data() + ordinal * w, w};
}

Value Bundle::value(std::size_t ordinal, std::size_t column) const {
  if (const Value* s = shadow_[column].load(std::memory_order_acquire)) return s[ordinal];
  return data_[ordinal * schema_->column_count() + column];
}

void Bundle::copy_record(std::size_t ordinal, std::span<Value> out) const {
  const std::size_t w = schema_->column_count();
  for (std::size_t c = 0; c < w; ++c) out[c] = value(ordinal, c);
}

void Bundle::write_back(std::size_t ordinal, std::size_t column, Value v) const {
  if (ordinal >= count_ || column >= schema_->column_count()) {
    throw InvariantError("write-back outside bundle bounds");
  }
  Value* s = shadow_[column].load(std::memory_order_acquire);
  if (s == nullptr) {
    std::lock_guard lock(shadow_mu_);
    s = shadow_[column].load(std::memory_order_relaxed);
    if (s == nullptr) {
      const std::size_t w = schema_->column_count();
      auto storage = std::make_unique<Value[]>(count_);
      for (std::size_t i = 0; i < count_; ++i) storage[i] = data_[i * w + column];
      s = storage.get();
      shadow_storage_[column] = std::move(storage);
      shadow_[column].store(s, std::memory_order_release);
    }
  }
  s[ordinal] = v;
}

bool Bundle::has_write_back(std::size_t column) const {
  return shadow_[column].load(std::memory_order_acquire) != nullptr;
}

WindowSpec WindowSpec::fixed(EventTime length_ms) {
  return WindowSpec{WindowKind::Fixed, length_ms, length_ms};
}

WindowSpec WindowSpec::sliding(EventTime length_ms, EventTime slide_ms) {
  return WindowSpec{WindowKind::Sliding, length_ms, slide_ms};
}

void WindowSpec::validate() const {
  if (length_ms <= 0 || slide_ms <= 0) throw ConfigError("window length and slide must be positive");
  if (slide_ms > length_ms) throw ConfigError("window slide exceeds window length");
  if (kind == WindowKind::Fixed && slide_ms != length_ms) {
    throw ConfigError("fixed windows must have slide == length");
  }
  if (length_ms % slide_ms != 0) throw ConfigError("window length must be a multiple of the slide");
}

std::vector<WindowId> assign_windows(EventTime t, const WindowSpec& spec) {
  if (spec.kind == WindowKind::Fixed) {
    return {floor_div(t, spec.length_ms) * spec.length_ms};
  }
  // Starts s = k*slide with s <= t < s + len.
  const EventTime last = floor_div(t, spec.slide_ms);
  const EventTime first = floor_div(t - spec.length_ms, spec.slide_ms) + 1;
  std::vector<WindowId> out;
  out.reserve(static_cast<std::size_t>(last - first + 1));
  for (EventTime k = first; k <= last; ++k) out.push_back(k * spec.slide_ms);
  return out;
}

std::int64_t pane_of(EventTime t, const WindowSpec& spec) { return floor_div(t, spec.slide_ms); }

}  // namespace kpastream
