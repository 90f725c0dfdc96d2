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

#include "kpastream/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kpastream/errors.hpp"

namespace kpastream {

void SourceConfig::validate() const {
  if (!schema) throw ConfigError("source needs a schema");
  if (!roles.empty() && roles.size() != schema->column_count()) {
    throw ConfigError("source column roles do not match the schema width");
  }
  if (window_length_ms <= 0) throw ConfigError("window length must be positive");
  if (bundle_size == 0) throw ConfigError("bundle size must be positive");
  if (records_per_window > 0 && bundle_size > records_per_window) {
    throw ConfigError("bundle size exceeds records per window");
  }
  if (disorder_bound_ms < 0 || disorder_bound_ms >= window_length_ms) {
    throw ConfigError("disorder bound must be in [0, window length)");
  }
  if (key_cardinality == 0 || key2_cardinality == 0) throw ConfigError("key cardinality must be positive");
  for (double r : rate_schedule) {
    if (!(r >= 0.0)) throw ConfigError("rate multipliers must be non-negative");
  }
}

std::size_t SourceConfig::records_in_window(std::size_t w) const {
  if (rate_schedule.empty()) return records_per_window;
  const double m = rate_schedule[std::min(w, rate_schedule.size() - 1)];
  return static_cast<std::size_t>(std::llround(static_cast<double>(records_per_window) * m));
}

SchemaPtr ysb_schema() {
  static const SchemaPtr schema = std::make_shared<Schema>(
      std::vector<std::string>{"ad_id", "ad_type", "event_type", "ts", "user_id", "page_id", "ip"}, kYsbTs);
  return schema;
}

std::shared_ptr<LookupTable> ysb_campaign_table(const YsbConfig& cfg, std::uint64_t seed) {
  if (cfg.num_campaigns == 0 || cfg.ads_per_campaign == 0) {
    throw ConfigError("ysb needs at least one campaign and one ad per campaign");
  }
  const std::size_t ads = cfg.num_campaigns * cfg.ads_per_campaign;
  std::vector<std::size_t> slot(ads);
  std::iota(slot.begin(), slot.end(), 0);
  std::mt19937_64 rng(seed ^ 0xca4a16ULL);
  std::shuffle(slot.begin(), slot.end(), rng);
  std::unordered_map<Value, Value> entries;
  entries.reserve(ads);
  for (std::size_t ad = 0; ad < ads; ++ad) entries.emplace(ad, slot[ad] / cfg.ads_per_campaign);
  return std::make_shared<LookupTable>(std::move(entries));
}

GeneratedSource::GeneratedSource(SourceConfig cfg, int input) : cfg_(std::move(cfg)), input_(input) {
  cfg_.validate();
  rng_.seed(cfg_.seed);
  remaining_.assign(cfg_.num_windows, 0);
  batch_.width = cfg_.schema->column_count();
  done_ = cfg_.num_windows == 0;
}

GeneratedSource::GeneratedSource(SourceConfig cfg, YsbConfig ysb, int input) : input_(input) {
  cfg.schema = ysb_schema();
  cfg.roles.clear();
  cfg_ = std::move(cfg);
  cfg_.validate();
  if (!(ysb.ad_type_pass_fraction >= 0.0 && ysb.ad_type_pass_fraction <= 1.0)) {
    throw ConfigError("ad_type pass fraction must be in [0, 1]");
  }
  ysb_ = ysb;
  rng_.seed(cfg_.seed);
  remaining_.assign(cfg_.num_windows, 0);
  batch_.width = cfg_.schema->column_count();
  done_ = cfg_.num_windows == 0;
  ysb_ads_.resize(ysb.num_campaigns * ysb.ads_per_campaign);
  std::iota(ysb_ads_.begin(), ysb_ads_.end(), Value{0});
}

Row GeneratedSource::make_row(EventTime ts) {
  const std::size_t width = cfg_.schema->column_count();
  Row row(width);
  if (ysb_) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    row[kYsbAdId] = ysb_ads_[std::uniform_int_distribution<std::size_t>(0, ysb_ads_.size() - 1)(rng_)];
    row[kYsbAdType] = coin(rng_) < ysb_->ad_type_pass_fraction
                          ? 0
                          : std::uniform_int_distribution<Value>(1, 4)(rng_);
    row[kYsbEventType] = std::uniform_int_distribution<Value>(0, 2)(rng_);
    row[kYsbTs] = static_cast<Value>(ts);
    for (std::size_t c = kYsbTs + 1; c < width; ++c) row[c] = rng_();
    return row;
  }
  const std::size_t ts_col = cfg_.schema->timestamp_column();
  for (std::size_t c = 0; c < width; ++c) {
    ColumnRole role = ColumnRole::Value;
    if (!cfg_.roles.empty()) {
      role = cfg_.roles[c];
    } else if (c == ts_col) {
      role = ColumnRole::Timestamp;
    } else if (c == 0) {
      role = ColumnRole::Key;
    }
    switch (role) {
      case ColumnRole::Key: row[c] = std::uniform_int_distribution<Value>(0, cfg_.key_cardinality - 1)(rng_); break;
      case ColumnRole::Key2:
        row[c] = std::uniform_int_distribution<Value>(0, cfg_.key2_cardinality - 1)(rng_);
        break;
      case ColumnRole::Value: row[c] = std::uniform_int_distribution<Value>(0, cfg_.value_max)(rng_); break;
      case ColumnRole::Timestamp: row[c] = static_cast<Value>(ts); break;
    }
  }
  return row;
}

void GeneratedSource::generate_window(std::size_t w) {
  const std::size_t n = cfg_.records_in_window(w);
  const EventTime start = static_cast<EventTime>(w) * cfg_.window_length_ms;
  std::uniform_int_distribution<EventTime> ts_dist(start, start + cfg_.window_length_ms - 1);
  std::uniform_int_distribution<EventTime> lag(0, cfg_.disorder_bound_ms);
  for (std::size_t i = 0; i < n; ++i) {
    const EventTime ts = ts_dist(rng_);
    const EventTime arrival = cfg_.disorder_bound_ms == 0 ? ts : ts + lag(rng_);
    pending_.push({arrival, seq_++, make_row(ts)});
  }
  remaining_[w] = n;
  ++generated_windows_;
}

bool GeneratedSource::emit_due_watermark() {
  bool due = false;
  while (next_boundary_ < generated_windows_ && remaining_[next_boundary_] == 0) {
    const std::size_t w = next_boundary_++;
    const bool withheld = w >= cfg_.withhold_from && w < cfg_.withhold_from + cfg_.withhold_count;
    if (withheld) continue;
    queued_watermark_ = static_cast<EventTime>(w + 1) * cfg_.window_length_ms - 1;
    due = true;
  }
  return due;
}

StreamEvent GeneratedSource::flush() {
  StreamEvent ev;
  ev.kind = StreamEvent::Kind::Records;
  ev.input = input_;
  ev.batch.width = batch_.width;
  ev.batch.data.swap(batch_.data);
  batch_.data.reserve(cfg_.bundle_size * batch_.width);
  return ev;
}

std::optional<StreamEvent> GeneratedSource::next() {
  while (true) {
    if (queued_watermark_) {
      StreamEvent ev;
      ev.kind = StreamEvent::Kind::Watermark;
      ev.input = input_;
      ev.watermark = *queued_watermark_;
      queued_watermark_.reset();
      return ev;
    }
    if (done_) return std::nullopt;
    while (generated_windows_ < cfg_.num_windows &&
           (pending_.empty() ||
            pending_.top().arrival >= static_cast<EventTime>(generated_windows_) * cfg_.window_length_ms)) {
      generate_window(generated_windows_);
      if (emit_due_watermark() && batch_.size() > 0) return flush();
      if (queued_watermark_) break;
    }
    if (queued_watermark_) continue;
    if (pending_.empty()) {
      done_ = true;
      if (batch_.size() > 0) return flush();
      return std::nullopt;
    }
    Pending p = pending_.top();
    pending_.pop();
    const auto ts = static_cast<EventTime>(p.row[cfg_.schema->timestamp_column()]);
    --remaining_[static_cast<std::size_t>(ts / cfg_.window_length_ms)];
    batch_.data.insert(batch_.data.end(), p.row.begin(), p.row.end());
    ++emitted_;
    if (emit_due_watermark()) {
      if (batch_.size() > 0) return flush();
      continue;
    }
    if (batch_.size() >= cfg_.bundle_size) return flush();
  }
}

InterleavedSource::InterleavedSource(std::vector<std::unique_ptr<Source>> sources)
    : sources_(std::move(sources)), exhausted_(sources_.size(), false) {}

std::optional<StreamEvent> InterleavedSource::next() {
  for (std::size_t tries = 0; tries < sources_.size(); ++tries) {
    const std::size_t i = turn_;
    turn_ = (turn_ + 1) % sources_.size();
    if (exhausted_[i]) continue;
    auto ev = sources_[i]->next();
    if (!ev) {
      exhausted_[i] = true;
      continue;
    }
    ev->input = static_cast<int>(i);
    return ev;
  }
  return std::nullopt;
}

std::vector<StreamEvent> drain(Source& source) {
  std::vector<StreamEvent> out;
  while (auto ev = source.next()) out.push_back(std::move(*ev));
  return out;
}

std::vector<std::vector<Row>> records_of(const std::vector<StreamEvent>& events, std::size_t inputs) {
  std::vector<std::vector<Row>> out(inputs);
  for (const auto& ev : events) {
    if (ev.kind != StreamEvent::Kind::Records) continue;
    for (std::size_t i = 0; i < ev.batch.size(); ++i) {
      auto r = ev.batch.row(i);
      out.at(static_cast<std::size_t>(ev.input)).emplace_back(r.begin(), r.end());
    }
  }
  return out;
}

std::size_t watermark_violations(const std::vector<StreamEvent>& events, std::size_t timestamp_column) {
  std::unordered_map<int, EventTime> last;
  std::size_t violations = 0;
  for (const auto& ev : events) {
    auto it = last.find(ev.input);
    if (ev.kind == StreamEvent::Kind::Watermark) {
      if (it != last.end() && ev.watermark <= it->second) ++violations;
      last[ev.input] = ev.watermark;
      continue;
    }
    if (it == last.end()) continue;
    for (std::size_t i = 0; i < ev.batch.size(); ++i) {
      if (static_cast<EventTime>(ev.batch.row(i)[timestamp_column]) <= it->second) ++violations;
    }
  }
  return violations;
}

}  // namespace kpastream
