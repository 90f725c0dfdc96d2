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

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "kpastream/errors.hpp"
#include "kpastream/model.hpp"
#include "test_util.hpp"

namespace kpastream {
namespace {

TEST(Schema, RejectsBadTimestampAndDuplicates) {
  EXPECT_THROW(Schema({"a", "b"}, 2), ConfigError);
  EXPECT_THROW(Schema({"a", "a"}, 1), ConfigError);
  EXPECT_THROW(Schema({"ts"}, 0), ConfigError);
  Schema s({"key", "value", "ts"}, 2);
  EXPECT_EQ(s.column_count(), 3u);
  EXPECT_EQ(s.row_bytes(), 24u);
  EXPECT_EQ(s.timestamp_column(), 2u);
}

TEST(Bundle, AppendTracksTimestampsAndWriteBackIsShadowed) {
  HybridMemory mem;
  auto h = testing::make_bundle(mem, testing::kv_schema(), {{1, 10, 50}, {2, 20, 7}, {3, 30, 99}});
  EXPECT_EQ(h->size(), 3u);
  EXPECT_EQ(h->min_timestamp(), 7);
  EXPECT_EQ(h->max_timestamp(), 99);
  h->write_back(1, 0, 42);
  EXPECT_EQ(h->value(1, 0), 42u);
  EXPECT_EQ(h->record(1)[0], 2u);
  EXPECT_TRUE(h->has_write_back(0));
  EXPECT_FALSE(h->has_write_back(1));
}

TEST(Windows, FixedAssignment) {
  const auto spec = WindowSpec::fixed(1000);
  EXPECT_EQ(assign_windows(0, spec), std::vector<WindowId>{0});
  EXPECT_EQ(assign_windows(999, spec), std::vector<WindowId>{0});
  EXPECT_EQ(assign_windows(1000, spec), std::vector<WindowId>{1000});
  EXPECT_EQ(assign_windows(-1, spec), std::vector<WindowId>{-1000});
  EXPECT_EQ(window_end(1000, spec), 2000);
}

TEST(Windows, SlidingAssignment) {
  const auto spec = WindowSpec::sliding(3000, 1000);
  EXPECT_EQ(assign_windows(2500, spec), (std::vector<WindowId>{0, 1000, 2000}));
  EXPECT_EQ(assign_windows(0, spec), (std::vector<WindowId>{-2000, -1000, 0}));
  EXPECT_THROW(WindowSpec::sliding(3000, 700).validate(), ConfigError);
  EXPECT_THROW(WindowSpec::sliding(1000, 2000).validate(), ConfigError);
}

TEST(Windows, PaneUnionMatchesAssignment) {
  std::mt19937_64 rng(11);
  for (const auto spec : {WindowSpec::fixed(1000), WindowSpec::sliding(4000, 1000), WindowSpec::sliding(600, 200)}) {
    for (int i = 0; i < 10000; ++i) {
      const auto t = static_cast<EventTime>(rng() % 100000) - 5000;
      const auto windows = assign_windows(t, spec);
      // Brute force: every slide-aligned start s with s <= t < s + length.
      std::vector<WindowId> expected;
      for (EventTime s = (t / spec.slide_ms - 10) * spec.slide_ms; s <= t + spec.slide_ms; s += spec.slide_ms) {
        if (s <= t && t < s + spec.length_ms) expected.push_back(s);
      }
      ASSERT_EQ(windows, expected) << "t=" << t;
      // The pane of t lies inside every window it belongs to.
      const auto pane = pane_of(t, spec);
      for (WindowId w : windows) {
        ASSERT_GE(pane * spec.slide_ms, w);
        ASSERT_LT(pane * spec.slide_ms, window_end(w, spec));
      }
    }
  }
}

TEST(FloorDiv, NegativeOperands) {
  EXPECT_EQ(floor_div(-1, 1000), -1);
  EXPECT_EQ(floor_div(-1000, 1000), -1);
  EXPECT_EQ(floor_div(1999, 1000), 1);
}

}  // namespace
}  // namespace kpastream
