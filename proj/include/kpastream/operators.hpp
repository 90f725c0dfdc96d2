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

// Compound operators built from the KPA primitives. Bundle-scoped stages
// turn one ingested bundle into per-pane KPAs (or rows on the narrow-schema
// path); a WindowOperator keeps the per-window state of the terminal
// grouping operator and produces a window's output when it closes.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <vector>

#include "kpastream/kpa.hpp"
#include "kpastream/pipeline_spec.hpp"
#include "kpastream/planner.hpp"

namespace kpastream {

struct PaneKpa {
  std::int64_t pane = 0;
  Kpa kpa;
};

struct PaneRows {
  std::int64_t pane = 0;
  std::vector<Row> rows;
};

struct BundleStageResult {
  std::vector<PaneKpa> panes;
  std::vector<PaneRows> row_panes;
};

/// Runs the bundle-scoped stages of one input on one bundle.
BundleStageResult run_bundle_stages(ExecContext& ctx, const Pipeline& pipeline, const InputPlan& plan,
                                    const BundleHandle& bundle);

/// FlatMap over a bundle: `copies` copies of every record, in order.
BundleHandle flat_map(ExecContext& ctx, const BundleHandle& bundle, std::size_t copies);

/// Per-pair sampling decision, a pure function of (seed, key, ordinal).
bool sample_keep(const ops::Sample& s, const KeyRef& pair);

class WindowOperator {
 public:
  virtual ~WindowOperator() = default;

  /// Runs the pane stages of `input` on one pane KPA and folds it into the
  /// window state. `seq` is the ingestion order of the source bundle and
  /// fixes the order in which contributions are combined.
  virtual void on_pane(ExecContext& ctx, int input, std::uint64_t seq, PaneKpa pane) = 0;
  virtual void on_rows(ExecContext& ctx, int input, std::uint64_t seq, PaneRows rows);

  /// Produces the window's output and drops its state. An empty result is
  /// an invalid handle. Closing a window twice is an InvariantError.
  virtual BundleHandle on_close(ExecContext& ctx, WindowId window) = 0;

  /// Drops pane state no window from `first_open_pane` on can use.
  virtual void release_panes_before(std::int64_t first_open_pane) = 0;

  /// KPA pairs currently held as window state.
  virtual std::size_t state_pairs() const = 0;

 protected:
  WindowOperator(const Pipeline& pipeline, const Plan& plan);

  /// Pane ids that make up a window, ascending.
  std::vector<std::int64_t> panes_of(WindowId w) const;
  /// Windows (ascending) that contain a pane.
  std::vector<WindowId> windows_of_pane(std::int64_t pane) const;
  void mark_closed(WindowId w);
  /// Applies the KeySwap and Sort stages of the input's pane stage list.
  void run_common_pane_stages(ExecContext& ctx, int input, Kpa& kpa) const;

  const Pipeline& pipeline_;
  const Plan& plan_;
  WindowSpec spec_;
  SchemaPtr out_schema_;

 private:
  std::mutex closed_mu_;
  std::set<WindowId> closed_;
};

/// Builds the operator for the pipeline's terminal.
std::unique_ptr<WindowOperator> make_window_operator(const Pipeline& pipeline, const Plan& plan);

}  // namespace kpastream
