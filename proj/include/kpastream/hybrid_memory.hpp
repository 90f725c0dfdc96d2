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

// Simulated two-tier memory. The fast pool is a capacity-limited stand-in
// for high-bandwidth memory and holds only KPAs; the slow pool is unbounded
// but bandwidth-accounted and holds record bundles. Storage itself lives in
// ordinary host memory; this module does the accounting, placement, bundle
// reference counting and the demand-balance controller.

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <string_view>
#include <unordered_map>

#include "kpastream/model.hpp"

namespace kpastream {

enum class PoolKind { Fast, Slow };
enum class ImpactTag { Urgent, High, Low };
enum class SizeClass { KpaChunk, Bundle, WindowState };

/// Who declared a traffic volume; lets tests check the per-primitive
/// breakdown sums to the pool totals.
enum class TrafficSource {
  Ingest,
  Extract,
  KeySwap,
  Sort,
  Merge,
  Join,
  Partition,
  Selection,
  ReduceInKpa,
  ReduceOutOfKpa,
  Materialize,
  ExternalJoin,
  HashGroupBy,
  RowGroup,
  kCount
};

std::string_view to_string(PoolKind k);
std::string_view to_string(ImpactTag t);
std::string_view to_string(TrafficSource s);

struct PoolConfig {
  std::size_t fast_capacity_bytes = std::size_t{64} << 20;
  std::size_t fast_reserved_urgent_bytes = (std::size_t{64} << 20) / 10;
  std::size_t slow_bandwidth_budget_bytes_per_interval = std::size_t{640} << 10;
  std::int64_t sample_interval_ms = 10;

  double delta = 0.05;
  double deadband = 0.1;
  double headroom_threshold = 0.10;
  /// Share of workers allowed on non-urgent work while both resources are
  /// saturated.
  double max_slow_worker_share = 0.5;

  std::size_t kpa_chunk_bytes = std::size_t{64} << 10;
  std::size_t bundle_slab_bytes = std::size_t{64} << 10;
  std::size_t window_state_bytes = std::size_t{4} << 10;

  std::uint64_t placement_seed = 0x5eed;

  /// Sets the reserved region to `fraction` of the fast capacity.
  PoolConfig& with_reserved_fraction(double fraction);
  void validate() const;
};

struct MemoryMonitorSample {
  std::size_t fast_used_bytes = 0;
  double fast_capacity_fraction = 0.0;
  std::size_t slow_bytes_moved_this_interval = 0;
  double slow_bandwidth_fraction = 0.0;
  /// Bytes still waiting for slow-pool bandwidth after this sample.
  std::size_t slow_backlog_bytes = 0;
};

/// Probabilities of placing a new Low / High KPA in the fast pool.
struct KnobState {
  double k_low = 1.0;
  double k_high = 1.0;
  double delta = 0.05;

  bool operator==(const KnobState&) const = default;
};

/// Pure placement rule. For Urgent, `fast_full` refers to the reserved region.
PoolKind decide_placement(ImpactTag tag, const KnobState& knob, double rng_draw, bool fast_full);

/// One controller step. Capacity pressure moves allocations toward the slow
/// pool, bandwidth pressure toward the fast pool; k_low moves first and
/// k_high only once k_low is pinned and the output delay has headroom.
KnobState update_knob(const KnobState& knob, const MemoryMonitorSample& sample,
                      double delay_headroom_fraction, double deadband = 0.1,
                      double headroom_threshold = 0.10);

class HybridMemory;

/// Accounting handle for one slab-rounded allocation; returns the bytes on
/// destruction.
class Allocation {
 public:
  Allocation() = default;
  Allocation(const Allocation&) = delete;
  Allocation& operator=(const Allocation&) = delete;
  Allocation(Allocation&& o) noexcept { *this = std::move(o); }
  Allocation& operator=(Allocation&& o) noexcept;
  ~Allocation() { reset(); }

  void reset();
  bool valid() const { return owner_ != nullptr; }
  PoolKind kind() const { return kind_; }
  bool reserved() const { return reserved_; }
  std::size_t bytes() const { return bytes_; }

 private:
  friend class HybridMemory;
  Allocation(HybridMemory* owner, PoolKind kind, bool reserved, std::size_t bytes)
      : owner_(owner), kind_(kind), reserved_(reserved), bytes_(bytes) {}

  HybridMemory* owner_ = nullptr;
  PoolKind kind_ = PoolKind::Slow;
  bool reserved_ = false;
  std::size_t bytes_ = 0;
};

/// One reference-count unit on a registered bundle. Copying retains,
/// destruction releases; the bundle is reclaimed when the count reaches 0.
class BundleHandle {
 public:
  BundleHandle() = default;
  BundleHandle(HybridMemory& memory, BundleId id);  // retains
  BundleHandle(const BundleHandle& o);
  BundleHandle& operator=(const BundleHandle& o);
  BundleHandle(BundleHandle&& o) noexcept : memory_(o.memory_), id_(o.id_), bundle_(o.bundle_) {
    o.memory_ = nullptr;
    o.bundle_ = nullptr;
  }
  BundleHandle& operator=(BundleHandle&& o) noexcept;
  ~BundleHandle() { reset(); }

  void reset();
  bool valid() const { return memory_ != nullptr; }
  BundleId id() const { return id_; }
  const Bundle& operator*() const { return *bundle_; }
  const Bundle* operator->() const { return bundle_; }
  const Bundle* get() const { return bundle_; }

 private:
  friend class HybridMemory;
  struct Adopt {};
  BundleHandle(HybridMemory& memory, BundleId id, const Bundle* b, Adopt)
      : memory_(&memory), id_(id), bundle_(b) {}

  HybridMemory* memory_ = nullptr;
  BundleId id_ = 0;
  const Bundle* bundle_ = nullptr;
};

class HybridMemory {
 public:
  explicit HybridMemory(PoolConfig config = {});
  HybridMemory(const HybridMemory&) = delete;
  HybridMemory& operator=(const HybridMemory&) = delete;
  ~HybridMemory();

  const PoolConfig& config() const { return config_; }

  // Slab allocation.
  std::size_t slab_bytes(SizeClass cls) const;
  std::size_t round_to_slab(SizeClass cls, std::size_t bytes) const;
  /// Fast requests fall back to Slow (and count a spill) when the general
  /// fast region lacks room. Slow never fails.
  Allocation alloc(PoolKind kind, SizeClass cls, std::size_t bytes);
  /// Draws from the knob and the rng, then allocates per decide_placement.
  Allocation place(ImpactTag tag, SizeClass cls, std::size_t bytes);

  std::size_t fast_used_bytes() const { return fast_general_used_ + fast_reserved_used_; }
  std::size_t fast_reserved_used_bytes() const { return fast_reserved_used_; }
  std::size_t slow_used_bytes() const { return slow_used_; }
  std::size_t fast_peak_bytes() const { return fast_peak_; }
  std::uint64_t spill_count() const { return spills_; }
  std::uint64_t fast_allocations() const { return fast_allocs_; }
  std::uint64_t slow_allocations() const { return slow_allocs_; }

  // Traffic accounting and monitoring.
  void record_traffic(PoolKind kind, std::size_t bytes, TrafficSource source);
  std::uint64_t traffic_total(PoolKind kind) const;
  std::uint64_t traffic_by_source(PoolKind kind, TrafficSource source) const;
  /// Folds the interval counters into fractions and resets them.
  /// `elapsed_intervals` scales the bandwidth budget when a sample covers
  /// more than one interval. The slow pool serves at most the budget per
  /// interval; the excess is carried into later samples as backlog.
  /// Not thread-safe against itself: one monitor calls it.
  MemoryMonitorSample sample(double elapsed_intervals = 1.0);
  /// Current fractions without resetting anything.
  MemoryMonitorSample peek(double elapsed_intervals = 1.0) const;

  // Record dereference counter (sequential-access contract).
  void add_derefs(std::uint64_t n) { derefs_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t deref_count() const { return derefs_.load(std::memory_order_relaxed); }

  // Knob. Updated by a single controller; read by any worker.
  KnobState knob() const;
  void set_knob(const KnobState& k);

  // Bundles.
  std::unique_ptr<Bundle> new_bundle(SchemaPtr schema);
  /// Seals, charges the slow pool and returns the first reference.
  BundleHandle register_bundle(std::unique_ptr<Bundle> bundle);
  void retain_bundle(BundleId id);
  void release_bundle(BundleId id);
  /// Throws InvariantError for an unknown (reclaimed) id.
  const Bundle& bundle(BundleId id) const;
  std::int64_t refcount(BundleId id) const;  // -1 if absent
  std::size_t live_bundles() const;
  std::map<BundleId, std::int64_t> refcounts() const;

 private:
  friend class Allocation;
  void free_allocation(PoolKind kind, bool reserved, std::size_t bytes);
  bool try_reserve(std::atomic<std::size_t>& used, std::size_t limit, std::size_t bytes);
  double next_draw();
  void note_fast_peak();

  struct BundleEntry {
    std::unique_ptr<Bundle> bundle;
    std::atomic<std::int64_t> rc{0};
    Allocation allocation;
  };

  PoolConfig config_;
  std::atomic<std::size_t> fast_general_used_{0};
  std::atomic<std::size_t> fast_reserved_used_{0};
  std::atomic<std::size_t> slow_used_{0};
  std::atomic<std::size_t> fast_peak_{0};
  std::atomic<std::uint64_t> spills_{0};
  std::atomic<std::uint64_t> fast_allocs_{0};
  std::atomic<std::uint64_t> slow_allocs_{0};

  std::atomic<std::uint64_t> interval_slow_bytes_{0};
  std::uint64_t slow_backlog_bytes_ = 0;
  std::array<std::array<std::atomic<std::uint64_t>, static_cast<std::size_t>(TrafficSource::kCount)>, 2>
      traffic_{};
  std::atomic<std::uint64_t> derefs_{0};

  std::atomic<double> k_low_{1.0};
  std::atomic<double> k_high_{1.0};

  std::mutex rng_mu_;
  std::mt19937_64 rng_;

  mutable std::shared_mutex bundles_mu_;
  std::unordered_map<BundleId, std::unique_ptr<BundleEntry>> bundles_;
  std::atomic<BundleId> next_bundle_id_{1};
};

}  // namespace kpastream
