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

#include "kpastream/hybrid_memory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kpastream/errors.hpp"

namespace kpastream {

namespace {

// Knob values live on a Δ grid; snap accumulated rounding error so that
// 1 - 20 * 0.05 is exactly 0.
double snap(double v) {
  v = std::clamp(v, 0.0, 1.0);
  if (v < 1e-9) return 0.0;
  if (v > 1.0 - 1e-9) return 1.0;
  return v;
}

std::size_t idx(PoolKind k) { return k == PoolKind::Fast ? 0 : 1; }

}  // namespace

std::string_view to_string(PoolKind k) { return k == PoolKind::Fast ? "fast" : "slow"; }

std::string_view to_string(ImpactTag t) {
  switch (t) {
    case ImpactTag::Urgent: return "urgent";
    case ImpactTag::High: return "high";
    case ImpactTag::Low: return "low";
  }
  return "?";
}

std::string_view to_string(TrafficSource s) {
  static constexpr std::string_view names[] = {
      "ingest", "extract", "key_swap", "sort", "merge", "join", "partition",
      "selection", "reduce_in_kpa", "reduce_out_of_kpa", "materialize",
      "external_join", "hash_group_by", "row_group"};
  return names[static_cast<std::size_t>(s)];
}

PoolConfig& PoolConfig::with_reserved_fraction(double fraction) {
  fast_reserved_urgent_bytes =
      static_cast<std::size_t>(static_cast<double>(fast_capacity_bytes) * fraction);
  return *this;
}

void PoolConfig::validate() const {
  if (fast_capacity_bytes == 0) throw ConfigError("fast capacity must be positive");
  if (fast_reserved_urgent_bytes == 0 || fast_reserved_urgent_bytes >= fast_capacity_bytes) {
    throw ConfigError("reserved urgent region must be positive and smaller than fast capacity");
  }
  if (slow_bandwidth_budget_bytes_per_interval == 0) {
    throw ConfigError("slow bandwidth budget must be positive");
  }
  if (sample_interval_ms <= 0) throw ConfigError("sample interval must be positive");
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("knob delta must be in (0, 1]");
  if (!(deadband >= 0.0 && deadband < 1.0)) throw ConfigError("dead-band must be in [0, 1)");
  if (!(max_slow_worker_share > 0.0 && max_slow_worker_share <= 1.0)) {
    throw ConfigError("max slow worker share must be in (0, 1]");
  }
  if (kpa_chunk_bytes == 0 || bundle_slab_bytes == 0 || window_state_bytes == 0) {
    throw ConfigError("slab sizes must be positive");
  }
}

PoolKind decide_placement(ImpactTag tag, const KnobState& knob, double rng_draw, bool fast_full) {
  if (fast_full) return PoolKind::Slow;
  switch (tag) {
    case ImpactTag::Urgent: return PoolKind::Fast;
    case ImpactTag::High: return rng_draw < knob.k_high ? PoolKind::Fast : PoolKind::Slow;
    case ImpactTag::Low: return rng_draw < knob.k_low ? PoolKind::Fast : PoolKind::Slow;
  }
  return PoolKind::Slow;
}

KnobState update_knob(const KnobState& knob, const MemoryMonitorSample& sample,
                      double delay_headroom_fraction, double deadband, double headroom_threshold) {
  KnobState next = knob;
  const double diff = sample.fast_capacity_fraction - sample.slow_bandwidth_fraction;
  const bool headroom = delay_headroom_fraction >= headroom_threshold;
  if (diff > deadband) {
    if (knob.k_low > 0.0) {
      next.k_low = snap(knob.k_low - knob.delta);
    } else if (headroom) {
      next.k_high = snap(knob.k_high - knob.delta);
    }
  } else if (-diff > deadband) {
    if (knob.k_low < 1.0) {
      next.k_low = snap(knob.k_low + knob.delta);
    } else if (headroom) {
      next.k_high = snap(knob.k_high + knob.delta);
    }
  }
  return next;
}

Allocation& Allocation::operator=(Allocation&& o) noexcept {
  if (this != &o) {
    reset();
    owner_ = o.owner_;
    kind_ = o.kind_;
    reserved_ = o.reserved_;
    bytes_ = o.bytes_;
    o.owner_ = nullptr;
    o.bytes_ = 0;
  }
  return *this;
}

void Allocation::reset() {
  if (owner_ != nullptr) {
    owner_->free_allocation(kind_, reserved_, bytes_);
    owner_ = nullptr;
    bytes_ = 0;
  }
}

BundleHandle::BundleHandle(HybridMemory& memory, BundleId id)
    : memory_(&memory), id_(id), bundle_(&memory.bundle(id)) {
  memory.retain_bundle(id);
}

BundleHandle::BundleHandle(const BundleHandle& o) : memory_(o.memory_), id_(o.id_), bundle_(o.bundle_) {
  if (memory_ != nullptr) memory_->retain_bundle(id_);
}

BundleHandle& BundleHandle::operator=(const BundleHandle& o) {
  if (this != &o) {
    BundleHandle tmp(o);
    *this = std::move(tmp);
  }
  return *this;
}

BundleHandle& BundleHandle::operator=(BundleHandle&& o) noexcept {
  if (this != &o) {
    reset();
    memory_ = o.memory_;
    id_ = o.id_;
    bundle_ = o.bundle_;
    o.memory_ = nullptr;
    o.bundle_ = nullptr;
  }
  return *this;
}

void BundleHandle::reset() {
  if (memory_ != nullptr) {
    HybridMemory* m = memory_;
    memory_ = nullptr;
    bundle_ = nullptr;
    m->release_bundle(id_);
  }
}

HybridMemory::HybridMemory(PoolConfig config) : config_(config), rng_(config.placement_seed) {
  config_.validate();
  for (auto& per_pool : traffic_) {
    for (auto& c : per_pool) c.store(0);
  }
}

HybridMemory::~HybridMemory() {
  // Entries own allocations that point back here; drop them first.
  std::unique_lock lock(bundles_mu_);
  bundles_.clear();
}

std::size_t HybridMemory::slab_bytes(SizeClass cls) const {
  switch (cls) {
    case SizeClass::KpaChunk: return config_.kpa_chunk_bytes;
    case SizeClass::Bundle: return config_.bundle_slab_bytes;
    case SizeClass::WindowState: return config_.window_state_bytes;
  }
  return config_.kpa_chunk_bytes;
}

std::size_t HybridMemory::round_to_slab(SizeClass cls, std::size_t bytes) const {
  const std::size_t slab = slab_bytes(cls);
  const std::size_t n = std::max<std::size_t>(1, (bytes + slab - 1) / slab);
  return n * slab;
}

bool HybridMemory::try_reserve(std::atomic<std::size_t>& used, std::size_t limit, std::size_t bytes) {
  std::size_t cur = used.load(std::memory_order_relaxed);
  do {
    if (cur + bytes > limit) return false;
  } while (!used.compare_exchange_weak(cur, cur + bytes, std::memory_order_relaxed));
  return true;
}

void HybridMemory::note_fast_peak() {
  const std::size_t now = fast_used_bytes();
  std::size_t peak = fast_peak_.load(std::memory_order_relaxed);
  while (now > peak && !fast_peak_.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
  }
}

Allocation HybridMemory::alloc(PoolKind kind, SizeClass cls, std::size_t bytes) {
  const std::size_t rounded = round_to_slab(cls, bytes);
  if (kind == PoolKind::Fast) {
    const std::size_t general = config_.fast_capacity_bytes - config_.fast_reserved_urgent_bytes;
    if (try_reserve(fast_general_used_, general, rounded)) {
      ++fast_allocs_;
      note_fast_peak();
      return Allocation(this, PoolKind::Fast, false, rounded);
    }
    ++spills_;
  }
  slow_used_.fetch_add(rounded, std::memory_order_relaxed);
  ++slow_allocs_;
  return Allocation(this, PoolKind::Slow, false, rounded);
}

double HybridMemory::next_draw() {
  std::lock_guard lock(rng_mu_);
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
}

Allocation HybridMemory::place(ImpactTag tag, SizeClass cls, std::size_t bytes) {
  const std::size_t rounded = round_to_slab(cls, bytes);
  const KnobState k = knob();
  const double draw = next_draw();
  const bool urgent = tag == ImpactTag::Urgent;
  const std::size_t general = config_.fast_capacity_bytes - config_.fast_reserved_urgent_bytes;
  const bool full = urgent ? fast_reserved_used_.load() + rounded > config_.fast_reserved_urgent_bytes
                           : fast_general_used_.load() + rounded > general;
  const bool wanted_fast = decide_placement(tag, k, draw, false) == PoolKind::Fast;
  if (decide_placement(tag, k, draw, full) == PoolKind::Fast) {
    auto& used = urgent ? fast_reserved_used_ : fast_general_used_;
    const std::size_t limit = urgent ? config_.fast_reserved_urgent_bytes : general;
    if (try_reserve(used, limit, rounded)) {
      ++fast_allocs_;
      note_fast_peak();
      return Allocation(this, PoolKind::Fast, urgent, rounded);
    }
  }
  if (wanted_fast) ++spills_;
  slow_used_.fetch_add(rounded, std::memory_order_relaxed);
  ++slow_allocs_;
  return Allocation(this, PoolKind::Slow, false, rounded);
}

void HybridMemory::free_allocation(PoolKind kind, bool reserved, std::size_t bytes) {
  if (kind == PoolKind::Slow) {
    slow_used_.fetch_sub(bytes, std::memory_order_relaxed);
  } else if (reserved) {
    fast_reserved_used_.fetch_sub(bytes, std::memory_order_relaxed);
  } else {
    fast_general_used_.fetch_sub(bytes, std::memory_order_relaxed);
  }
}

void HybridMemory::record_traffic(PoolKind kind, std::size_t bytes, TrafficSource source) {
  traffic_[idx(kind)][static_cast<std::size_t>(source)].fetch_add(bytes, std::memory_order_relaxed);
  if (kind == PoolKind::Slow) interval_slow_bytes_.fetch_add(bytes, std::memory_order_relaxed);
}

std::uint64_t HybridMemory::traffic_total(PoolKind kind) const {
  std::uint64_t total = 0;
  for (const auto& c : traffic_[idx(kind)]) total += c.load(std::memory_order_relaxed);
  return total;
}

std::uint64_t HybridMemory::traffic_by_source(PoolKind kind, TrafficSource source) const {
  return traffic_[idx(kind)][static_cast<std::size_t>(source)].load(std::memory_order_relaxed);
}

MemoryMonitorSample HybridMemory::peek(double elapsed_intervals) const {
  MemoryMonitorSample s;
  s.fast_used_bytes = fast_used_bytes();
  s.fast_capacity_fraction = std::clamp(
      static_cast<double>(s.fast_used_bytes) / static_cast<double>(config_.fast_capacity_bytes), 0.0, 1.0);
  const std::uint64_t demand = slow_backlog_bytes_ + interval_slow_bytes_.load(std::memory_order_relaxed);
  const auto budget = static_cast<std::uint64_t>(
      static_cast<double>(config_.slow_bandwidth_budget_bytes_per_interval) * std::max(elapsed_intervals, 1e-9));
  const std::uint64_t served = std::min(demand, std::max<std::uint64_t>(budget, 1));
  s.slow_bytes_moved_this_interval = served;
  s.slow_backlog_bytes = demand - served;
  s.slow_bandwidth_fraction =
      std::clamp(static_cast<double>(served) / static_cast<double>(std::max<std::uint64_t>(budget, 1)), 0.0, 1.0);
  return s;
}

MemoryMonitorSample HybridMemory::sample(double elapsed_intervals) {
  const std::uint64_t fresh = interval_slow_bytes_.exchange(0, std::memory_order_relaxed);
  slow_backlog_bytes_ += fresh;
  MemoryMonitorSample s = peek(elapsed_intervals);
  slow_backlog_bytes_ = s.slow_backlog_bytes;
  return s;
}

KnobState HybridMemory::knob() const {
  return KnobState{k_low_.load(std::memory_order_relaxed), k_high_.load(std::memory_order_relaxed),
                   config_.delta};
}

void HybridMemory::set_knob(const KnobState& k) {
  k_low_.store(snap(k.k_low), std::memory_order_relaxed);
  k_high_.store(snap(k.k_high), std::memory_order_relaxed);
}

std::unique_ptr<Bundle> HybridMemory::new_bundle(SchemaPtr schema) {
  const BundleId id = next_bundle_id_.fetch_add(1, std::memory_order_relaxed);
  if (id == 0) throw InvariantError("bundle id space exhausted");
  return std::make_unique<Bundle>(id, std::move(schema));
}

BundleHandle HybridMemory::register_bundle(std::unique_ptr<Bundle> bundle) {
  bundle->seal();
  auto entry = std::make_unique<BundleEntry>();
  entry->allocation = alloc(PoolKind::Slow, SizeClass::Bundle, bundle->bytes());
  entry->rc.store(1);
  const BundleId id = bundle->id();
  const Bundle* raw = bundle.get();
  entry->bundle = std::move(bundle);
  {
    std::unique_lock lock(bundles_mu_);
    if (!bundles_.emplace(id, std::move(entry)).second) {
      throw InvariantError("bundle id " + std::to_string(id) + " registered twice");
    }
  }
  return BundleHandle(*this, id, raw, BundleHandle::Adopt{});
}

void HybridMemory::retain_bundle(BundleId id) {
  std::shared_lock lock(bundles_mu_);
  auto it = bundles_.find(id);
  if (it == bundles_.end()) throw InvariantError("retain of unknown bundle " + std::to_string(id));
  if (it->second->rc.fetch_add(1) <= 0) {
    throw InvariantError("retain of reclaimed bundle " + std::to_string(id));
  }
}

void HybridMemory::release_bundle(BundleId id) {
  std::unique_ptr<BundleEntry> dead;
  {
    std::shared_lock lock(bundles_mu_);
    auto it = bundles_.find(id);
    if (it == bundles_.end()) throw InvariantError("release of unknown bundle " + std::to_string(id));
    const std::int64_t before = it->second->rc.fetch_sub(1);
    if (before <= 0) {
      it->second->rc.fetch_add(1);
      throw InvariantError("refcount underflow on bundle " + std::to_string(id));
    }
    if (before != 1) return;
  }
  std::unique_lock lock(bundles_mu_);
  auto it = bundles_.find(id);
  if (it != bundles_.end() && it->second->rc.load() == 0) {
    dead = std::move(it->second);
    bundles_.erase(it);
  }
}

const Bundle& HybridMemory::bundle(BundleId id) const {
  std::shared_lock lock(bundles_mu_);
  auto it = bundles_.find(id);
  if (it == bundles_.end()) throw InvariantError("dangling reference to bundle " + std::to_string(id));
  return *it->second->bundle;
}

std::int64_t HybridMemory::refcount(BundleId id) const {
  std::shared_lock lock(bundles_mu_);
  auto it = bundles_.find(id);
  return it == bundles_.end() ? -1 : it->second->rc.load();
}

std::size_t HybridMemory::live_bundles() const {
  std::shared_lock lock(bundles_mu_);
  return bundles_.size();
}

std::map<BundleId, std::int64_t> HybridMemory::refcounts() const {
  std::shared_lock lock(bundles_mu_);
  std::map<BundleId, std::int64_t> out;
  for (const auto& [id, e] : bundles_) out.emplace(id, e->rc.load());
  return out;
}

}  // namespace kpastream
