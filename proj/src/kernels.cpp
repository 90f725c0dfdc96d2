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

#include "kpastream/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <map>

namespace kpastream::kernels {

namespace {

std::atomic<bool> g_comparator_fault{false};

struct ExactKey {
  Value operator()(Value k) const { return k; }
};
struct FaultyKey {
  Value operator()(Value k) const { return k >> 1; }
};

// Stable insertion sort of one block.
template <class Proj>
void sort_block(std::span<KeyRef> block, Proj proj) {
  for (std::size_t i = 1; i < block.size(); ++i) {
    const KeyRef x = block[i];
    const Value kx = proj(x.key);
    std::size_t j = i;
    while (j > 0 && proj(block[j - 1].key) > kx) {
      block[j] = block[j - 1];
      --j;
    }
    block[j] = x;
  }
}

// Stable two-way merge; ties come from `a`.
template <class Proj>
void merge_into(std::span<const KeyRef> a, std::span<const KeyRef> b, KeyRef* out, Proj proj) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (proj(b[j].key) < proj(a[i].key)) {
      *out++ = b[j++];
    } else {
      *out++ = a[i++];
    }
  }
  out = std::copy(a.begin() + static_cast<std::ptrdiff_t>(i), a.end(), out);
  std::copy(b.begin() + static_cast<std::ptrdiff_t>(j), b.end(), out);
}

template <class Proj>
std::size_t split(std::span<const KeyRef> a, std::span<const KeyRef> b, std::size_t d, Proj proj) {
  std::size_t lo = d > b.size() ? d - b.size() : 0;
  std::size_t hi = std::min(d, a.size());
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (proj(a[mid].key) <= proj(b[d - mid - 1].key)) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return lo;
}

// Sorts one chunk: 64-pair blocks, then bottom-up pairwise block merges.
template <class Proj>
void sort_chunk(std::span<KeyRef> data, std::span<KeyRef> scratch, Proj proj) {
  const std::size_t n = data.size();
  for (std::size_t lo = 0; lo < n; lo += kBlockSize) {
    sort_block(data.subspan(lo, std::min(kBlockSize, n - lo)), proj);
  }
  KeyRef* src = data.data();
  KeyRef* dst = scratch.data();
  for (std::size_t width = kBlockSize; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n);
      const std::size_t hi = std::min(lo + 2 * width, n);
      merge_into<Proj>({src + lo, mid - lo}, {src + mid, hi - mid}, dst + lo, proj);
    }
    std::swap(src, dst);
  }
  if (src != data.data()) std::copy(src, src + n, data.data());
}

struct MergeTask {
  const KeyRef* a;
  std::size_t na;
  const KeyRef* b;
  std::size_t nb;
  KeyRef* out;
};

// Appends tasks that merge a and b into out, cut into `slices` pieces along
// the merge path.
template <class Proj>
void slice_merge(std::span<const KeyRef> a, std::span<const KeyRef> b, KeyRef* out, std::size_t slices,
                 Proj proj, std::vector<MergeTask>& tasks) {
  const std::size_t total = a.size() + b.size();
  slices = std::max<std::size_t>(1, std::min(slices, total));
  std::size_t prev_d = 0, prev_i = 0;
  for (std::size_t s = 1; s <= slices; ++s) {
    const std::size_t d = total * s / slices;
    const std::size_t i = s == slices ? a.size() : split(a, b, d, proj);
    const std::size_t j = d - i;
    const std::size_t prev_j = prev_d - prev_i;
    tasks.push_back({a.data() + prev_i, i - prev_i, b.data() + prev_j, j - prev_j, out + prev_d});
    prev_d = d;
    prev_i = i;
  }
}

template <class Proj>
void run_tasks(const std::vector<MergeTask>& tasks, int workers, Proj proj) {
  const auto count = static_cast<std::int64_t>(tasks.size());
#pragma omp parallel for num_threads(workers) schedule(dynamic, 1) if (workers > 1 && count > 1)
  for (std::int64_t t = 0; t < count; ++t) {
    const MergeTask& m = tasks[static_cast<std::size_t>(t)];
    merge_into<Proj>({m.a, m.na}, {m.b, m.nb}, m.out, proj);
  }
}

template <class Proj>
void parallel_sort(std::span<KeyRef> data, int workers, Proj proj) {
  const std::size_t n = data.size();
  if (n < 2) return;
  std::size_t chunks = static_cast<std::size_t>(std::max(workers, 1));
  chunks = std::max<std::size_t>(1, std::min(chunks, n / kBlockSize));
  const int w = static_cast<int>(chunks);
  std::vector<KeyRef> buffer(n);
  std::vector<std::size_t> bounds(chunks + 1);
  for (std::size_t c = 0; c <= chunks; ++c) bounds[c] = n * c / chunks;

  const auto nchunks = static_cast<std::int64_t>(chunks);
#pragma omp parallel for num_threads(w) schedule(static, 1) if (w > 1)
  for (std::int64_t c = 0; c < nchunks; ++c) {
    const auto lo = bounds[static_cast<std::size_t>(c)];
    const auto hi = bounds[static_cast<std::size_t>(c) + 1];
    sort_chunk(data.subspan(lo, hi - lo), std::span<KeyRef>(buffer).subspan(lo, hi - lo), proj);
  }

  // Pairwise merge rounds. Once fewer pairs than workers remain, each merge
  // is sliced along its merge path so every worker keeps a share.
  KeyRef* src = data.data();
  KeyRef* dst = buffer.data();
  std::vector<std::size_t> runs = bounds;
  std::vector<MergeTask> tasks;
  while (runs.size() > 2) {
    tasks.clear();
    std::vector<std::size_t> next{0};
    for (std::size_t r = 0; r + 1 < runs.size(); r += 2) {
      if (r + 2 >= runs.size()) {
        // Odd run out: copied through as a single slice.
        tasks.push_back({src + runs[r], runs[r + 1] - runs[r], src, 0, dst + runs[r]});
        next.push_back(runs[r + 1]);
        continue;
      }
      const std::size_t lo = runs[r], mid = runs[r + 1], hi = runs[r + 2];
      const std::size_t slices = (static_cast<std::size_t>(w) * (hi - lo) + n - 1) / n;
      slice_merge<Proj>({src + lo, mid - lo}, {src + mid, hi - mid}, dst + lo, slices, proj, tasks);
      next.push_back(hi);
    }
    run_tasks(tasks, w, proj);
    runs = std::move(next);
    std::swap(src, dst);
  }
  if (src != data.data()) std::copy(src, src + n, data.data());
}

}  // namespace

void set_comparator_fault(bool on) { g_comparator_fault.store(on); }
bool comparator_fault() { return g_comparator_fault.load(); }

bool is_sorted_pairs(std::span<const KeyRef> pairs) {
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    if (pairs[i].key < pairs[i - 1].key) return false;
  }
  return true;
}

void sort_pairs(std::span<KeyRef> pairs, int workers) {
  if (comparator_fault()) {
    parallel_sort(pairs, workers, FaultyKey{});
  } else {
    parallel_sort(pairs, workers, ExactKey{});
  }
}

std::size_t merge_path_split(std::span<const KeyRef> a, std::span<const KeyRef> b, std::size_t diagonal) {
  return split(a, b, diagonal, ExactKey{});
}

void merge_pairs(std::span<const KeyRef> a, std::span<const KeyRef> b, std::span<KeyRef> out, int workers) {
  const std::size_t total = a.size() + b.size();
  const int w = std::max(1, workers);
  if (w == 1 || total < 2 * kBlockSize) {
    merge_into(a, b, out.data(), ExactKey{});
    return;
  }
  std::vector<MergeTask> tasks;
  slice_merge(a, b, out.data(), static_cast<std::size_t>(w), ExactKey{}, tasks);
  run_tasks(tasks, w, ExactKey{});
}

Partitioned partition_pairs(std::span<const KeyRef> pairs, Value width, int workers) {
  const std::size_t n = pairs.size();
  Partitioned result;
  if (n == 0) return result;
  Value lo_id = pairs[0].key / width, hi_id = lo_id;
  for (const auto& p : pairs) {
    const Value id = p.key / width;
    lo_id = std::min(lo_id, id);
    hi_id = std::max(hi_id, id);
  }
  const std::size_t range = static_cast<std::size_t>(hi_id - lo_id) + 1;
  const int w = std::max(1, workers);
  if (range > (std::size_t{1} << 16) || w == 1 || n < 4096) return serial::partition_pairs(pairs, width);

  // Per-thread histograms over contiguous slices keep scatter order stable.
  std::vector<std::vector<std::size_t>> offsets;
  std::vector<std::vector<KeyRef>> dense(range);
#pragma omp parallel num_threads(w)
  {
    const auto t = static_cast<std::size_t>(omp_get_thread_num());
    const auto nt = static_cast<std::size_t>(omp_get_num_threads());
#pragma omp single
    offsets.assign(nt, std::vector<std::size_t>(range, 0));
    const std::size_t lo = n * t / nt;
    const std::size_t hi = n * (t + 1) / nt;
    for (std::size_t i = lo; i < hi; ++i) ++offsets[t][pairs[i].key / width - lo_id];
#pragma omp barrier
#pragma omp single
    {
      for (std::size_t p = 0; p < range; ++p) {
        std::size_t total = 0;
        for (std::size_t u = 0; u < nt; ++u) {
          const std::size_t c = offsets[u][p];
          offsets[u][p] = total;
          total += c;
        }
        dense[p].resize(total);
      }
    }
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t p = pairs[i].key / width - lo_id;
      dense[p][offsets[t][p]++] = pairs[i];
    }
  }
  for (std::size_t p = 0; p < range; ++p) {
    if (dense[p].empty()) continue;
    result.ids.push_back(static_cast<std::int64_t>(lo_id + p));
    result.parts.push_back(std::move(dense[p]));
  }
  return result;
}

namespace serial {

void sort_pairs(std::span<KeyRef> pairs) {
  std::stable_sort(pairs.begin(), pairs.end(), [](const KeyRef& x, const KeyRef& y) { return x.key < y.key; });
}

void merge_pairs(std::span<const KeyRef> a, std::span<const KeyRef> b, std::span<KeyRef> out) {
  std::merge(a.begin(), a.end(), b.begin(), b.end(), out.begin(),
             [](const KeyRef& x, const KeyRef& y) { return x.key < y.key; });
}

Partitioned partition_pairs(std::span<const KeyRef> pairs, Value width) {
  std::map<Value, std::vector<KeyRef>> groups;
  for (const auto& p : pairs) groups[p.key / width].push_back(p);
  Partitioned result;
  for (auto& [id, part] : groups) {
    result.ids.push_back(static_cast<std::int64_t>(id));
    result.parts.push_back(std::move(part));
  }
  return result;
}

}  // namespace serial

}  // namespace kpastream::kernels
