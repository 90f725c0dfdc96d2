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

// Data-parallel kernels over key/reference pairs. Each kernel has an OpenMP
// implementation and a serial reference in kernels::serial that tests use as
// the oracle and the kernel benchmark uses as the baseline.
//
// All kernels touch only pair storage; none of them dereferences a record.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <omp.h>

#include "kpastream/model.hpp"

namespace kpastream::kernels {

/// Sort kernel granularity: 64 pairs per block.
inline constexpr std::size_t kBlockSize = 64;

/// Test hook: when on, the sort kernel compares keys with their lowest bit
/// dropped. Used as a negative control for end-to-end verification.
void set_comparator_fault(bool on);
bool comparator_fault();

bool is_sorted_pairs(std::span<const KeyRef> pairs);

/// Stable sort by key. Output is identical for every worker count.
void sort_pairs(std::span<KeyRef> pairs, int workers);

/// Stable merge (ties taken from `a` first). `out` must hold |a|+|b| pairs.
void merge_pairs(std::span<const KeyRef> a, std::span<const KeyRef> b, std::span<KeyRef> out, int workers);

/// Number of elements taken from `a` in the first `diagonal` outputs of the
/// stable merge of a and b.
std::size_t merge_path_split(std::span<const KeyRef> a, std::span<const KeyRef> b, std::size_t diagonal);

struct Partitioned {
  std::vector<std::int64_t> ids;             // ascending
  std::vector<std::vector<KeyRef>> parts;    // parts[i] holds pairs with key / width == ids[i]
};

/// Range partition: pair lands in key / width. Input order preserved per part.
Partitioned partition_pairs(std::span<const KeyRef> pairs, Value width, int workers);

/// Order-preserving filter; `keep` sees the whole pair.
template <class Pred>
std::vector<KeyRef> select_pairs(std::span<const KeyRef> pairs, Pred&& keep, int workers) {
  const std::size_t n = pairs.size();
  const int w = workers < 1 ? 1 : workers;
  if (w == 1 || n < 4096) {
    std::vector<KeyRef> out;
    for (const auto& p : pairs) {
      if (keep(p)) out.push_back(p);
    }
    return out;
  }
  std::vector<std::size_t> counts(static_cast<std::size_t>(w) + 1, 0);
  std::vector<unsigned char> flags(n);
  std::vector<KeyRef> out;
#pragma omp parallel num_threads(w)
  {
    const auto t = static_cast<std::size_t>(omp_get_thread_num());
    const auto nt = static_cast<std::size_t>(omp_get_num_threads());
    const std::size_t lo = n * t / nt;
    const std::size_t hi = n * (t + 1) / nt;
    std::size_t c = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      flags[i] = keep(pairs[i]) ? 1 : 0;
      c += flags[i];
    }
    counts[t + 1] = c;
#pragma omp barrier
#pragma omp single
    {
      for (std::size_t i = 1; i < counts.size(); ++i) counts[i] += counts[i - 1];
      out.resize(counts.back());
    }
    std::size_t pos = counts[t];
    for (std::size_t i = lo; i < hi; ++i) {
      if (flags[i]) out[pos++] = pairs[i];
    }
  }
  return out;
}

namespace serial {

void sort_pairs(std::span<KeyRef> pairs);
void merge_pairs(std::span<const KeyRef> a, std::span<const KeyRef> b, std::span<KeyRef> out);
Partitioned partition_pairs(std::span<const KeyRef> pairs, Value width);

template <class Pred>
std::vector<KeyRef> select_pairs(std::span<const KeyRef> pairs, Pred&& keep) {
  std::vector<KeyRef> out;
  for (const auto& p : pairs) {
    if (keep(p)) out.push_back(p);
  }
  return out;
}

}  // namespace serial

}  // namespace kpastream::kernels
