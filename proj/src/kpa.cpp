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

#include "kpastream/kpa.hpp"

#include <algorithm>
#include <string>

#include "kpastream/errors.hpp"

namespace kpastream {

Kpa::Kpa(std::size_t resident_column, std::vector<KeyRef> pairs, std::vector<BundleHandle> links,
         Allocation allocation, bool sorted)
    : resident_column_(resident_column),
      pairs_(std::move(pairs)),
      links_(std::move(links)),
      allocation_(std::move(allocation)),
      sorted_(sorted) {}

Kpa Kpa::create(ExecContext& ctx, std::size_t resident_column, std::vector<KeyRef> pairs, bool sorted,
                std::span<const BundleId> extra_links) {
  std::vector<BundleId> ids(extra_links.begin(), extra_links.end());
  BundleId last = 0;
  bool have_last = false;
  for (const auto& p : pairs) {
    if (have_last && p.ref.bundle == last) continue;
    ids.push_back(p.ref.bundle);
    last = p.ref.bundle;
    have_last = true;
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<BundleHandle> links;
  links.reserve(ids.size());
  for (BundleId id : ids) links.emplace_back(ctx.memory, id);
  Allocation alloc = ctx.memory.place(ctx.tag, SizeClass::KpaChunk, pairs.size() * sizeof(KeyRef));
  return Kpa(resident_column, std::move(pairs), std::move(links), std::move(alloc), sorted);
}

bool Kpa::links_to(BundleId id) const {
  auto it = std::lower_bound(links_.begin(), links_.end(), id,
                             [](const BundleHandle& h, BundleId v) { return h.id() < v; });
  return it != links_.end() && it->id() == id;
}

std::vector<BundleId> Kpa::link_ids() const {
  std::vector<BundleId> ids;
  ids.reserve(links_.size());
  for (const auto& h : links_) ids.push_back(h.id());
  return ids;
}

void Kpa::clear() {
  pairs_.clear();
  pairs_.shrink_to_fit();
  links_.clear();
  allocation_.reset();
}

BundleResolver::BundleResolver(const Kpa& kpa) {
  bundles_.reserve(kpa.links().size());
  for (const auto& h : kpa.links()) bundles_.emplace_back(h.id(), h.get());
}

const Bundle& BundleResolver::operator()(BundleId id) const {
  auto it = std::lower_bound(bundles_.begin(), bundles_.end(), id,
                             [](const auto& e, BundleId v) { return e.first < v; });
  if (it == bundles_.end() || it->first != id) {
    throw InvariantError("dangling record reference into bundle " + std::to_string(id));
  }
  return *it->second;
}

}  // namespace kpastream
