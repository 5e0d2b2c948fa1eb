// Copyright 2026 The Forelem Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "forelem/ir.hpp"
#include "forelem/value.hpp"

namespace forelem {

/// Keyed store behind a shared space. Keys map injectively to locations:
/// dense storage (row-major over `extents`) when the declaration is bounded,
/// otherwise a hash map from key to a slot in a value pool.
///
/// Dense scalar spaces additionally carry a uniform offset so that adding
/// one value to every location is O(1); reads always include it.
class SharedSpace {
 public:
  SharedSpace() = default;
  explicit SharedSpace(ir::SpaceDecl decl);

  const ir::SpaceDecl& decl() const { return decl_; }
  const std::string& name() const { return decl_.name; }
  bool dense() const { return !decl_.extents.empty(); }
  std::size_t width() const { return decl_.width(); }

  /// Throws ArityMismatch or KeyOutOfRange (dense only).
  Value read(const Key& key) const;
  /// Throws ArityMismatch, KindMismatch or KeyOutOfRange.
  void write(const Key& key, const Value& v);

  // Raw word access used by the executor and exchange. `locate` returns the
  // location of `key`, creating it (initialized to default) for hashed
  // storage; `find` returns nullptr for unwritten hashed keys.
  double* locate(const Key& key);
  const double* find(const Key& key) const;
  std::span<const double> default_words() const { return default_words_; }

  /// Dense storage only: location index for `key`, or SIZE_MAX if out of range.
  std::size_t dense_index(const Key& key) const;
  std::size_t dense_size() const { return dense() ? words_.size() / width() : 0; }
  double* dense_words() { return words_.data(); }
  const double* dense_words() const { return words_.data(); }
  Key dense_key(std::size_t index) const;

  double offset() const { return offset_; }
  void set_offset(double o) { offset_ = o; }
  /// Folds the uniform offset into every location.
  void normalize();

  /// Number of hashed entries (written keys).
  std::size_t hashed_size() const { return slots_.size(); }
  template <typename F>
  void for_each_hashed(F&& fn) const {
    for (const auto& [k, slot] : slots_) fn(k, std::span<const double>(pool_.data() + slot * width(), width()));
  }

  /// Every location whose value differs from the default, in ascending key
  /// order. Offsets are applied.
  std::vector<std::pair<Key, Value>> entries() const;

  friend bool operator==(const SharedSpace& a, const SharedSpace& b);

 private:
  void check_key(const Key& key) const;

  ir::SpaceDecl decl_;
  std::vector<double> default_words_;
  std::vector<double> words_;
  std::vector<std::size_t> strides_;
  double offset_ = 0.0;
  absl::flat_hash_map<Key, std::size_t> slots_;
  std::vector<double> pool_;
};

/// All shared-space contents of one (replica of a) run.
class ExecutionState {
 public:
  ExecutionState() = default;

  SharedSpace& add(ir::SpaceDecl decl);
  bool has(std::string_view name) const { return spaces_.count(std::string(name)) != 0; }
  /// Throws UnknownSpace.
  SharedSpace& space(std::string_view name);
  const SharedSpace& space(std::string_view name) const;
  const std::map<std::string, SharedSpace, std::less<>>& spaces() const { return spaces_; }
  std::map<std::string, SharedSpace, std::less<>>& spaces() { return spaces_; }

  std::uint64_t rng_seed = 0;

  friend bool operator==(const ExecutionState& a, const ExecutionState& b) { return a.spaces_ == b.spaces_; }

 private:
  std::map<std::string, SharedSpace, std::less<>> spaces_;
};

/// Free-function forms of keyed access.
Value space_read(const SharedSpace& s, const Key& key);
void space_write(SharedSpace& s, const Key& key, const Value& v);

/// A state holding a fresh space for every declaration of `p`, including
/// the origin spaces of localized fields.
ExecutionState make_state(const ir::Program& p);

}  // namespace forelem
