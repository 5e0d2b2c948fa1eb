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

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace forelem {

/// Largest index representable exactly in the 64-bit float words used for
/// tuple storage. Also used as the stub target of reduced reservoirs.
inline constexpr std::uint64_t kMaxIndex = (std::uint64_t{1} << 53) - 1;
inline constexpr std::uint64_t kStubTarget = kMaxIndex;

inline constexpr std::size_t kMaxKeyArity = 4;

enum class ValueKind { Scalar, Vector };

/// A shared-space or expression value: a scalar or a fixed-dim dense vector.
class Value {
 public:
  Value() : v_(0.0) {}
  Value(double s) : v_(s) {}  // NOLINT(google-explicit-constructor)
  explicit Value(std::vector<double> v) : v_(std::move(v)) {}
  Value(std::initializer_list<double> v) : v_(std::vector<double>(v)) {}

  static Value zeros(ValueKind kind, std::size_t dim) {
    if (kind == ValueKind::Scalar) return Value(0.0);
    return Value(std::vector<double>(dim, 0.0));
  }

  bool is_scalar() const { return std::holds_alternative<double>(v_); }
  ValueKind kind() const { return is_scalar() ? ValueKind::Scalar : ValueKind::Vector; }
  std::size_t dim() const { return is_scalar() ? 1 : std::get<1>(v_).size(); }

  double as_scalar() const;
  std::span<const double> as_vector() const;
  /// Scalar or vector contents as a contiguous span of dim() doubles.
  std::span<const double> data() const {
    if (is_scalar()) return {&std::get<0>(v_), 1};
    return std::get<1>(v_);
  }

  friend bool operator==(const Value&, const Value&) = default;

 private:
  std::variant<double, std::vector<double>> v_;
};

std::string to_string(const Value& v);

/// Integer key of a shared-space location. Arity is at most kMaxKeyArity.
class Key {
 public:
  Key() = default;
  Key(std::initializer_list<std::uint64_t> ks);
  explicit Key(std::span<const std::uint64_t> ks);

  std::size_t arity() const { return n_; }
  std::uint64_t operator[](std::size_t i) const { return k_[i]; }
  std::span<const std::uint64_t> span() const { return {k_.data(), n_}; }

  friend bool operator==(const Key& a, const Key& b) {
    return a.n_ == b.n_ && std::equal(a.k_.begin(), a.k_.begin() + a.n_, b.k_.begin());
  }
  friend bool operator<(const Key& a, const Key& b) {
    return std::lexicographical_compare(a.k_.begin(), a.k_.begin() + a.n_, b.k_.begin(),
                                        b.k_.begin() + b.n_);
  }

  template <typename H>
  friend H AbslHashValue(H h, const Key& k) {
    return H::combine_contiguous(std::move(h), k.k_.data(), k.n_);
  }

 private:
  std::array<std::uint64_t, kMaxKeyArity> k_{};
  std::size_t n_ = 0;
};

std::string to_string(const Key& k);

}  // namespace forelem
