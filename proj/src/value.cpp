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

#include "forelem/value.hpp"

#include <sstream>

#include "forelem/error.hpp"

namespace forelem {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::UnknownField: return "UnknownField";
    case ErrorCode::NotIndexField: return "NotIndexField";
    case ErrorCode::UnknownSpace: return "UnknownSpace";
    case ErrorCode::UnknownReservoir: return "UnknownReservoir";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::KeyOutOfRange: return "KeyOutOfRange";
    case ErrorCode::DivByZero: return "DivByZero";
    case ErrorCode::InvalidProgram: return "InvalidProgram";
    case ErrorCode::NotLocalizable: return "NotLocalizable";
    case ErrorCode::NotReducible: return "NotReducible";
    case ErrorCode::NotPerfectlyNested: return "NotPerfectlyNested";
    case ErrorCode::LayoutUnsupported: return "LayoutUnsupported";
    case ErrorCode::EmptyReservoir: return "EmptyReservoir";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::OwnershipViolation: return "OwnershipViolation";
    case ErrorCode::AssertionUnsatisfiable: return "AssertionUnsatisfiable";
    case ErrorCode::NotPartitionable: return "NotPartitionable";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::UnknownVariant: return "UnknownVariant";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

double Value::as_scalar() const {
  if (!is_scalar()) throw Error(ErrorCode::KindMismatch, "expected scalar, got vector of dim " + std::to_string(dim()));
  return std::get<0>(v_);
}

std::span<const double> Value::as_vector() const {
  if (is_scalar()) throw Error(ErrorCode::KindMismatch, "expected vector, got scalar");
  return std::get<1>(v_);
}

std::string to_string(const Value& v) {
  std::ostringstream os;
  os.precision(17);
  if (v.is_scalar()) {
    os << v.as_scalar();
    return os.str();
  }
  os << '(';
  bool first = true;
  for (double d : v.as_vector()) {
    if (!first) os << ',';
    first = false;
    os << d;
  }
  os << ')';
  return os.str();
}

Key::Key(std::initializer_list<std::uint64_t> ks) : Key(std::span<const std::uint64_t>(ks.begin(), ks.size())) {}

Key::Key(std::span<const std::uint64_t> ks) {
  if (ks.size() > kMaxKeyArity)
    throw Error(ErrorCode::ArityMismatch, "key arity " + std::to_string(ks.size()) + " exceeds " +
                                              std::to_string(kMaxKeyArity));
  std::copy(ks.begin(), ks.end(), k_.begin());
  n_ = ks.size();
}

std::string to_string(const Key& k) {
  std::string s = "[";
  for (std::size_t i = 0; i < k.arity(); ++i) {
    if (i) s += ',';
    s += k[i] == kStubTarget ? std::string("$C") : std::to_string(k[i]);
  }
  return s + "]";
}

}  // namespace forelem
