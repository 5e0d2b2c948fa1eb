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

#include "forelem/space.hpp"

#include <algorithm>
#include <limits>

namespace forelem {

SharedSpace::SharedSpace(ir::SpaceDecl decl) : decl_(std::move(decl)) {
  if (decl_.key_arity == 0 || decl_.key_arity > kMaxKeyArity)
    throw Error(ErrorCode::ArityMismatch, "space " + decl_.name + ": key arity must be in [1," +
                                              std::to_string(kMaxKeyArity) + "]");
  if (decl_.kind == ValueKind::Vector && decl_.dim == 0)
    throw Error(ErrorCode::InvalidArgument, "space " + decl_.name + ": vector dim 0");
  if (decl_.kind == ValueKind::Scalar) decl_.dim = 1;
  const Value& dv = decl_.default_value;
  if (dv.kind() != decl_.kind || (decl_.kind == ValueKind::Vector && dv.dim() != decl_.dim)) {
    if (dv.is_scalar() && dv.as_scalar() == 0.0)
      decl_.default_value = Value::zeros(decl_.kind, decl_.dim);
    else
      throw Error(ErrorCode::KindMismatch, "space " + decl_.name + ": default value kind mismatch");
  }
  auto d = decl_.default_value.data();
  default_words_.assign(d.begin(), d.end());
  if (!decl_.extents.empty()) {
    if (decl_.extents.size() != decl_.key_arity)
      throw Error(ErrorCode::ArityMismatch, "space " + decl_.name + ": extents do not match key arity");
    std::size_t n = 1;
    strides_.assign(decl_.key_arity, 1);
    for (std::size_t i = decl_.key_arity; i-- > 0;) {
      strides_[i] = n;
      n *= decl_.extents[i];
    }
    words_.resize(n * width());
    for (std::size_t i = 0; i < n; ++i) std::copy(default_words_.begin(), default_words_.end(), words_.begin() + i * width());
  }
}

void SharedSpace::check_key(const Key& key) const {
  if (key.arity() != decl_.key_arity)
    throw Error(ErrorCode::ArityMismatch, "space " + decl_.name + " expects key arity " +
                                              std::to_string(decl_.key_arity) + ", got " + to_string(key));
}

std::size_t SharedSpace::dense_index(const Key& key) const {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < key.arity(); ++i) {
    if (key[i] >= decl_.extents[i]) return std::numeric_limits<std::size_t>::max();
    idx += key[i] * strides_[i];
  }
  return idx;
}

Key SharedSpace::dense_key(std::size_t index) const {
  std::array<std::uint64_t, kMaxKeyArity> k{};
  for (std::size_t i = 0; i < decl_.key_arity; ++i) {
    k[i] = index / strides_[i];
    index %= strides_[i];
  }
  return Key(std::span<const std::uint64_t>(k.data(), decl_.key_arity));
}

double* SharedSpace::locate(const Key& key) {
  check_key(key);
  if (dense()) {
    std::size_t idx = dense_index(key);
    if (idx == std::numeric_limits<std::size_t>::max())
      throw Error(ErrorCode::KeyOutOfRange, "space " + decl_.name + " key " + to_string(key));
    return words_.data() + idx * width();
  }
  auto [it, inserted] = slots_.try_emplace(key, pool_.size() / width());
  if (inserted) pool_.insert(pool_.end(), default_words_.begin(), default_words_.end());
  return pool_.data() + it->second * width();
}

const double* SharedSpace::find(const Key& key) const {
  check_key(key);
  if (dense()) {
    std::size_t idx = dense_index(key);
    if (idx == std::numeric_limits<std::size_t>::max())
      throw Error(ErrorCode::KeyOutOfRange, "space " + decl_.name + " key " + to_string(key));
    return words_.data() + idx * width();
  }
  auto it = slots_.find(key);
  return it == slots_.end() ? nullptr : pool_.data() + it->second * width();
}

Value SharedSpace::read(const Key& key) const {
  const double* w = find(key);
  if (!w) return decl_.default_value;
  if (decl_.kind == ValueKind::Scalar) return Value(*w + (dense() ? offset_ : 0.0));
  return Value(std::vector<double>(w, w + width()));
}

void SharedSpace::write(const Key& key, const Value& v) {
  if (v.kind() != decl_.kind || (decl_.kind == ValueKind::Vector && v.dim() != decl_.dim))
    throw Error(ErrorCode::KindMismatch, "space " + decl_.name + ": value " + to_string(v) + " has wrong kind");
  double* w = locate(key);
  if (decl_.kind == ValueKind::Scalar) {
    *w = v.as_scalar() - (dense() ? offset_ : 0.0);
  } else {
    auto d = v.as_vector();
    std::copy(d.begin(), d.end(), w);
  }
}

void SharedSpace::normalize() {
  if (offset_ == 0.0) return;
  for (double& w : words_) w += offset_;
  offset_ = 0.0;
}

std::vector<std::pair<Key, Value>> SharedSpace::entries() const {
  std::vector<std::pair<Key, Value>> out;
  auto make = [&](const double* w) {
    if (decl_.kind == ValueKind::Scalar) return Value(*w + (dense() ? offset_ : 0.0));
    return Value(std::vector<double>(w, w + width()));
  };
  if (dense()) {
    Value def = decl_.default_value;
    for (std::size_t i = 0; i < dense_size(); ++i) {
      Value v = make(words_.data() + i * width());
      if (!(v == def)) out.emplace_back(dense_key(i), std::move(v));
    }
  } else {
    Value def = decl_.default_value;
    for (const auto& [k, slot] : slots_) {
      Value v = make(pool_.data() + slot * width());
      if (!(v == def)) out.emplace_back(k, std::move(v));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  return out;
}

bool operator==(const SharedSpace& a, const SharedSpace& b) {
  if (a.decl_.name != b.decl_.name || a.decl_.key_arity != b.decl_.key_arity || a.width() != b.width()) return false;
  return a.entries() == b.entries();
}

SharedSpace& ExecutionState::add(ir::SpaceDecl decl) {
  std::string name = decl.name;
  auto [it, _] = spaces_.insert_or_assign(name, SharedSpace(std::move(decl)));
  return it->second;
}

SharedSpace& ExecutionState::space(std::string_view name) {
  auto it = spaces_.find(name);
  if (it == spaces_.end()) throw Error(ErrorCode::UnknownSpace, "no space '" + std::string(name) + "' in state");
  return it->second;
}

const SharedSpace& ExecutionState::space(std::string_view name) const {
  auto it = spaces_.find(name);
  if (it == spaces_.end()) throw Error(ErrorCode::UnknownSpace, "no space '" + std::string(name) + "' in state");
  return it->second;
}

Value space_read(const SharedSpace& s, const Key& key) { return s.read(key); }
void space_write(SharedSpace& s, const Key& key, const Value& v) { s.write(key, v); }

ExecutionState make_state(const ir::Program& p) {
  ExecutionState st;
  for (const auto& [name, decl] : p.spaces) st.add(decl);
  for (const auto& lf : p.localized)
    if (!st.has(lf.origin.name)) st.add(lf.origin);
  return st;
}

}  // namespace forelem
