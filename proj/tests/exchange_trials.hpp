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

// Randomized delta streams shared by the exchange unit tests and the
// acceptance run.

#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "forelem/exchange.hpp"
#include "forelem/space.hpp"

namespace trials {

using namespace forelem;

struct FlushOutcome {
  bool counts_exact = true;       // CNT and OWN identical between schemes and equal to the oracle
  double max_rel_between = 0.0;   // float spaces, buffered vs master
  double max_rel_oracle = 0.0;    // float spaces, buffered vs independent sum
  bool replicas_agree = true;     // every replica holds the flushed value
};

inline ir::SpaceDecl decl(const std::string& name, std::vector<std::uint64_t> extents, std::size_t arity = 1,
                          std::size_t dim = 1, bool counter = false) {
  ir::SpaceDecl d;
  d.name = name;
  d.extents = std::move(extents);
  d.key_arity = arity;
  d.kind = dim > 1 ? ValueKind::Vector : ValueKind::Scalar;
  d.dim = dim;
  d.default_value = Value::zeros(d.kind, dim);
  d.counter = counter;
  return d;
}

inline double rel(double a, double b) { return std::fabs(a - b) / std::max(1.0, std::fabs(b)); }

/// One randomized trial: P partitions record deltas on a counter space, a
/// vector sum space, a hashed scalar space and an owner-written space; the
/// same buffers are flushed through both schemes.
inline FlushOutcome flush_trial(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t P = 2 + rng() % 5;
  std::uniform_real_distribution<double> real(-100.0, 100.0);
  std::uniform_int_distribution<int> count(-5, 5);

  ExecutionState base;
  base.add(decl("CNT", {16}, 1, 1, true));
  base.add(decl("SUM", {8}, 1, 3));
  base.add(decl("H", {}, 2));
  base.add(decl("OWN", {12}));
  for (std::uint64_t k = 0; k < 16; ++k) base.space("CNT").write(Key{k}, static_cast<double>(rng() % 50));
  for (std::uint64_t k = 0; k < 8; ++k) base.space("SUM").write(Key{k}, Value{real(rng), real(rng), real(rng)});
  for (std::uint64_t k = 0; k < 12; ++k) base.space("OWN").write(Key{k}, real(rng));

  auto owns = [P](std::size_t p) {
    return [P, p](const std::string& space, const Key& k) { return space != "OWN" || k[0] % P == p; };
  };
  std::vector<xchg::UpdateBuffer> bufs;
  std::vector<ExecutionState> reps(P, base);
  // Oracle: base plus every delta, applied in partition order.
  std::map<std::pair<std::string, Key>, std::vector<double>> expect;
  auto current = [&](const std::string& s, const Key& k) -> std::vector<double>& {
    auto it = expect.find({s, k});
    if (it == expect.end()) {
      Value init = base.space(s).read(k);
      auto v = init.data();
      it = expect.emplace(std::make_pair(s, k), std::vector<double>(v.begin(), v.end())).first;
    }
    return it->second;
  };
  std::map<Key, std::pair<std::size_t, double>> overwrite;
  for (std::size_t p = 0; p < P; ++p) {
    bufs.emplace_back(p, owns(p));
    const std::size_t n = rng() % 40;
    for (std::size_t i = 0; i < n; ++i) {
      xchg::Delta d;
      switch (rng() % 4) {
        case 0:
          d = {"CNT", Key{rng() % 16}, xchg::DeltaOp::AddCount, Value(static_cast<double>(count(rng)))};
          break;
        case 1:
          d = {"SUM", Key{rng() % 8}, xchg::DeltaOp::AddVector, Value{real(rng), real(rng), real(rng)}};
          break;
        case 2:
          d = {"H", Key{rng() % 6, rng() % 6}, xchg::DeltaOp::AddScalar, Value(real(rng))};
          break;
        default: {
          std::uint64_t k = (rng() % 12) / P * P + p;
          if (k >= 12) continue;
          d = {"OWN", Key{k}, xchg::DeltaOp::Overwrite, Value(real(rng))};
        }
      }
      if (d.op == xchg::DeltaOp::Overwrite) {
        overwrite[d.key] = {p, d.value.as_scalar()};
      } else {
        auto& cur = current(d.space, d.key);
        auto v = d.value.data();
        for (std::size_t j = 0; j < v.size(); ++j) cur[j] += v[j];
      }
      xchg::record_delta(bufs[p], d);
    }
  }
  for (const auto& [k, pv] : overwrite) current("OWN", k) = {pv.second};

  auto bufs2 = bufs;
  auto reps2 = reps;
  ExecutionState base2 = base;
  std::vector<ExecutionState*> ptrs, ptrs2;
  for (auto& r : reps) ptrs.push_back(&r);
  for (auto& r : reps2) ptrs2.push_back(&r);
  xchg::flush_buffered(bufs, ptrs, base);
  xchg::flush_master(bufs2, ptrs2, base2, rng() % P);

  FlushOutcome out;
  for (const auto& [name, sp] : base.spaces()) {
    const auto& other = base2.space(name);
    bool exact = name == "CNT" || name == "OWN";
    for (const auto& [k, v] : sp.entries()) {
      auto a = v.data();
      Value theirs = other.read(k);
      auto b = theirs.data();
      for (std::size_t j = 0; j < a.size(); ++j) {
        if (exact && a[j] != b[j]) out.counts_exact = false;
        out.max_rel_between = std::max(out.max_rel_between, rel(a[j], b[j]));
      }
    }
    if (sp.entries().size() != other.entries().size()) out.counts_exact = false;
  }
  for (const auto& [sk, want] : expect) {
    Value mine = base.space(sk.first).read(sk.second);
    auto got = mine.data();
    bool exact = sk.first == "CNT" || sk.first == "OWN";
    for (std::size_t j = 0; j < want.size(); ++j) {
      if (exact && got[j] != want[j]) out.counts_exact = false;
      out.max_rel_oracle = std::max(out.max_rel_oracle, rel(got[j], want[j]));
    }
  }
  for (std::size_t p = 0; p < P; ++p)
    for (const auto& [sk, want] : expect) {
      (void)want;
      if (!(reps[p].space(sk.first).read(sk.second) == base.space(sk.first).read(sk.second)) ||
          !(reps2[p].space(sk.first).read(sk.second) == base2.space(sk.first).read(sk.second)))
        out.replicas_agree = false;
    }
  return out;
}

/// One randomized trial of assertion recomputation: returns true when every
/// replica's SIZE and SUMS equal an independent recount bit for bit.
inline bool indirect_trial(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = 1 + rng() % 200, k = 1 + rng() % 8, dim = 1 + rng() % 4, P = 1 + rng() % 5;
  std::uniform_real_distribution<double> real(-10.0, 10.0);
  ExecutionState auth;
  auth.add(decl("M", {n}));
  auth.add(decl("COORDS", {n}, 1, dim));
  auth.add(decl("SIZE", {k}, 1, 1, true));
  auth.add(decl("SUMS", {k}, 1, dim));
  std::vector<std::uint64_t> assign(n);
  std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
  for (std::uint64_t x = 0; x < n; ++x) {
    assign[x] = rng() % k;
    for (auto& c : pts[x]) c = real(rng);
    auth.space("M").write(Key{x}, static_cast<double>(assign[x]));
    auth.space("COORDS").write(Key{x}, dim == 1 ? Value(pts[x][0]) : Value(pts[x]));
  }
  std::vector<ExecutionState> reps(P, auth);
  for (auto& r : reps)
    for (std::uint64_t m = 0; m < k; ++m) r.space("SIZE").write(Key{m}, real(rng));
  std::vector<ExecutionState*> ptrs;
  for (auto& r : reps) ptrs.push_back(&r);
  std::vector<ir::Assertion> as = {{ir::Assertion::Kind::Count, "SIZE", "M", ""},
                                   {ir::Assertion::Kind::Sum, "SUMS", "M", "COORDS"}};
  xchg::flush_indirect(as, ptrs, auth);

  std::vector<double> size(k, 0.0);
  std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
  for (std::size_t x = 0; x < n; ++x) {
    size[assign[x]] += 1.0;
    for (std::size_t j = 0; j < dim; ++j) sums[assign[x]][j] += pts[x][j];
  }
  for (const auto& r : reps)
    for (std::uint64_t m = 0; m < k; ++m) {
      if (r.space("SIZE").read(Key{m}) != Value(size[m])) return false;
      Value want = dim == 1 ? Value(sums[m][0]) : Value(sums[m]);
      if (r.space("SUMS").read(Key{m}) != want) return false;
    }
  return true;
}

}  // namespace trials
