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

#include "forelem/exchange.hpp"

#include <algorithm>
#include <map>

namespace forelem::xchg {

const char* to_string(ExchangeScheme s) {
  switch (s) {
    case ExchangeScheme::Buffered: return "buffered";
    case ExchangeScheme::Master: return "master";
    case ExchangeScheme::Indirect: return "indirect";
  }
  return "?";
}

ExchangeScheme parse_scheme(std::string_view s) {
  if (s == "buffered") return ExchangeScheme::Buffered;
  if (s == "master") return ExchangeScheme::Master;
  if (s == "indirect") return ExchangeScheme::Indirect;
  throw Error(ErrorCode::InvalidArgument, "unknown exchange scheme '" + std::string(s) + "'");
}

namespace {

bool is_add(DeltaOp op) { return op != DeltaOp::Overwrite; }

void add_into(Value& acc, const Value& v) {
  if (acc.is_scalar() && v.is_scalar()) {
    acc = Value(acc.as_scalar() + v.as_scalar());
    return;
  }
  if (acc.is_scalar() || v.is_scalar() || acc.dim() != v.dim())
    throw Error(ErrorCode::KindMismatch, "cannot add " + to_string(v) + " to " + to_string(acc));
  std::vector<double> out(acc.as_vector().begin(), acc.as_vector().end());
  auto b = v.as_vector();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  acc = Value(std::move(out));
}

std::uint64_t delta_bytes(const Delta& d) { return 8 * d.key.arity() + 8 * d.value.dim() + 1; }

struct Entry {
  const Key* key;
  std::size_t part;
  const Delta* delta;
};

// Applies the combined value of every touched key to base and replicas.
// Returns the number of distinct keys touched.
std::uint64_t combine(const std::vector<UpdateBuffer>& bufs, const std::vector<ExecutionState*>& replicas,
                      ExecutionState& base) {
  std::map<std::string, std::vector<Entry>> by_space;
  for (std::size_t p = 0; p < bufs.size(); ++p)
    for (const Delta& d : bufs[p].pending()) by_space[d.space].push_back({&d.key, p, &d});

  std::uint64_t touched = 0;
  for (auto& [space, entries] : by_space) {
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (*a.key == *b.key) return a.part < b.part;
      return *a.key < *b.key;
    });
    SharedSpace& bs = base.space(space);
    std::vector<SharedSpace*> rs;
    rs.reserve(replicas.size());
    for (ExecutionState* r : replicas) rs.push_back(&r->space(space));

    for (std::size_t i = 0; i < entries.size();) {
      std::size_t j = i;
      while (j < entries.size() && *entries[j].key == *entries[i].key) ++j;
      const Key& key = *entries[i].key;
      const Delta* over = nullptr;
      std::optional<Value> sum;
      for (std::size_t e = i; e < j; ++e) {
        const Delta* d = entries[e].delta;
        if (d->op == DeltaOp::Overwrite) {
          if (over && !(over->value == d->value))
            throw Error(ErrorCode::OwnershipViolation,
                        "conflicting overwrites of " + space + to_string(key) + " by several partitions");
          over = d;
        } else if (!sum) {
          sum = d->value;
        } else {
          add_into(*sum, d->value);
        }
      }
      if (over && sum)
        throw Error(ErrorCode::OwnershipViolation, "overwrite and add on the same key " + space + to_string(key));
      Value next;
      if (over) {
        next = over->value;
      } else {
        next = bs.read(key);
        add_into(next, *sum);
      }
      bs.write(key, next);
      for (SharedSpace* r : rs) r->write(key, next);
      ++touched;
      i = j;
    }
  }
  return touched;
}

}  // namespace

void UpdateBuffer::clear() {
  pending_.clear();
  index_.clear();
  sweeps_since_flush = 0;
}

void record_delta(UpdateBuffer& buf, Delta d) {
  if (d.op == DeltaOp::Overwrite && buf.owns_ && !buf.owns_(d.space, d.key))
    throw Error(ErrorCode::OwnershipViolation, "partition " + std::to_string(buf.partition_id_) +
                                                   " does not own " + d.space + to_string(d.key));
  if (is_add(d.op) && (d.op == DeltaOp::AddVector) == d.value.is_scalar())
    throw Error(ErrorCode::KindMismatch, "delta op does not match value kind for " + d.space);
  auto [it, inserted] = buf.index_.try_emplace(std::make_pair(d.space, d.key), buf.pending_.size());
  if (inserted) {
    buf.pending_.push_back(std::move(d));
    return;
  }
  Delta& cur = buf.pending_[it->second];
  if (cur.op != d.op && !(is_add(cur.op) && is_add(d.op) && cur.value.is_scalar() && d.value.is_scalar()))
    throw Error(ErrorCode::KindMismatch, "mixed delta ops on " + d.space + to_string(d.key));
  if (d.op == DeltaOp::Overwrite)
    cur.value = std::move(d.value);
  else
    add_into(cur.value, d.value);
}

ExchangeCounters flush_buffered(std::vector<UpdateBuffer>& bufs, const std::vector<ExecutionState*>& replicas,
                                ExecutionState& base) {
  ExchangeCounters c;
  const std::uint64_t fanout = bufs.empty() ? 0 : bufs.size() - 1;
  for (const auto& b : bufs) {
    if (b.empty()) continue;
    c.messages += fanout;
    c.deltas_sent += b.size() * fanout;
    for (const Delta& d : b.pending()) c.bytes += delta_bytes(d) * fanout;
  }
  c.keys_touched = combine(bufs, replicas, base);
  for (auto& b : bufs) b.clear();
  return c;
}

ExchangeCounters flush_master(std::vector<UpdateBuffer>& bufs, const std::vector<ExecutionState*>& replicas,
                              ExecutionState& base, std::size_t master_id) {
  if (!bufs.empty() && master_id >= bufs.size())
    throw Error(ErrorCode::InvalidArgument, "master id " + std::to_string(master_id) + " out of range");
  ExchangeCounters c;
  std::uint64_t union_bytes = 0;
  for (std::size_t p = 0; p < bufs.size(); ++p) {
    if (p == master_id || bufs[p].empty()) continue;
    c.messages += 1;
    c.deltas_sent += bufs[p].size();
    for (const Delta& d : bufs[p].pending()) c.bytes += delta_bytes(d);
  }
  // The master's reduced update holds one delta per distinct key.
  absl::flat_hash_map<std::pair<std::string, Key>, std::uint64_t> uni;
  for (const auto& b : bufs)
    for (const Delta& d : b.pending()) uni.try_emplace(std::make_pair(d.space, d.key), delta_bytes(d));
  for (const auto& [_, bytes] : uni) union_bytes += bytes;
  const std::uint64_t fanout = bufs.empty() ? 0 : bufs.size() - 1;
  if (!uni.empty()) {
    c.messages += fanout;
    c.deltas_sent += uni.size() * fanout;
    c.bytes += union_bytes * fanout;
  }
  c.keys_touched = combine(bufs, replicas, base);
  for (auto& b : bufs) b.clear();
  return c;
}

void recompute_assertion(const ir::Assertion& a, const ExecutionState& authoritative, SharedSpace& out) {
  if (!authoritative.has(a.assignment))
    throw Error(ErrorCode::AssertionUnsatisfiable, "assignment space '" + a.assignment + "' not declared");
  if (a.kind == ir::Assertion::Kind::Sum && !authoritative.has(a.source))
    throw Error(ErrorCode::AssertionUnsatisfiable, "source space '" + a.source + "' not declared");
  const SharedSpace& asg = authoritative.space(a.assignment);
  const SharedSpace* src = a.kind == ir::Assertion::Kind::Sum ? &authoritative.space(a.source) : nullptr;
  if (asg.decl().kind != ValueKind::Scalar)
    throw Error(ErrorCode::AssertionUnsatisfiable, "assignment space '" + a.assignment + "' is not scalar");
  const std::size_t w = out.width();
  if (src && src->width() != w)
    throw Error(ErrorCode::AssertionUnsatisfiable, "source and derived widths differ for " + a.derived);

  // Clear the derived space.
  out.set_offset(0.0);
  if (out.dense()) {
    std::fill(out.dense_words(), out.dense_words() + out.dense_size() * w, 0.0);
  } else {
    std::vector<Key> keys;
    out.for_each_hashed([&](const Key& k, std::span<const double>) { keys.push_back(k); });
    for (const Key& k : keys) std::fill(out.locate(k), out.locate(k) + w, 0.0);
  }

  auto accumulate = [&](const Key& x, double cluster) {
    double* dst = out.locate(Key{static_cast<std::uint64_t>(cluster)});
    if (!src) {
      dst[0] += 1.0;
      return;
    }
    const double* s = src->find(x);
    std::span<const double> sv = s ? std::span<const double>(s, w) : src->default_words();
    if (src->dense() && w == 1) {
      dst[0] += sv[0] + src->offset();
      return;
    }
    for (std::size_t i = 0; i < w; ++i) dst[i] += sv[i];
  };

  if (asg.dense()) {
    const double* words = asg.dense_words();
    for (std::size_t i = 0; i < asg.dense_size(); ++i) accumulate(asg.dense_key(i), words[i] + asg.offset());
  } else {
    std::vector<std::pair<Key, double>> items;
    asg.for_each_hashed([&](const Key& k, std::span<const double> v) { items.emplace_back(k, v[0]); });
    std::sort(items.begin(), items.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    for (const auto& [k, v] : items) accumulate(k, v);
  }
}

ExchangeCounters flush_indirect(const std::vector<ir::Assertion>& assertions,
                                const std::vector<ExecutionState*>& replicas, const ExecutionState& authoritative) {
  ExchangeCounters c;
  const std::uint64_t fanout = replicas.empty() ? 0 : replicas.size() - 1;
  for (const auto& a : assertions) {
    if (!authoritative.has(a.derived))
      throw Error(ErrorCode::AssertionUnsatisfiable, "derived space '" + a.derived + "' not declared");
    SharedSpace derived = authoritative.space(a.derived);
    recompute_assertion(a, authoritative, derived);
    for (ExecutionState* r : replicas) {
      if (!r->has(a.derived))
        throw Error(ErrorCode::AssertionUnsatisfiable, "derived space '" + a.derived + "' missing in replica");
      r->space(a.derived) = derived;
    }
    const SharedSpace& asg = authoritative.space(a.assignment);
    std::uint64_t n = asg.dense() ? asg.dense_size() : asg.hashed_size();
    // Owners send their assignments to every other partition, which recompute locally.
    c.deltas_sent += n * fanout;
    c.bytes += n * 16 * fanout;
    c.messages += replicas.size() * fanout;
    c.keys_touched += derived.dense() ? derived.dense_size() : derived.hashed_size();
  }
  return c;
}

}  // namespace forelem::xchg
