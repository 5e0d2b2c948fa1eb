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

// Reconciliation of replicated shared spaces between partitions.
//
// Every partition owns an UpdateBuffer into which it records the deltas it
// applied to its replica since the last exchange point. A flush combines all
// buffers against the last synchronized base state and writes the result to
// every replica:
//
//   new[k] = base[k] + (((d_0[k] + d_1[k]) + d_2[k]) + ...)
//
// summed in partition-id order, keys visited in ascending order. Buffered and
// master flushes compute exactly this value; they differ only in the traffic
// they account for. Overwrites replace the value outright and may only be
// issued by the owner of the key.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "forelem/ir.hpp"
#include "forelem/space.hpp"

namespace forelem::xchg {

enum class ExchangeScheme { Buffered, Master, Indirect };

const char* to_string(ExchangeScheme s);
ExchangeScheme parse_scheme(std::string_view s);

enum class DeltaOp { AddScalar, AddVector, AddCount, Overwrite };

struct Delta {
  std::string space;
  Key key;
  DeltaOp op = DeltaOp::AddScalar;
  Value value;
};

class UpdateBuffer {
 public:
  using OwnerFn = std::function<bool(const std::string& space, const Key& key)>;

  explicit UpdateBuffer(std::size_t partition_id = 0, OwnerFn owns = nullptr)
      : partition_id_(partition_id), owns_(std::move(owns)) {}

  std::size_t partition_id() const { return partition_id_; }
  const std::vector<Delta>& pending() const { return pending_; }
  bool empty() const { return pending_.empty(); }
  std::size_t size() const { return pending_.size(); }
  void clear();

  std::size_t sweeps_since_flush = 0;

 private:
  friend void record_delta(UpdateBuffer& buf, Delta d);

  std::size_t partition_id_;
  OwnerFn owns_;
  std::vector<Delta> pending_;
  absl::flat_hash_map<std::pair<std::string, Key>, std::size_t> index_;
};

/// Appends `d`, coalescing Add deltas with a pending one on the same key.
/// Throws OwnershipViolation for an Overwrite of a key the buffer's
/// partition does not own, KindMismatch when mixing ops on one key.
void record_delta(UpdateBuffer& buf, Delta d);

struct ExchangeCounters {
  std::uint64_t deltas_sent = 0;
  std::uint64_t keys_touched = 0;
  std::uint64_t bytes = 0;
  std::uint64_t messages = 0;

  ExchangeCounters& operator+=(const ExchangeCounters& o) {
    deltas_sent += o.deltas_sent;
    keys_touched += o.keys_touched;
    bytes += o.bytes;
    messages += o.messages;
    return *this;
  }
};

/// All-to-all exchange. Writes the reconciled value of every touched key to
/// `base` and every replica, then clears the buffers.
ExchangeCounters flush_buffered(std::vector<UpdateBuffer>& bufs, const std::vector<ExecutionState*>& replicas,
                                ExecutionState& base);

/// Master-reduced exchange: same resulting state as flush_buffered, with
/// traffic of one coalesced update per key from the master.
ExchangeCounters flush_master(std::vector<UpdateBuffer>& bufs, const std::vector<ExecutionState*>& replicas,
                              ExecutionState& base, std::size_t master_id);

/// Recomputes every assertion's derived space from `authoritative` and
/// writes it to every replica. Count: derived[i] = |{x : assignment[x] == i}|.
/// Sum: derived[i] = sum of source[x] over those x, x ascending.
ExchangeCounters flush_indirect(const std::vector<ir::Assertion>& assertions,
                                const std::vector<ExecutionState*>& replicas, const ExecutionState& authoritative);

/// Recomputes the derived space of one assertion into `out` (cleared first).
void recompute_assertion(const ir::Assertion& a, const ExecutionState& authoritative, SharedSpace& out);

}  // namespace forelem::xchg
