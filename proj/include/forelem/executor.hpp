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

// Execution of forelem/whilelem programs.
//
// A program is bound to an ExecutionState before it runs: its loop nest is
// flattened into one ordered tuple store (the nest's value levels become sort
// keys), localized fields are loaded from their origin spaces, and the body is
// compiled into a small expression/statement graph. Every tuple's body runs
// as an atomic block with an undo log; a block that divides by zero is rolled
// back before the error propagates.
//
// whilelem terminates after one full sweep in which no tuple changed state.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "forelem/exchange.hpp"
#include "forelem/ir.hpp"
#include "forelem/space.hpp"

namespace forelem::exec {

struct SweepStats {
  std::uint64_t tuples_visited = 0;
  std::uint64_t guards_fired = 0;
  std::uint64_t state_changes = 0;
  double wall_ms = 0.0;

  SweepStats& operator+=(const SweepStats& o) {
    tuples_visited += o.tuples_visited;
    guards_fired += o.guards_fired;
    state_changes += o.state_changes;
    wall_ms += o.wall_ms;
    return *this;
  }
};

enum class SchedulerPolicy { SweepInOrder, SweepShuffled, RandomWithReplacement };

struct Scheduler {
  SchedulerPolicy policy = SchedulerPolicy::SweepInOrder;
  std::uint64_t seed = 0;
  /// Draws per random sweep; 0 means the reservoir size.
  std::size_t batch = 0;

  static Scheduler in_order() { return {}; }
  static Scheduler shuffled(std::uint64_t seed) { return {SchedulerPolicy::SweepShuffled, seed, 0}; }
  static Scheduler random(std::uint64_t seed, std::size_t batch = 0) {
    return {SchedulerPolicy::RandomWithReplacement, seed, batch};
  }
};

const char* to_string(SchedulerPolicy p);

enum class RunStatus { Terminated, SweepBudgetExhausted, EarlyStopped };

const char* to_string(RunStatus s);

struct WhilelemResult {
  std::vector<SweepStats> sweeps;
  RunStatus status = RunStatus::Terminated;

  SweepStats total() const;
};

/// Runs a forelem program: the body executes exactly once per tuple.
/// Throws InvalidProgram if the root is not a forelem, DivByZero (with the
/// offending tuple in the message) after rolling back that tuple's block.
SweepStats run_forelem(const ir::Program& p, ExecutionState& state, const Scheduler& sched = {});

/// Repeats sweeps until one sweep changes nothing or `max_sweeps` is reached.
WhilelemResult run_whilelem(const ir::Program& p, ExecutionState& state, const Scheduler& sched = {},
                            std::size_t max_sweeps = 1000000);

struct Change {
  std::string space;
  Key key;
  Value old_value;
  Value new_value;
};

struct ChangeRecord {
  bool fired = false;
  std::vector<Change> changes;

  bool empty() const { return changes.empty(); }
};

/// Executes the innermost body of `p` for the single tuple `t` (of the
/// iterated reservoir's schema). Localized fields are taken from and written
/// back to their origin spaces. The record lists every changed location.
ChangeRecord execute_tuple(const ir::Program& p, const ir::Tuple& t, ExecutionState& state);

/// Evaluates `e` for tuple `t`. `vars` binds loop variables by name.
Value eval_expr(const ir::Program& p, const ir::ExprPtr& e, const ir::Tuple& t, const ExecutionState& state,
                const std::map<std::string, std::uint64_t>& vars = {});

/// The tuples visited by one sweep of `p` (in-order scheduler), in visit
/// order, as tuples of the iterated reservoir's schema.
std::vector<ir::Tuple> trace_sweep(const ir::Program& p, const ExecutionState& state);

// ---------------------------------------------------------------------------
// Partitioned execution

struct RoundInfo {
  std::size_t round = 0;
  SweepStats stats;
  xchg::ExchangeCounters exchange;
};

struct PartitionedOptions {
  xchg::ExchangeScheme scheme = xchg::ExchangeScheme::Buffered;
  std::size_t workers = 1;
  std::size_t sweeps_per_exchange = 1;
  std::size_t max_rounds = 100000;
  Scheduler sched;
  std::size_t master_id = 0;
  /// Called after every exchange with the synchronized state of the
  /// exchanged spaces; returning true stops the run (EarlyStopped).
  std::function<bool(const RoundInfo&, const ExecutionState&)> early_stop;
  /// Called after every exchange (instrumentation).
  std::function<void(const RoundInfo&, const std::vector<const ExecutionState*>&)> on_exchange;
};

struct RunStats {
  std::string variant;
  std::size_t partitions = 1;
  std::size_t workers = 1;
  std::size_t rounds = 0;
  std::size_t sweeps = 0;
  std::uint64_t tuples_visited = 0;
  std::uint64_t guards_fired = 0;
  std::uint64_t state_changes = 0;
  double wall_ms = 0.0;
  xchg::ExchangeCounters exchange;
  RunStatus status = RunStatus::Terminated;
};

/// Runs one program per partition, each on its own replica of `state`, and
/// reconciles replicas at exchange points. On return `state` holds the merged
/// result: exchanged spaces from the synchronized state, owned spaces and
/// localized fields from their owners.
///
/// Workers are spread over partitions; with more workers than partitions,
/// the extra workers run inside a partition under per-location locking.
RunStats run_partitioned(const std::vector<ir::Program>& parts, ExecutionState& state,
                         const PartitionedOptions& opts);

std::string csv_header();
std::string to_csv_row(const RunStats& s);

}  // namespace forelem::exec
