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

// Internal: a program bound to one ExecutionState, compiled into flat node
// and statement arrays, and the per-thread worker that runs tuple bodies.

#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "forelem/executor.hpp"

namespace forelem::exec::detail {

/// Copy of `loop` with every partition restriction removed.
ir::LoopSpec strip_partitions(const ir::LoopSpec& loop);

enum class NK : std::uint8_t {
  Const, ConstVec, Field, FieldVec, Local, LocalVec, Env, Ordinal,
  DenseS, DenseV, Hashed,
  Add, Sub, Mul, Div,
  Eq, Ne, Lt, Le, Gt, Ge, AbsGt,
  And, Or, Not, Dist,
};

struct Node {
  NK k = NK::Const;
  bool vec = false;
  std::uint32_t dim = 1;
  std::uint32_t a = 0, b = 0;  // children
  std::uint32_t id = 0;        // column, store, env slot or space
  std::uint32_t arena = 0;     // result slot for vector results
  std::uint32_t nkey = 0;
  std::uint32_t key[kMaxKeyArity] = {};
  double c = 0.0;
};

enum class SK : std::uint8_t { Write, LocalWrite, Swap, If, Loop, Broadcast };

struct SNode {
  SK k = SK::Write;
  ir::WriteOp op = ir::WriteOp::Assign;
  std::uint32_t id = 0;  // space or store
  std::uint32_t nkey = 0, nkey_b = 0;
  std::uint32_t key[kMaxKeyArity] = {};
  std::uint32_t key_b[kMaxKeyArity] = {};
  std::uint32_t value = 0;
  std::uint32_t guard = 0;
  std::uint32_t then_list = 0, else_list = 0;
  bool has_else = false;
  bool structural = false;
  std::uint32_t env = 0;
  std::uint32_t universe = 0;
  std::uint32_t excluded = 0;
  bool has_excluded = false;
  bool arbitrary = false;
};

struct FieldCol {
  std::size_t base = 0;
  std::size_t stride = 1;
  std::uint32_t width = 1;
  bool vec = false;
};

/// Mutable localized field: one slot per distinct key.
struct LocalStore {
  std::string field;
  SharedSpace* origin = nullptr;
  std::uint32_t width = 1;
  bool vec = false;
  std::vector<double> words;
  std::vector<std::uint32_t> slot_of_pos;
  std::vector<Key> slot_keys;
};

struct BoundSpace {
  SharedSpace* s = nullptr;
  bool dense = false;
  bool scalar = true;
  std::uint32_t width = 1;
  bool whole_lock = false;
};

class Bound {
 public:
  Bound(const ir::Program& p, ExecutionState& state);

  /// Compiles a free expression in the scope of the tuple body.
  std::uint32_t compile_free_expr(const ir::ExprPtr& e);
  /// Writes mutable localized fields back to their origin spaces.
  void export_locals();

  const ir::Program& prog;
  ExecutionState& state;
  std::shared_ptr<const ir::TupleReservoir> reservoir;

  std::size_t n = 0;
  std::vector<std::uint32_t> base_pos;     // store position -> reservoir position
  std::vector<std::uint32_t> in_order;     // 0..n-1
  std::vector<std::uint32_t> group_start;  // runs of the outermost level key, plus n

  std::vector<double> data;
  std::vector<double> ordinal;
  std::vector<LocalStore> locals;
  std::vector<BoundSpace> spaces;

  std::vector<Node> nodes;
  std::vector<SNode> stmts;
  std::vector<std::vector<std::uint32_t>> lists;
  std::uint32_t body = 0;
  bool has_guard = false;
  std::uint32_t env_slots = 0;
  std::uint32_t arena_size = 0;
  double epsilon = 0.0;

  std::vector<double> constpool;
  std::vector<FieldCol> cols;
  std::map<std::string, std::uint32_t> col_of;
  std::map<std::string, std::uint32_t> local_of;
  std::map<std::string, std::uint32_t> space_of;
  std::map<std::string, std::string> level_var_field;
  std::string tuple_binder;
};

/// Striped try-locks shared by the workers of one partition.
struct LockTable {
  static constexpr std::size_t kStripes = 4096;
  std::atomic<std::uint32_t> owner[kStripes] = {};
};

class Worker {
 public:
  Worker(Bound& b, LockTable* locks, std::uint64_t seed, std::uint32_t id = 0);

  /// Executes the body for store position `pos` atomically.
  void run_tuple(std::uint32_t pos);
  Value evaluate(std::uint32_t node, std::uint32_t pos);

  SweepStats stats;
  std::vector<std::uint32_t>* trace = nullptr;
  /// (reservoir position, element) for every element an enumeration visits.
  std::vector<std::pair<std::uint32_t, std::uint64_t>>* expansions = nullptr;

 private:
  struct Val {
    double s = 0.0;
    const double* v = nullptr;
    std::uint32_t dim = 1;
  };
  enum class UK : std::uint8_t { Dense, Hashed, Local, Offset };
  struct Undo {
    UK k;
    std::uint32_t id;
    std::size_t idx;
    std::size_t saved;
    std::uint32_t nw;
    Key key;
  };
  struct Conflict {};

  Val eval(std::uint32_t n);
  bool truth(std::uint32_t n) { return eval(n).s != 0.0; }
  std::size_t eval_index(std::uint32_t n);
  Key eval_key(const std::uint32_t* keys, std::uint32_t nkey);
  std::size_t dense_index(const BoundSpace& bs, const std::uint32_t* keys, std::uint32_t nkey);
  void exec_list(std::uint32_t list);
  void exec(const SNode& s);
  void write_space(std::uint32_t space, const std::uint32_t* keys, std::uint32_t nkey, ir::WriteOp op,
                   const double* v, std::uint32_t dim);
  void lock_space(std::uint32_t space, std::size_t idx);
  void lock_local(std::uint32_t store, std::size_t slot);
  void lock_stripe(std::size_t h);
  void release();
  void rollback();
  bool changed() const;

  Bound& b_;
  LockTable* locks_;
  std::uint32_t id_;
  std::mt19937_64 rng_;
  std::uint32_t pos_ = 0;
  bool fired_ = false;
  std::vector<double> env_;
  std::vector<double> arena_;
  std::vector<double> scratch_;
  std::vector<Undo> undo_;
  std::vector<double> undo_words_;
  std::vector<std::size_t> held_;
};

}  // namespace forelem::exec::detail
