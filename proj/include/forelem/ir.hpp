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

// Tuple-based loop intermediate representation.
//
// A Program is a set of tuple reservoirs (unordered multisets of fixed-schema
// tuples), declarations of shared spaces (keyed stores), and a root loop.
// Loops are either forelem (body runs exactly once per tuple) or whilelem
// (bodies run until every tuple is a no-op). Bodies are made of guarded
// blocks; each tuple's body executes atomically.
//
// All IR values are immutable after construction and may be shared freely
// between threads.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "forelem/error.hpp"
#include "forelem/value.hpp"

namespace forelem::ir {

// ---------------------------------------------------------------------------
// Tuples and reservoirs

enum class FieldKind { Index, Scalar, Vector };

struct FieldType {
  FieldKind kind = FieldKind::Index;
  std::size_t dim = 1;

  static FieldType index() { return {FieldKind::Index, 1}; }
  static FieldType scalar() { return {FieldKind::Scalar, 1}; }
  static FieldType vector(std::size_t d) { return {FieldKind::Vector, d}; }

  /// Storage width in 64-bit words.
  std::size_t width() const { return kind == FieldKind::Vector ? dim : 1; }
  friend bool operator==(const FieldType&, const FieldType&) = default;
};

struct Field {
  std::string name;
  FieldType type;
};

class TupleSchema {
 public:
  TupleSchema() = default;
  /// Throws InvalidArgument on duplicate names or zero-dim vectors.
  explicit TupleSchema(std::vector<Field> fields);

  std::size_t size() const { return fields_.size(); }
  const Field& field(std::size_t i) const { return fields_[i]; }
  const std::vector<Field>& fields() const { return fields_; }
  std::optional<std::size_t> find(std::string_view name) const;
  /// Index of a field, or UnknownField.
  std::size_t require(std::string_view name) const;
  /// Word offset of field i inside a packed record.
  std::size_t offset(std::size_t i) const { return offsets_[i]; }
  std::size_t width() const { return width_; }

  friend bool operator==(const TupleSchema& a, const TupleSchema& b) {
    return a.fields_.size() == b.fields_.size() &&
           std::equal(a.fields_.begin(), a.fields_.end(), b.fields_.begin(),
                      [](const Field& x, const Field& y) {
                        return x.name == y.name && x.type == y.type;
                      });
  }

 private:
  std::vector<Field> fields_;
  std::vector<std::size_t> offsets_;
  std::size_t width_ = 0;
};

using FieldValue = std::variant<std::uint64_t, double, std::vector<double>>;

class Tuple {
 public:
  Tuple() = default;
  Tuple(std::initializer_list<FieldValue> values) : values_(values) {}
  explicit Tuple(std::vector<FieldValue> values) : values_(std::move(values)) {}
  static Tuple of_indices(std::initializer_list<std::uint64_t> ks) {
    std::vector<FieldValue> v;
    for (auto k : ks) v.emplace_back(k);
    return Tuple(std::move(v));
  }

  std::size_t arity() const { return values_.size(); }
  const FieldValue& operator[](std::size_t i) const { return values_[i]; }
  const std::vector<FieldValue>& values() const { return values_; }

  friend bool operator==(const Tuple&, const Tuple&) = default;
  friend auto operator<=>(const Tuple& a, const Tuple& b) { return a.values_ <=> b.values_; }

 private:
  std::vector<FieldValue> values_;
};

/// Whether `t` conforms to `schema` (arity and kinds, index range).
bool conforms(const TupleSchema& schema, const Tuple& t);

/// An unordered multiset of tuples sharing one schema.
///
/// Storage is a packed row-major array of 64-bit words. Positions returned by
/// at()/word() identify storage slots only; they carry no semantic order.
class TupleReservoir {
 public:
  TupleReservoir() = default;
  TupleReservoir(std::string name, TupleSchema schema);

  const std::string& name() const { return name_; }
  const TupleSchema& schema() const { return schema_; }
  std::size_t size() const { return schema_.width() == 0 ? count_ : words_.size() / schema_.width(); }
  bool empty() const { return size() == 0; }

  /// Throws SchemaMismatch if `t` does not conform.
  void insert(const Tuple& t);
  /// Appends the packed words of one tuple; no conformance check.
  void insert_packed(std::span<const double> words);

  Tuple at(std::size_t pos) const;
  double word(std::size_t pos, std::size_t word_offset) const {
    return words_[pos * schema_.width() + word_offset];
  }
  std::uint64_t index(std::size_t pos, std::size_t field) const {
    return static_cast<std::uint64_t>(word(pos, schema_.offset(field)));
  }
  std::span<const double> packed(std::size_t pos) const {
    return {words_.data() + pos * schema_.width(), schema_.width()};
  }

  /// Visits every tuple exactly once, in unspecified order.
  template <typename F>
  void for_each(F&& fn) const {
    for (std::size_t i = 0; i < size(); ++i) fn(at(i));
  }

  /// The multiset contents in canonical (sorted) order.
  std::vector<Tuple> canonical() const;

  /// Same name and schema, no tuples.
  TupleReservoir empty_like(std::string name) const;

 private:
  std::string name_;
  TupleSchema schema_;
  std::vector<double> words_;
  std::size_t count_ = 0;  // only used for zero-width schemas
};

/// Returns a reservoir holding exactly `tuples`; duplicates are kept.
/// Throws SchemaMismatch naming the first offending tuple index.
TupleReservoir build_reservoir(std::string name, TupleSchema schema, const std::vector<Tuple>& tuples);

/// {t in r : t.field == value}. Throws UnknownField / NotIndexField.
TupleReservoir select_by_field(const TupleReservoir& r, std::string_view field, std::uint64_t value);

/// Sorted distinct values of an index field.
std::vector<std::uint64_t> distinct_values(const TupleReservoir& r, std::string_view field);

std::string to_string(const Tuple& t);

// ---------------------------------------------------------------------------
// Shared-space declarations

struct SpaceDecl {
  std::string name;
  std::size_t key_arity = 1;
  ValueKind kind = ValueKind::Scalar;
  std::size_t dim = 1;
  Value default_value = 0.0;
  /// Per-key-component bounds. Empty means unbounded (hashed storage).
  std::vector<std::uint64_t> extents;
  /// Values are integral counts (exchanged as AddCount deltas).
  bool counter = false;

  std::size_t width() const { return kind == ValueKind::Vector ? dim : 1; }
};

// ---------------------------------------------------------------------------
// Expressions

struct Expr;
struct Stmt;
struct LoopSpec;
using ExprPtr = std::shared_ptr<const Expr>;
using LoopPtr = std::shared_ptr<const LoopSpec>;

enum class ArithOp { Add, Sub, Mul, Div };
enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge, AbsDiffGtEps };
enum class LogicOp { And, Or, Not };
enum class WriteOp { Assign, Add, Sub };

/// Field of the current tuple. `via` is the materialized access path
/// (e.g. {"PE","v","i"} prints as PE[v][i].u); it does not change meaning.
struct FieldRef {
  std::string name;
  std::vector<std::string> via;
};
/// Loop variable bound by an enclosing value/enumeration/interval loop.
struct VarRef {
  std::string name;
};
struct SpaceRead {
  std::string space;
  std::vector<ExprPtr> key;
};
struct Const {
  Value value;
};
struct Arith {
  ArithOp op;
  ExprPtr lhs, rhs;
};
struct Compare {
  CmpOp op;
  ExprPtr lhs, rhs;
};
/// Short-circuiting logic. For Not, rhs is null.
struct Logic {
  LogicOp op;
  ExprPtr lhs, rhs;
};
/// Euclidean distance between two equal-dim vectors.
struct Dist {
  ExprPtr lhs, rhs;
};
/// |S[path]|: size of a materialized index structure row.
struct StructSize {
  std::string structure;
  std::vector<std::string> path;
};
/// A write used in expression position. Never valid; exists so that
/// validate_program can report impure guards.
struct WriteExpr {
  std::string space;
  std::vector<ExprPtr> key;
  ExprPtr value;
};

struct Expr {
  std::variant<FieldRef, VarRef, SpaceRead, Const, Arith, Compare, Logic, Dist, StructSize, WriteExpr>
      node;
};

// ---------------------------------------------------------------------------
// Statements

struct SpaceWrite {
  std::string space;
  std::vector<ExprPtr> key;
  WriteOp op = WriteOp::Assign;
  ExprPtr value;
};
/// Write to a (localized) mutable tuple field.
struct FieldWrite {
  std::string field;
  WriteOp op = WriteOp::Assign;
  ExprPtr value;
  std::vector<std::string> via;
};
struct Swap {
  std::string space;
  std::vector<ExprPtr> key_a, key_b;
};
/// Guarded block. `structural` guards were introduced by loop interchange
/// padding and are enforced by the iteration structure itself.
struct If {
  ExprPtr guard;
  std::vector<Stmt> then_body;
  std::vector<Stmt> else_body;
  bool structural = false;
};
struct NestedLoop {
  LoopPtr loop;
};

struct Stmt {
  std::variant<SpaceWrite, FieldWrite, Swap, If, NestedLoop> node;
};

// ---------------------------------------------------------------------------
// Loops

enum class SplitMode { Value, Range };

/// S(R)_index of a split into `count` sub-reservoirs on `field`.
struct PartitionSpec {
  std::string field;
  std::size_t count = 1;
  std::size_t index = 0;
  SplitMode mode = SplitMode::Value;
};

/// Maps values of a split field to partitions. Value mode deals the sorted
/// distinct values of the field round-robin; range mode cuts [min,max] into
/// `count` ranges of width max(1, (max-min+1)/count), the last one extended
/// to max. Throws EmptyReservoir for range mode on an empty reservoir.
class Partitioner {
 public:
  Partitioner(const TupleReservoir& r, std::string_view field, std::size_t count, SplitMode mode);

  std::size_t operator()(std::uint64_t value) const;
  std::size_t count() const { return count_; }
  /// Inclusive value range of partition i (range mode only).
  std::pair<std::uint64_t, std::uint64_t> range(std::size_t i) const;

 private:
  std::size_t count_;
  SplitMode mode_;
  std::vector<std::uint64_t> values_;
  std::uint64_t min_ = 0, max_ = 0, width_ = 1;
};

/// A reservoir restricted by field==var equalities (T.x[y]) and optionally
/// by a partition (S(T)_i).
struct Selection {
  std::string reservoir;
  std::vector<std::pair<std::string, std::string>> where;
  std::optional<PartitionSpec> part;
};

struct Domain;
using DomainPtr = std::shared_ptr<const Domain>;

/// <fields> in sel
struct TupleScan {
  Selection sel;
};
/// var in sel.field (distinct values)
struct ValueScan {
  Selection sel;
  std::string field;
};
/// var in [0, universe) \ {excluded}
struct Enumerate {
  ExprPtr universe;
  ExprPtr excluded;
  /// Run the body for one pseudo-randomly chosen element instead of all.
  bool arbitrary = false;
};
/// var in [0, |structure[path]|-1]; a materialized view of `underlying`.
/// `padded_over` names the loop var whose rows were max-padded by interchange.
struct IndexInterval {
  std::string structure;
  std::vector<std::string> path;
  DomainPtr underlying;
  std::optional<std::string> padded_over;
};

struct Domain {
  std::variant<TupleScan, ValueScan, Enumerate, IndexInterval> node;
};

enum class LoopKind { Forelem, Whilelem };

enum class Layout { AoS, SoA, JaggedDiagonal };

struct LoopSpec {
  LoopKind kind = LoopKind::Forelem;
  /// Tuple binder (TupleScan) or loop variable name.
  std::string binder;
  Domain domain;
  std::vector<Stmt> body;
};

// ---------------------------------------------------------------------------
// Programs

/// A shared space moved into the tuples of the iterated reservoir.
struct LocalizedField {
  std::string field;
  SpaceDecl origin;
  /// Tuple fields that formed the space key, in key order.
  std::vector<std::string> key_fields;
  /// Written anywhere in the body.
  bool is_mutable = false;
};

/// Coupling between a derived space and an assignment space, e.g.
/// M_SIZE[i] == |{x : M[x] == i}| (Count) or
/// M_SUM[i] == sum of COORDS[x] over {x : M[x] == i} (Sum).
struct Assertion {
  enum class Kind { Count, Sum };
  Kind kind = Kind::Count;
  std::string derived;
  std::string assignment;
  std::string source;  // Sum only
};

struct Program {
  std::map<std::string, std::shared_ptr<const TupleReservoir>> reservoirs;
  std::map<std::string, SpaceDecl> spaces;
  LoopSpec root;
  /// Tolerance of AbsDiffGtEps comparisons.
  double epsilon = 0.0;
  std::vector<LocalizedField> localized;
  std::vector<Assertion> assertions;
  /// Named integer parameters (e.g. "V" = vertex count).
  std::map<std::string, std::uint64_t> params;
  /// Applied transformation steps, in order.
  std::vector<std::string> history;
  /// Physical layout fixed by concretization (AoS when not concretized).
  Layout layout = Layout::AoS;
  bool concretized = false;

  const TupleReservoir& reservoir(std::string_view name) const;
  const LocalizedField* find_localized(std::string_view field) const;
};

// ---------------------------------------------------------------------------
// Validation

struct Diagnostic {
  std::string code;  // e.g. "ImpureGuard", "DimMismatch", "UnknownSpace"
  std::string path;  // location inside the program, e.g. "root/body[0]/if.guard"
  std::string message;
};

/// Empty iff every referenced space/reservoir/field/var is declared, guards
/// are pure, vector dims agree, and whilelem bodies contain a guard.
std::vector<Diagnostic> validate_program(const Program& p);

/// Throws InvalidProgram listing the diagnostics if validation fails.
void require_valid(const Program& p);

// ---------------------------------------------------------------------------
// Printing

std::string to_string(const Expr& e);
std::string to_string(const LoopSpec& loop, const Program* ctx = nullptr, int indent = 0);
std::string to_string(const Program& p);

// ---------------------------------------------------------------------------
// Construction helpers

namespace dsl {

ExprPtr field(std::string name);
ExprPtr var(std::string name);
ExprPtr cnst(Value v);
ExprPtr read(std::string space, std::vector<ExprPtr> key);
ExprPtr arith(ArithOp op, ExprPtr a, ExprPtr b);
ExprPtr cmp(CmpOp op, ExprPtr a, ExprPtr b);
ExprPtr land(ExprPtr a, ExprPtr b);
ExprPtr lor(ExprPtr a, ExprPtr b);
ExprPtr lnot(ExprPtr a);
ExprPtr dist(ExprPtr a, ExprPtr b);
ExprPtr abs_gt_eps(ExprPtr a, ExprPtr b);

inline ExprPtr operator+(ExprPtr a, ExprPtr b) { return arith(ArithOp::Add, std::move(a), std::move(b)); }
inline ExprPtr operator-(ExprPtr a, ExprPtr b) { return arith(ArithOp::Sub, std::move(a), std::move(b)); }
inline ExprPtr operator*(ExprPtr a, ExprPtr b) { return arith(ArithOp::Mul, std::move(a), std::move(b)); }
inline ExprPtr operator/(ExprPtr a, ExprPtr b) { return arith(ArithOp::Div, std::move(a), std::move(b)); }

Stmt write(std::string space, std::vector<ExprPtr> key, WriteOp op, ExprPtr value);
Stmt assign(std::string space, std::vector<ExprPtr> key, ExprPtr value);
Stmt add_to(std::string space, std::vector<ExprPtr> key, ExprPtr value);
Stmt sub_from(std::string space, std::vector<ExprPtr> key, ExprPtr value);
Stmt swap(std::string space, std::vector<ExprPtr> a, std::vector<ExprPtr> b);
Stmt when(ExprPtr guard, std::vector<Stmt> then_body, std::vector<Stmt> else_body = {});
Stmt nested(LoopSpec loop);

LoopSpec forelem(std::string binder, Domain d, std::vector<Stmt> body);
LoopSpec whilelem(std::string binder, Domain d, std::vector<Stmt> body);
Domain scan(std::string reservoir);

}  // namespace dsl

// ---------------------------------------------------------------------------
// Traversal utilities shared by the executor and the transformations.

/// Visits every expression node (pre-order) reachable from `e`.
void visit_expr(const ExprPtr& e, const std::function<void(const Expr&)>& fn);
/// Visits every expression in a statement list, including nested loops'
/// domains, guards, keys and values.
void visit_stmts(const std::vector<Stmt>& body, const std::function<void(const Expr&)>& fn);
/// Visits every statement (pre-order), descending into if-branches and
/// nested loops.
void walk_stmts(const std::vector<Stmt>& body, const std::function<void(const Stmt&)>& fn);

/// Rewrites an expression bottom-up. `fn` receives the rebuilt node and may
/// return a replacement (or nullptr to keep it).
using ExprRewriter = std::function<ExprPtr(const ExprPtr&)>;
ExprPtr rewrite_expr(const ExprPtr& e, const ExprRewriter& fn);
std::vector<Stmt> rewrite_stmts(const std::vector<Stmt>& body, const ExprRewriter& fn);

/// The selection iterated by a domain (looking through IndexInterval), or
/// nullptr for enumeration domains.
const Selection* selection_of(const Domain& d);
Selection* mutable_selection_of(Domain& d);

/// The innermost tuple loop of a perfect nest rooted at `loop`
/// (following single NestedLoop bodies), or nullptr.
const LoopSpec* innermost_tuple_loop(const LoopSpec& loop);

/// Loops from `loop` down to the innermost tuple loop.
std::vector<const LoopSpec*> nest_levels(const LoopSpec& loop);

const char* to_string(Layout l);
Layout parse_layout(std::string_view s);

}  // namespace forelem::ir
