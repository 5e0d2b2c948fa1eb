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

#include "forelem/ir.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace forelem::ir {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

// ---------------------------------------------------------------------------
// Schema / reservoir

TupleSchema::TupleSchema(std::vector<Field> fields) : fields_(std::move(fields)) {
  std::set<std::string_view> seen;
  for (const auto& f : fields_) {
    if (f.name.empty()) throw Error(ErrorCode::InvalidArgument, "empty field name");
    if (!seen.insert(f.name).second) throw Error(ErrorCode::InvalidArgument, "duplicate field '" + f.name + "'");
    if (f.type.kind == FieldKind::Vector && f.type.dim == 0)
      throw Error(ErrorCode::InvalidArgument, "vector field '" + f.name + "' has dim 0");
    offsets_.push_back(width_);
    width_ += f.type.width();
  }
}

std::optional<std::size_t> TupleSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < fields_.size(); ++i)
    if (fields_[i].name == name) return i;
  return std::nullopt;
}

std::size_t TupleSchema::require(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw Error(ErrorCode::UnknownField, "no field '" + std::string(name) + "' in schema");
}

bool conforms(const TupleSchema& schema, const Tuple& t) {
  if (t.arity() != schema.size()) return false;
  for (std::size_t i = 0; i < t.arity(); ++i) {
    const FieldType& ft = schema.field(i).type;
    const FieldValue& v = t[i];
    switch (ft.kind) {
      case FieldKind::Index:
        if (!std::holds_alternative<std::uint64_t>(v) || std::get<std::uint64_t>(v) > kMaxIndex) return false;
        break;
      case FieldKind::Scalar:
        if (!std::holds_alternative<double>(v)) return false;
        break;
      case FieldKind::Vector:
        if (!std::holds_alternative<std::vector<double>>(v) || std::get<std::vector<double>>(v).size() != ft.dim)
          return false;
        break;
    }
  }
  return true;
}

TupleReservoir::TupleReservoir(std::string name, TupleSchema schema)
    : name_(std::move(name)), schema_(std::move(schema)) {}

void TupleReservoir::insert(const Tuple& t) {
  if (!conforms(schema_, t)) throw Error(ErrorCode::SchemaMismatch, "tuple does not conform to schema of " + name_);
  for (std::size_t i = 0; i < t.arity(); ++i) {
    std::visit(Overloaded{[&](std::uint64_t u) { words_.push_back(static_cast<double>(u)); },
                          [&](double d) { words_.push_back(d); },
                          [&](const std::vector<double>& v) { words_.insert(words_.end(), v.begin(), v.end()); }},
               t[i]);
  }
  ++count_;
}

void TupleReservoir::insert_packed(std::span<const double> words) {
  words_.insert(words_.end(), words.begin(), words.end());
  ++count_;
}

Tuple TupleReservoir::at(std::size_t pos) const {
  std::vector<FieldValue> vals;
  vals.reserve(schema_.size());
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    const FieldType& ft = schema_.field(i).type;
    const double* w = words_.data() + pos * schema_.width() + schema_.offset(i);
    switch (ft.kind) {
      case FieldKind::Index: vals.emplace_back(static_cast<std::uint64_t>(*w)); break;
      case FieldKind::Scalar: vals.emplace_back(*w); break;
      case FieldKind::Vector: vals.emplace_back(std::vector<double>(w, w + ft.dim)); break;
    }
  }
  return Tuple(std::move(vals));
}

std::vector<Tuple> TupleReservoir::canonical() const {
  std::vector<Tuple> out;
  out.reserve(size());
  for_each([&](const Tuple& t) { out.push_back(t); });
  std::sort(out.begin(), out.end());
  return out;
}

TupleReservoir TupleReservoir::empty_like(std::string name) const { return TupleReservoir(std::move(name), schema_); }

TupleReservoir build_reservoir(std::string name, TupleSchema schema, const std::vector<Tuple>& tuples) {
  TupleReservoir r(std::move(name), std::move(schema));
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    if (!conforms(r.schema(), tuples[i]))
      throw Error(ErrorCode::SchemaMismatch, "tuple " + std::to_string(i) + " does not conform to schema");
    r.insert(tuples[i]);
  }
  return r;
}

namespace {

std::size_t require_index_field(const TupleSchema& s, std::string_view field) {
  std::size_t f = s.require(field);
  if (s.field(f).type.kind != FieldKind::Index)
    throw Error(ErrorCode::NotIndexField, "field '" + std::string(field) + "' is not an index field");
  return f;
}

}  // namespace

TupleReservoir select_by_field(const TupleReservoir& r, std::string_view field, std::uint64_t value) {
  std::size_t f = require_index_field(r.schema(), field);
  TupleReservoir out = r.empty_like(r.name());
  for (std::size_t i = 0; i < r.size(); ++i)
    if (r.index(i, f) == value) out.insert_packed(r.packed(i));
  return out;
}

std::vector<std::uint64_t> distinct_values(const TupleReservoir& r, std::string_view field) {
  std::size_t f = require_index_field(r.schema(), field);
  std::vector<std::uint64_t> vals;
  vals.reserve(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) vals.push_back(r.index(i, f));
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  return vals;
}

std::string to_string(const Tuple& t) {
  std::ostringstream os;
  os << '<';
  for (std::size_t i = 0; i < t.arity(); ++i) {
    if (i) os << ',';
    std::visit(Overloaded{[&](std::uint64_t u) {
                            if (u == kStubTarget)
                              os << "$C";
                            else
                              os << u;
                          },
                          [&](double d) { os << d; },
                          [&](const std::vector<double>& v) {
                            os << '(';
                            for (std::size_t j = 0; j < v.size(); ++j) os << (j ? "," : "") << v[j];
                            os << ')';
                          }},
               t[i]);
  }
  os << '>';
  return os.str();
}

Partitioner::Partitioner(const TupleReservoir& r, std::string_view field, std::size_t count, SplitMode mode)
    : count_(count), mode_(mode) {
  if (count == 0) throw Error(ErrorCode::InvalidArgument, "partition count must be >= 1");
  values_ = distinct_values(r, field);
  if (mode == SplitMode::Range) {
    if (values_.empty()) throw Error(ErrorCode::EmptyReservoir, "range split of empty reservoir " + r.name());
    min_ = values_.front();
    max_ = values_.back();
    width_ = std::max<std::uint64_t>(1, (max_ - min_ + 1) / count);
  }
}

std::size_t Partitioner::operator()(std::uint64_t value) const {
  if (mode_ == SplitMode::Range) {
    if (value <= min_) return 0;
    return static_cast<std::size_t>(std::min<std::uint64_t>(count_ - 1, (value - min_) / width_));
  }
  auto it = std::lower_bound(values_.begin(), values_.end(), value);
  if (it == values_.end() || *it != value) return static_cast<std::size_t>(value % count_);
  return static_cast<std::size_t>(it - values_.begin()) % count_;
}

std::pair<std::uint64_t, std::uint64_t> Partitioner::range(std::size_t i) const {
  std::uint64_t lo = min_ + i * width_;
  std::uint64_t hi = i + 1 == count_ ? max_ : lo + width_ - 1;
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// Program

const TupleReservoir& Program::reservoir(std::string_view name) const {
  auto it = reservoirs.find(std::string(name));
  if (it == reservoirs.end() || !it->second)
    throw Error(ErrorCode::UnknownReservoir, "no reservoir '" + std::string(name) + "'");
  return *it->second;
}

const LocalizedField* Program::find_localized(std::string_view field) const {
  for (const auto& l : localized)
    if (l.field == field) return &l;
  return nullptr;
}

const char* to_string(Layout l) {
  switch (l) {
    case Layout::AoS: return "AoS";
    case Layout::SoA: return "SoA";
    case Layout::JaggedDiagonal: return "JaggedDiagonal";
  }
  return "?";
}

Layout parse_layout(std::string_view s) {
  if (s == "AoS" || s == "aos") return Layout::AoS;
  if (s == "SoA" || s == "soa") return Layout::SoA;
  if (s == "JaggedDiagonal" || s == "jds" || s == "JDS") return Layout::JaggedDiagonal;
  throw Error(ErrorCode::InvalidArgument, "unknown layout '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Construction helpers

namespace dsl {

namespace {
ExprPtr mk(decltype(Expr::node) n) { return std::make_shared<const Expr>(Expr{std::move(n)}); }
}  // namespace

ExprPtr field(std::string name) { return mk(FieldRef{std::move(name), {}}); }
ExprPtr var(std::string name) { return mk(VarRef{std::move(name)}); }
ExprPtr cnst(Value v) { return mk(Const{std::move(v)}); }
ExprPtr read(std::string space, std::vector<ExprPtr> key) { return mk(SpaceRead{std::move(space), std::move(key)}); }
ExprPtr arith(ArithOp op, ExprPtr a, ExprPtr b) { return mk(Arith{op, std::move(a), std::move(b)}); }
ExprPtr cmp(CmpOp op, ExprPtr a, ExprPtr b) { return mk(Compare{op, std::move(a), std::move(b)}); }
ExprPtr land(ExprPtr a, ExprPtr b) { return mk(Logic{LogicOp::And, std::move(a), std::move(b)}); }
ExprPtr lor(ExprPtr a, ExprPtr b) { return mk(Logic{LogicOp::Or, std::move(a), std::move(b)}); }
ExprPtr lnot(ExprPtr a) { return mk(Logic{LogicOp::Not, std::move(a), nullptr}); }
ExprPtr dist(ExprPtr a, ExprPtr b) { return mk(Dist{std::move(a), std::move(b)}); }
ExprPtr abs_gt_eps(ExprPtr a, ExprPtr b) { return cmp(CmpOp::AbsDiffGtEps, std::move(a), std::move(b)); }

Stmt write(std::string space, std::vector<ExprPtr> key, WriteOp op, ExprPtr value) {
  return Stmt{SpaceWrite{std::move(space), std::move(key), op, std::move(value)}};
}
Stmt assign(std::string space, std::vector<ExprPtr> key, ExprPtr value) {
  return write(std::move(space), std::move(key), WriteOp::Assign, std::move(value));
}
Stmt add_to(std::string space, std::vector<ExprPtr> key, ExprPtr value) {
  return write(std::move(space), std::move(key), WriteOp::Add, std::move(value));
}
Stmt sub_from(std::string space, std::vector<ExprPtr> key, ExprPtr value) {
  return write(std::move(space), std::move(key), WriteOp::Sub, std::move(value));
}
Stmt swap(std::string space, std::vector<ExprPtr> a, std::vector<ExprPtr> b) {
  return Stmt{Swap{std::move(space), std::move(a), std::move(b)}};
}
Stmt when(ExprPtr guard, std::vector<Stmt> then_body, std::vector<Stmt> else_body) {
  return Stmt{If{std::move(guard), std::move(then_body), std::move(else_body), false}};
}
Stmt nested(LoopSpec loop) { return Stmt{NestedLoop{std::make_shared<const LoopSpec>(std::move(loop))}}; }

LoopSpec forelem(std::string binder, Domain d, std::vector<Stmt> body) {
  return LoopSpec{LoopKind::Forelem, std::move(binder), std::move(d), std::move(body)};
}
LoopSpec whilelem(std::string binder, Domain d, std::vector<Stmt> body) {
  return LoopSpec{LoopKind::Whilelem, std::move(binder), std::move(d), std::move(body)};
}
Domain scan(std::string reservoir) { return Domain{TupleScan{Selection{std::move(reservoir), {}, std::nullopt}}}; }

}  // namespace dsl

// ---------------------------------------------------------------------------
// Traversal

void visit_expr(const ExprPtr& e, const std::function<void(const Expr&)>& fn) {
  if (!e) return;
  fn(*e);
  std::visit(Overloaded{[&](const SpaceRead& r) {
                          for (const auto& k : r.key) visit_expr(k, fn);
                        },
                        [&](const Arith& a) {
                          visit_expr(a.lhs, fn);
                          visit_expr(a.rhs, fn);
                        },
                        [&](const Compare& c) {
                          visit_expr(c.lhs, fn);
                          visit_expr(c.rhs, fn);
                        },
                        [&](const Logic& l) {
                          visit_expr(l.lhs, fn);
                          visit_expr(l.rhs, fn);
                        },
                        [&](const Dist& d) {
                          visit_expr(d.lhs, fn);
                          visit_expr(d.rhs, fn);
                        },
                        [&](const WriteExpr& w) {
                          for (const auto& k : w.key) visit_expr(k, fn);
                          visit_expr(w.value, fn);
                        },
                        [](const auto&) {}},
             e->node);
}

namespace {

void visit_domain(const Domain& d, const std::function<void(const Expr&)>& fn) {
  if (const auto* en = std::get_if<Enumerate>(&d.node)) {
    visit_expr(en->universe, fn);
    visit_expr(en->excluded, fn);
  } else if (const auto* iv = std::get_if<IndexInterval>(&d.node)) {
    if (iv->underlying) visit_domain(*iv->underlying, fn);
  }
}

}  // namespace

void walk_stmts(const std::vector<Stmt>& body, const std::function<void(const Stmt&)>& fn) {
  for (const auto& s : body) {
    fn(s);
    if (const auto* i = std::get_if<If>(&s.node)) {
      walk_stmts(i->then_body, fn);
      walk_stmts(i->else_body, fn);
    } else if (const auto* n = std::get_if<NestedLoop>(&s.node)) {
      walk_stmts(n->loop->body, fn);
    }
  }
}

void visit_stmts(const std::vector<Stmt>& body, const std::function<void(const Expr&)>& fn) {
  walk_stmts(body, [&](const Stmt& s) {
    std::visit(Overloaded{[&](const SpaceWrite& w) {
                            for (const auto& k : w.key) visit_expr(k, fn);
                            visit_expr(w.value, fn);
                          },
                          [&](const FieldWrite& w) { visit_expr(w.value, fn); },
                          [&](const Swap& w) {
                            for (const auto& k : w.key_a) visit_expr(k, fn);
                            for (const auto& k : w.key_b) visit_expr(k, fn);
                          },
                          [&](const If& i) { visit_expr(i.guard, fn); },
                          [&](const NestedLoop& n) { visit_domain(n.loop->domain, fn); }},
               s.node);
  });
}

ExprPtr rewrite_expr(const ExprPtr& e, const ExprRewriter& fn) {
  if (!e) return e;
  auto rw = [&](const ExprPtr& c) { return rewrite_expr(c, fn); };
  auto rwv = [&](const std::vector<ExprPtr>& v) {
    std::vector<ExprPtr> out;
    out.reserve(v.size());
    for (const auto& c : v) out.push_back(rw(c));
    return out;
  };
  Expr rebuilt = std::visit(
      Overloaded{[&](const SpaceRead& r) { return Expr{SpaceRead{r.space, rwv(r.key)}}; },
                 [&](const Arith& a) { return Expr{Arith{a.op, rw(a.lhs), rw(a.rhs)}}; },
                 [&](const Compare& c) { return Expr{Compare{c.op, rw(c.lhs), rw(c.rhs)}}; },
                 [&](const Logic& l) { return Expr{Logic{l.op, rw(l.lhs), rw(l.rhs)}}; },
                 [&](const Dist& d) { return Expr{Dist{rw(d.lhs), rw(d.rhs)}}; },
                 [&](const WriteExpr& w) { return Expr{WriteExpr{w.space, rwv(w.key), rw(w.value)}}; },
                 [&](const auto& leaf) { return Expr{leaf}; }},
      e->node);
  auto node = std::make_shared<const Expr>(std::move(rebuilt));
  if (auto r = fn(node)) return r;
  return node;
}

namespace {

Domain rewrite_domain(const Domain& d, const ExprRewriter& fn) {
  if (const auto* en = std::get_if<Enumerate>(&d.node))
    return Domain{Enumerate{rewrite_expr(en->universe, fn), rewrite_expr(en->excluded, fn), en->arbitrary}};
  return d;
}

}  // namespace

std::vector<Stmt> rewrite_stmts(const std::vector<Stmt>& body, const ExprRewriter& fn) {
  std::vector<Stmt> out;
  out.reserve(body.size());
  auto rwv = [&](const std::vector<ExprPtr>& v) {
    std::vector<ExprPtr> r;
    for (const auto& c : v) r.push_back(rewrite_expr(c, fn));
    return r;
  };
  for (const auto& s : body) {
    out.push_back(std::visit(
        Overloaded{[&](const SpaceWrite& w) {
                     return Stmt{SpaceWrite{w.space, rwv(w.key), w.op, rewrite_expr(w.value, fn)}};
                   },
                   [&](const FieldWrite& w) {
                     return Stmt{FieldWrite{w.field, w.op, rewrite_expr(w.value, fn), w.via}};
                   },
                   [&](const Swap& w) { return Stmt{Swap{w.space, rwv(w.key_a), rwv(w.key_b)}}; },
                   [&](const If& i) {
                     return Stmt{If{rewrite_expr(i.guard, fn), rewrite_stmts(i.then_body, fn),
                                    rewrite_stmts(i.else_body, fn), i.structural}};
                   },
                   [&](const NestedLoop& n) {
                     LoopSpec l = *n.loop;
                     l.domain = rewrite_domain(l.domain, fn);
                     l.body = rewrite_stmts(l.body, fn);
                     return Stmt{NestedLoop{std::make_shared<const LoopSpec>(std::move(l))}};
                   }},
        s.node));
  }
  return out;
}

const Selection* selection_of(const Domain& d) {
  return std::visit(Overloaded{[](const TupleScan& t) -> const Selection* { return &t.sel; },
                               [](const ValueScan& v) -> const Selection* { return &v.sel; },
                               [](const Enumerate&) -> const Selection* { return nullptr; },
                               [](const IndexInterval& i) -> const Selection* {
                                 return i.underlying ? selection_of(*i.underlying) : nullptr;
                               }},
                    d.node);
}

Selection* mutable_selection_of(Domain& d) {
  if (auto* t = std::get_if<TupleScan>(&d.node)) return &t->sel;
  if (auto* v = std::get_if<ValueScan>(&d.node)) return &v->sel;
  if (auto* i = std::get_if<IndexInterval>(&d.node)) {
    if (!i->underlying) return nullptr;
    auto copy = std::make_shared<Domain>(*i->underlying);
    i->underlying = copy;
    return mutable_selection_of(*copy);
  }
  return nullptr;
}

namespace {

bool is_tuple_level(const Domain& d) {
  if (std::holds_alternative<TupleScan>(d.node)) return true;
  if (const auto* i = std::get_if<IndexInterval>(&d.node))
    return i->underlying && std::holds_alternative<TupleScan>(i->underlying->node);
  return false;
}

// The single nested loop of a perfect nest body, looking through one
// structural guard.
const LoopSpec* only_child(const LoopSpec& l) {
  if (l.body.size() != 1) return nullptr;
  if (const auto* n = std::get_if<NestedLoop>(&l.body[0].node)) {
    if (std::holds_alternative<Enumerate>(n->loop->domain.node)) return nullptr;
    return n->loop.get();
  }
  if (const auto* i = std::get_if<If>(&l.body[0].node)) {
    if (i->structural && i->else_body.empty() && i->then_body.size() == 1)
      if (const auto* n = std::get_if<NestedLoop>(&i->then_body[0].node)) return n->loop.get();
  }
  return nullptr;
}

}  // namespace

std::vector<const LoopSpec*> nest_levels(const LoopSpec& loop) {
  std::vector<const LoopSpec*> out{&loop};
  const LoopSpec* cur = &loop;
  while (const LoopSpec* c = only_child(*cur)) {
    out.push_back(c);
    cur = c;
  }
  return out;
}

const LoopSpec* innermost_tuple_loop(const LoopSpec& loop) {
  for (const LoopSpec* l : nest_levels(loop))
    if (is_tuple_level(l->domain)) return l;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

const char* op_str(ArithOp op) {
  switch (op) {
    case ArithOp::Add: return "+";
    case ArithOp::Sub: return "-";
    case ArithOp::Mul: return "*";
    case ArithOp::Div: return "/";
  }
  return "?";
}

const char* op_str(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "==";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
    case CmpOp::AbsDiffGtEps: return "> eps";
  }
  return "?";
}

const char* op_str(WriteOp op) {
  switch (op) {
    case WriteOp::Assign: return "=";
    case WriteOp::Add: return "+=";
    case WriteOp::Sub: return "-=";
  }
  return "?";
}

std::string via_prefix(const std::vector<std::string>& via) {
  if (via.empty()) return "";
  std::string s = via[0];
  for (std::size_t i = 1; i < via.size(); ++i) s += "[" + via[i] + "]";
  return s + ".";
}

std::string sub_expr(const ExprPtr& e) {
  std::string s = to_string(*e);
  if (std::holds_alternative<Arith>(e->node) || std::holds_alternative<Logic>(e->node) ||
      std::holds_alternative<Compare>(e->node))
    return "(" + s + ")";
  return s;
}

std::string key_str(const std::vector<ExprPtr>& key) {
  std::string s = "[";
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (i) s += ",";
    s += to_string(*key[i]);
  }
  return s + "]";
}

std::string sel_str(const Selection& s) {
  std::string out = s.reservoir;
  if (s.part) out = "S(" + out + ")_" + std::to_string(s.part->index);
  for (const auto& [f, v] : s.where) out += "." + f + "[" + v + "]";
  return out;
}

std::string struct_str(const std::string& name, const std::vector<std::string>& path) {
  std::string s = name;
  for (const auto& p : path) s += "[" + p + "]";
  return s;
}

std::string binder_str(const LoopSpec& l, const Program* ctx) {
  const Selection* sel = selection_of(l.domain);
  bool tuple = is_tuple_level(l.domain);
  if (!tuple || !ctx || !sel) return l.binder;
  if (std::holds_alternative<IndexInterval>(l.domain.node)) return l.binder;
  auto it = ctx->reservoirs.find(sel->reservoir);
  if (it == ctx->reservoirs.end()) return l.binder;
  std::string s = "<";
  const auto& fs = it->second->schema().fields();
  for (std::size_t i = 0; i < fs.size(); ++i) {
    if (i) s += ",";
    s += fs[i].name;
  }
  for (const auto& lf : ctx->localized) s += "," + lf.field;
  return s + ">";
}

std::string domain_str(const LoopSpec& l) {
  return std::visit(
      Overloaded{[](const TupleScan& t) { return sel_str(t.sel); },
                 [](const ValueScan& v) { return sel_str(v.sel) + "." + v.field; },
                 [](const Enumerate& e) {
                   std::string s = "[0," + to_string(*e.universe) + ")";
                   if (e.excluded) s += " \\ {" + to_string(*e.excluded) + "}";
                   return s;
                 },
                 [](const IndexInterval& i) {
                   if (i.padded_over) {
                     std::vector<std::string> p = i.path;
                     return "[0,max_" + *i.padded_over + "(|" + struct_str(i.structure, p) + "|)-1]";
                   }
                   return "[0,|" + struct_str(i.structure, i.path) + "|-1]";
                 }},
      l.domain.node);
}

void print_stmts(std::ostringstream& os, const std::vector<Stmt>& body, const Program* ctx, int indent);

void print_loop(std::ostringstream& os, const LoopSpec& l, const Program* ctx, int indent) {
  std::string pad(indent * 2, ' ');
  os << pad << (l.kind == LoopKind::Whilelem ? "whilelem" : "forelem") << " (" << binder_str(l, ctx) << " in "
     << domain_str(l) << ") {\n";
  print_stmts(os, l.body, ctx, indent + 1);
  os << pad << "}\n";
}

void print_stmts(std::ostringstream& os, const std::vector<Stmt>& body, const Program* ctx, int indent) {
  std::string pad(indent * 2, ' ');
  for (const auto& s : body) {
    std::visit(Overloaded{[&](const SpaceWrite& w) {
                            os << pad << w.space << key_str(w.key) << " " << op_str(w.op) << " "
                               << to_string(*w.value) << ";\n";
                          },
                          [&](const FieldWrite& w) {
                            os << pad << via_prefix(w.via) << w.field << " " << op_str(w.op) << " "
                               << to_string(*w.value) << ";\n";
                          },
                          [&](const Swap& w) {
                            os << pad << "swap(" << w.space << key_str(w.key_a) << ", " << w.space
                               << key_str(w.key_b) << ");\n";
                          },
                          [&](const If& i) {
                            os << pad << "if (" << to_string(*i.guard) << ") {\n";
                            print_stmts(os, i.then_body, ctx, indent + 1);
                            if (!i.else_body.empty()) {
                              os << pad << "} else {\n";
                              print_stmts(os, i.else_body, ctx, indent + 1);
                            }
                            os << pad << "}\n";
                          },
                          [&](const NestedLoop& n) { print_loop(os, *n.loop, ctx, indent); }},
               s.node);
  }
}

}  // namespace

std::string to_string(const Expr& e) {
  return std::visit(
      Overloaded{[](const FieldRef& f) { return via_prefix(f.via) + f.name; },
                 [](const VarRef& v) { return v.name; },
                 [](const SpaceRead& r) { return r.space + key_str(r.key); },
                 [](const Const& c) {
                   if (c.value.is_scalar() && c.value.as_scalar() == static_cast<double>(kStubTarget))
                     return std::string("$C");
                   std::ostringstream os;
                   if (c.value.is_scalar())
                     os << c.value.as_scalar();
                   else
                     os << to_string(c.value);
                   return os.str();
                 },
                 [](const Arith& a) { return sub_expr(a.lhs) + " " + op_str(a.op) + " " + sub_expr(a.rhs); },
                 [](const Compare& c) {
                   if (c.op == CmpOp::AbsDiffGtEps)
                     return "|" + to_string(*c.lhs) + " - " + to_string(*c.rhs) + "| > eps";
                   return sub_expr(c.lhs) + " " + op_str(c.op) + " " + sub_expr(c.rhs);
                 },
                 [](const Logic& l) {
                   if (l.op == LogicOp::Not) return "!" + sub_expr(l.lhs);
                   return sub_expr(l.lhs) + (l.op == LogicOp::And ? " && " : " || ") + sub_expr(l.rhs);
                 },
                 [](const Dist& d) { return "dist(" + to_string(*d.lhs) + ", " + to_string(*d.rhs) + ")"; },
                 [](const StructSize& s) { return "|" + struct_str(s.structure, s.path) + "|"; },
                 [](const WriteExpr& w) {
                   return "(" + w.space + key_str(w.key) + " = " + to_string(*w.value) + ")";
                 }},
      e.node);
}

std::string to_string(const LoopSpec& loop, const Program* ctx, int indent) {
  std::ostringstream os;
  print_loop(os, loop, ctx, indent);
  return os.str();
}

std::string to_string(const Program& p) { return to_string(p.root, &p, 0); }

// ---------------------------------------------------------------------------
// Validation

namespace {

class Validator {
 public:
  explicit Validator(const Program& p) : p_(p) {}

  std::vector<Diagnostic> run() {
    loop(p_.root, "root");
    return std::move(diags_);
  }

 private:
  struct Scope {
    const TupleSchema* schema = nullptr;
    std::vector<std::string> vars;
  };

  void report(std::string code, const std::string& path, std::string msg) {
    diags_.push_back({std::move(code), path, std::move(msg)});
  }

  bool has_var(const std::string& name) const {
    for (const auto& s : scopes_)
      if (std::find(s.vars.begin(), s.vars.end(), name) != s.vars.end()) return true;
    return false;
  }

  const TupleSchema* schema() const {
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it)
      if (it->schema) return it->schema;
    return nullptr;
  }

  // Dimension of a field visible in the current scope, or nullopt.
  std::optional<std::size_t> field_dim(const std::string& name) const {
    if (const TupleSchema* s = schema()) {
      if (auto i = s->find(name)) {
        const FieldType& t = s->field(*i).type;
        return t.kind == FieldKind::Vector ? t.dim : 0;
      }
    }
    if (const LocalizedField* lf = p_.find_localized(name))
      return lf->origin.kind == ValueKind::Vector ? lf->origin.dim : 0;
    return std::nullopt;
  }

  void selection(const Selection& sel, const std::string& path) {
    auto it = p_.reservoirs.find(sel.reservoir);
    if (it == p_.reservoirs.end() || !it->second) {
      report("UnknownReservoir", path, "reservoir '" + sel.reservoir + "' not declared");
      return;
    }
    const TupleSchema& s = it->second->schema();
    auto check_index = [&](const std::string& f) {
      auto i = s.find(f);
      if (!i)
        report("UnknownField", path, "field '" + f + "' not in " + sel.reservoir);
      else if (s.field(*i).type.kind != FieldKind::Index)
        report("NotIndexField", path, "field '" + f + "' is not an index field");
    };
    for (const auto& [f, v] : sel.where) {
      check_index(f);
      if (!has_var(v)) report("UnknownVar", path, "selection variable '" + v + "' not bound");
    }
    if (sel.part) check_index(sel.part->field);
  }

  void loop(const LoopSpec& l, const std::string& path) {
    Scope sc;
    std::visit(Overloaded{[&](const TupleScan& t) {
                            selection(t.sel, path + ".domain");
                            auto it = p_.reservoirs.find(t.sel.reservoir);
                            if (it != p_.reservoirs.end() && it->second) sc.schema = &it->second->schema();
                          },
                          [&](const ValueScan& v) {
                            selection(v.sel, path + ".domain");
                            auto it = p_.reservoirs.find(v.sel.reservoir);
                            if (it != p_.reservoirs.end() && it->second && !it->second->schema().find(v.field))
                              report("UnknownField", path + ".domain", "field '" + v.field + "' not in reservoir");
                            sc.vars.push_back(l.binder);
                          },
                          [&](const Enumerate& e) {
                            expr(e.universe, path + ".domain.universe", false);
                            if (e.excluded) expr(e.excluded, path + ".domain.excluded", false);
                            sc.vars.push_back(l.binder);
                          },
                          [&](const IndexInterval& i) {
                            if (i.underlying) {
                              // A padded row is selected by a loop nested inside it.
                              if (i.padded_over) scopes_.push_back(Scope{nullptr, {*i.padded_over}});
                              if (const auto* ts = std::get_if<TupleScan>(&i.underlying->node)) {
                                selection(ts->sel, path + ".domain");
                                auto it = p_.reservoirs.find(ts->sel.reservoir);
                                if (it != p_.reservoirs.end() && it->second) sc.schema = &it->second->schema();
                              } else if (const auto* vs = std::get_if<ValueScan>(&i.underlying->node)) {
                                selection(vs->sel, path + ".domain");
                              }
                              if (i.padded_over) scopes_.pop_back();
                            }
                            sc.vars.push_back(l.binder);
                          }},
               l.domain.node);
    scopes_.push_back(sc);
    if (l.kind == LoopKind::Whilelem && innermost_tuple_loop(l) == &l && !has_guard(l.body))
      report("MissingGuard", path, "whilelem body contains no guard");
    stmts(l.body, path + "/body");
    scopes_.pop_back();
  }

  static bool has_guard(const std::vector<Stmt>& body) {
    bool found = false;
    walk_stmts(body, [&](const Stmt& s) {
      if (const auto* i = std::get_if<If>(&s.node); i && !i->structural) found = true;
    });
    return found;
  }

  void stmts(const std::vector<Stmt>& body, const std::string& path) {
    for (std::size_t i = 0; i < body.size(); ++i) {
      std::string sp = path + "[" + std::to_string(i) + "]";
      std::visit(Overloaded{[&](const SpaceWrite& w) {
                              auto dim = space_access(w.space, w.key, sp);
                              auto vd = expr(w.value, sp + ".value", false);
                              if (dim && vd && *dim != *vd)
                                report("DimMismatch", sp, "value dim does not match space " + w.space);
                            },
                            [&](const FieldWrite& w) {
                              auto fd = field_dim(w.field);
                              if (!fd) report("UnknownField", sp, "field '" + w.field + "' not declared");
                              auto vd = expr(w.value, sp + ".value", false);
                              if (fd && vd && *fd != *vd)
                                report("DimMismatch", sp, "value dim does not match field " + w.field);
                            },
                            [&](const Swap& w) {
                              space_access(w.space, w.key_a, sp);
                              space_access(w.space, w.key_b, sp);
                            },
                            [&](const If& f) {
                              auto gd = expr(f.guard, sp + ".guard", true);
                              if (gd && *gd != 0) report("DimMismatch", sp + ".guard", "guard is not scalar");
                              stmts(f.then_body, sp + ".then");
                              stmts(f.else_body, sp + ".else");
                            },
                            [&](const NestedLoop& n) { loop(*n.loop, sp); }},
                 body[i].node);
    }
  }

  // Returns the value dim (0 = scalar) of the space, or nullopt if unknown.
  std::optional<std::size_t> space_access(const std::string& space, const std::vector<ExprPtr>& key,
                                          const std::string& path) {
    for (std::size_t i = 0; i < key.size(); ++i) {
      auto kd = expr(key[i], path + ".key[" + std::to_string(i) + "]", false);
      if (kd && *kd != 0) report("DimMismatch", path, "key component is not scalar");
    }
    auto it = p_.spaces.find(space);
    if (it == p_.spaces.end()) {
      report("UnknownSpace", path, "space '" + space + "' not declared");
      return std::nullopt;
    }
    if (it->second.key_arity != key.size())
      report("ArityMismatch", path,
             "space " + space + " has key arity " + std::to_string(it->second.key_arity) + ", got " +
                 std::to_string(key.size()));
    return it->second.kind == ValueKind::Vector ? it->second.dim : 0;
  }

  // Returns the dim (0 = scalar) or nullopt when unknown/invalid.
  std::optional<std::size_t> expr(const ExprPtr& e, const std::string& path, bool in_guard) {
    if (!e) {
      report("InvalidProgram", path, "null expression");
      return std::nullopt;
    }
    return std::visit(
        Overloaded{
            [&](const FieldRef& f) -> std::optional<std::size_t> {
              auto d = field_dim(f.name);
              if (!d) report("UnknownField", path, "field '" + f.name + "' not declared");
              return d;
            },
            [&](const VarRef& v) -> std::optional<std::size_t> {
              if (!has_var(v.name) && !p_.params.count(v.name)) {
                report("UnknownVar", path, "variable '" + v.name + "' not bound");
                return std::nullopt;
              }
              return 0;
            },
            [&](const SpaceRead& r) { return space_access(r.space, r.key, path); },
            [&](const Const& c) -> std::optional<std::size_t> { return c.value.is_scalar() ? 0 : c.value.dim(); },
            [&](const Arith& a) -> std::optional<std::size_t> {
              auto l = expr(a.lhs, path + ".lhs", in_guard);
              auto r = expr(a.rhs, path + ".rhs", in_guard);
              if (!l || !r) return std::nullopt;
              if (*l == *r) return *l;
              bool scal = (*l == 0 || *r == 0);
              if (scal && (a.op == ArithOp::Mul || (a.op == ArithOp::Div && *r == 0))) return std::max(*l, *r);
              report("DimMismatch", path, "arithmetic on dims " + std::to_string(*l) + " and " + std::to_string(*r));
              return std::nullopt;
            },
            [&](const Compare& c) -> std::optional<std::size_t> {
              auto l = expr(c.lhs, path + ".lhs", in_guard);
              auto r = expr(c.rhs, path + ".rhs", in_guard);
              if (l && r && (*l != 0 || *r != 0))
                if (!((c.op == CmpOp::Eq || c.op == CmpOp::Ne) && *l == *r))
                  report("DimMismatch", path, "comparison of non-scalars");
              return 0;
            },
            [&](const Logic& lg) -> std::optional<std::size_t> {
              expr(lg.lhs, path + ".lhs", in_guard);
              if (lg.op != LogicOp::Not) expr(lg.rhs, path + ".rhs", in_guard);
              return 0;
            },
            [&](const Dist& d) -> std::optional<std::size_t> {
              auto l = expr(d.lhs, path + ".lhs", in_guard);
              auto r = expr(d.rhs, path + ".rhs", in_guard);
              if (l && r && *l != *r)
                report("DimMismatch", path, "dist between dim " + std::to_string(*l) + " and dim " + std::to_string(*r));
              return 0;
            },
            [&](const StructSize&) -> std::optional<std::size_t> { return 0; },
            [&](const WriteExpr& w) -> std::optional<std::size_t> {
              report(in_guard ? "ImpureGuard" : "ImpureExpr", path, "write to " + w.space + " inside an expression");
              return std::nullopt;
            }},
        e->node);
  }

  const Program& p_;
  std::vector<Scope> scopes_;
  std::vector<Diagnostic> diags_;
};

}  // namespace

std::vector<Diagnostic> validate_program(const Program& p) { return Validator(p).run(); }

void require_valid(const Program& p) {
  auto diags = validate_program(p);
  if (diags.empty()) return;
  std::string msg;
  for (const auto& d : diags) msg += "\n  " + d.code + " at " + d.path + ": " + d.message;
  throw Error(ErrorCode::InvalidProgram, "program failed validation:" + msg);
}

}  // namespace forelem::ir
