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

#include "forelem/transforms.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include <json.hpp>

namespace forelem::xform {

using namespace ir;
using namespace ir::dsl;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// A perfect loop nest unpacked into its levels. Only the last level keeps
// its body.
struct Nest {
  std::vector<LoopSpec> levels;

  explicit Nest(const LoopSpec& root) {
    const LoopSpec* cur = &root;
    for (;;) {
      levels.push_back(*cur);
      const LoopSpec* child = nullptr;
      if (cur->body.size() == 1)
        if (const auto* n = std::get_if<NestedLoop>(&cur->body[0].node))
          if (!std::holds_alternative<Enumerate>(n->loop->domain.node)) child = n->loop.get();
      if (!child) break;
      levels.back().body.clear();
      cur = child;
    }
  }

  LoopSpec pack() const {
    LoopSpec acc = levels.back();
    for (std::size_t i = levels.size() - 1; i-- > 0;) {
      LoopSpec l = levels[i];
      l.body = {nested(std::move(acc))};
      acc = std::move(l);
    }
    return acc;
  }

  bool is_tuple(std::size_t i) const {
    const Domain& d = levels[i].domain;
    if (std::holds_alternative<TupleScan>(d.node)) return true;
    if (const auto* ii = std::get_if<IndexInterval>(&d.node))
      return ii->underlying && std::holds_alternative<TupleScan>(ii->underlying->node);
    return false;
  }

  std::size_t tuple_level() const {
    for (std::size_t i = 0; i < levels.size(); ++i)
      if (is_tuple(i)) return i;
    throw Error(ErrorCode::InvalidProgram, "loop nest has no tuple loop");
  }

  std::vector<Stmt>& body() { return levels.back().body; }
};

const TupleSchema& schema_of(const Program& p, const Nest& n) {
  const Selection* sel = selection_of(n.levels[n.tuple_level()].domain);
  return p.reservoir(sel->reservoir).schema();
}

std::size_t require_index_field(const TupleSchema& s, const std::string& field) {
  auto i = s.find(field);
  if (!i) throw Error(ErrorCode::UnknownField, "field '" + field + "' not in the tuple schema");
  if (s.field(*i).type.kind != FieldKind::Index)
    throw Error(ErrorCode::NotIndexField, "field '" + field + "' is not an index field");
  return *i;
}

// Every loop variable bound or referenced anywhere in the program.
std::set<std::string> names_in_use(const Program& p) {
  std::set<std::string> out;
  for (const auto& [k, v] : p.params) out.insert(k);
  std::function<void(const LoopSpec&)> loop = [&](const LoopSpec& l) {
    out.insert(l.binder);
    if (const auto* en = std::get_if<Enumerate>(&l.domain.node)) {
      visit_expr(en->universe, [&](const Expr& e) {
        if (const auto* v = std::get_if<VarRef>(&e.node)) out.insert(v->name);
      });
    }
    visit_stmts(l.body, [&](const Expr& e) {
      if (const auto* v = std::get_if<VarRef>(&e.node)) out.insert(v->name);
    });
    walk_stmts(l.body, [&](const Stmt& s) {
      if (const auto* n = std::get_if<NestedLoop>(&s.node)) out.insert(n->loop->binder);
    });
  };
  for (const LoopSpec* l : nest_levels(p.root)) loop(*l);
  return out;
}

std::string fresh_name(const Program& p, const TupleSchema& schema, std::vector<std::string> candidates) {
  auto used = names_in_use(p);
  for (const auto& f : schema.fields()) used.insert(f.name);
  for (const auto& c : candidates)
    if (!used.count(c)) return c;
  for (int i = 0;; ++i) {
    std::string c = candidates.front() + std::to_string(i);
    if (!used.count(c)) return c;
  }
}

bool has_reduce(const Program& p) {
  return std::any_of(p.history.begin(), p.history.end(),
                     [](const std::string& h) { return h.rfind("reduce(", 0) == 0; });
}

// Rewrites expressions and, through `stmt_fn`, individual statements. The
// statement hook sees statements whose expressions are already rewritten and
// returns a replacement or nullopt.
using StmtHook = std::function<std::optional<Stmt>(const Stmt&)>;

std::vector<Stmt> map_body(const std::vector<Stmt>& body, const ExprRewriter& fe, const StmtHook& fs) {
  std::vector<Stmt> out;
  for (const Stmt& s : body) {
    Stmt r = std::visit(
        Overloaded{[&](const If& f) {
                     return Stmt{If{rewrite_expr(f.guard, fe), map_body(f.then_body, fe, fs),
                                    map_body(f.else_body, fe, fs), f.structural}};
                   },
                   [&](const NestedLoop& n) {
                     LoopSpec l = *n.loop;
                     if (auto* en = std::get_if<Enumerate>(&l.domain.node)) {
                       en->universe = rewrite_expr(en->universe, fe);
                       en->excluded = rewrite_expr(en->excluded, fe);
                     }
                     l.body = map_body(l.body, fe, fs);
                     return Stmt{NestedLoop{std::make_shared<const LoopSpec>(std::move(l))}};
                   },
                   [&](const auto&) { return rewrite_stmts({s}, fe).front(); }},
        s.node);
    if (fs)
      if (auto rep = fs(r)) r = std::move(*rep);
    out.push_back(std::move(r));
  }
  return out;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<Program> split(const Program& p, const std::string& field, std::size_t count, SplitMode mode) {
  if (count == 0) throw Error(ErrorCode::InvalidArgument, "partition count must be >= 1");
  Nest nest(p.root);
  const Selection* tsel = selection_of(nest.levels[nest.tuple_level()].domain);
  const TupleReservoir& r = p.reservoir(tsel->reservoir);
  require_index_field(r.schema(), field);
  for (const auto& l : nest.levels)
    if (const Selection* s = selection_of(l.domain); s && s->part)
      throw Error(ErrorCode::InvalidProgram, "program is already split");
  if (mode == SplitMode::Range && r.empty())
    throw Error(ErrorCode::EmptyReservoir, "cannot split an empty reservoir by range");
  std::vector<Program> out;
  for (std::size_t i = 0; i < count; ++i) {
    Nest n = nest;
    for (auto& l : n.levels)
      if (Selection* s = mutable_selection_of(l.domain)) s->part = PartitionSpec{field, count, i, mode};
    Program q = p;
    q.root = n.pack();
    q.history.push_back(std::string(mode == SplitMode::Value ? "split" : "split_range") + "(" + field + ")");
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Program orthogonalize(const Program& p, const std::string& field, const std::string& var) {
  Nest n(p.root);
  std::size_t t = n.tuple_level();
  const auto* ts = std::get_if<TupleScan>(&n.levels[t].domain.node);
  if (!ts) throw Error(ErrorCode::InvalidProgram, "orthogonalize applies to a reservoir loop, not a materialized one");
  const TupleSchema& schema = p.reservoir(ts->sel.reservoir).schema();
  require_index_field(schema, field);
  for (const auto& [f, v] : ts->sel.where)
    if (f == field) throw Error(ErrorCode::InvalidArgument, "loop is already orthogonalized on '" + field + "'");
  if (var.empty() || names_in_use(p).count(var))
    throw Error(ErrorCode::InvalidArgument, "loop variable '" + var + "' is empty or already in use");

  LoopSpec inner = n.levels[t];
  LoopSpec outer{inner.kind, var, Domain{ValueScan{ts->sel, field}}, {}};
  inner.kind = LoopKind::Forelem;
  std::get<TupleScan>(inner.domain.node).sel.where.emplace_back(field, var);
  n.levels[t] = std::move(outer);
  n.levels.insert(n.levels.begin() + static_cast<std::ptrdiff_t>(t) + 1, std::move(inner));
  Program q = p;
  q.root = n.pack();
  q.history.push_back("orthogonalize(" + field + "," + var + ")");
  return q;
}

std::vector<Program> split_by_value(const Program& p, const std::string& field, std::size_t count) {
  return split(p, field, count, SplitMode::Value);
}

std::vector<Program> split_by_range(const Program& p, const std::string& field, std::size_t count) {
  return split(p, field, count, SplitMode::Range);
}

Program localize(const Program& p, const std::string& space, const std::string& field_name) {
  auto sit = p.spaces.find(space);
  if (sit == p.spaces.end()) throw Error(ErrorCode::UnknownSpace, "space '" + space + "' not declared");
  for (const auto& a : p.assertions)
    if (a.derived == space)
      throw Error(ErrorCode::NotLocalizable, space + " is derived by an assertion and is maintained globally");
  const std::string name = field_name.empty() ? lower(space) : field_name;
  Nest n(p.root);
  if (n.tuple_level() != n.levels.size() - 1)
    throw Error(ErrorCode::NotLocalizable, "the tuple loop is not the innermost loop");
  const TupleSchema& schema = schema_of(p, n);
  if (schema.find(name) || p.find_localized(name))
    throw Error(ErrorCode::InvalidArgument, "field '" + name + "' already exists");

  std::optional<std::vector<std::string>> key_fields;
  bool written = false;
  auto check_key = [&](const std::vector<ExprPtr>& key) {
    std::vector<std::string> fields;
    for (const auto& k : key) {
      const auto* f = std::get_if<FieldRef>(&k->node);
      if (!f || !schema.find(f->name) || schema.field(*schema.find(f->name)).type.kind != FieldKind::Index)
        throw Error(ErrorCode::NotLocalizable,
                    space + " is accessed with key " + to_string(*k) + ", which is not an index field of the tuple");
      fields.push_back(f->name);
    }
    if (key_fields && *key_fields != fields)
      throw Error(ErrorCode::NotLocalizable,
                  space + " is accessed through different tuple fields, so one location is shared by several tuples");
    key_fields = fields;
  };
  const auto& body = n.body();
  visit_stmts(body, [&](const Expr& e) {
    if (const auto* r = std::get_if<SpaceRead>(&e.node); r && r->space == space) check_key(r->key);
  });
  walk_stmts(body, [&](const Stmt& s) {
    if (const auto* w = std::get_if<SpaceWrite>(&s.node); w && w->space == space) {
      check_key(w->key);
      written = true;
    }
    if (const auto* w = std::get_if<Swap>(&s.node); w && w->space == space)
      throw Error(ErrorCode::NotLocalizable, "swap touches two locations of " + space);
  });
  if (!key_fields) throw Error(ErrorCode::NotLocalizable, space + " is not accessed in the loop body");

  ExprRewriter fe = [&](const ExprPtr& e) -> ExprPtr {
    if (const auto* r = std::get_if<SpaceRead>(&e->node); r && r->space == space)
      return std::make_shared<const Expr>(Expr{FieldRef{name, {}}});
    return nullptr;
  };
  StmtHook fs = [&](const Stmt& s) -> std::optional<Stmt> {
    if (const auto* w = std::get_if<SpaceWrite>(&s.node); w && w->space == space)
      return Stmt{FieldWrite{name, w->op, w->value, {}}};
    return std::nullopt;
  };
  n.body() = map_body(body, fe, fs);
  Program q = p;
  q.root = n.pack();
  q.localized.push_back(LocalizedField{name, sit->second, *key_fields, written});
  q.spaces.erase(space);
  q.history.push_back("localize(" + space + "," + name + ")");
  return q;
}

Program materialize(const Program& p) {
  Nest n(p.root);
  std::size_t t = n.tuple_level();
  if (std::holds_alternative<IndexInterval>(n.levels[t].domain.node)) return p;
  const Selection tsel = *selection_of(n.levels[t].domain);
  const std::string structure = "P" + tsel.reservoir;
  const TupleSchema& schema = p.reservoir(tsel.reservoir).schema();
  const std::string idx = fresh_name(p, schema, {"i", "kk", "ii", "n"});

  for (std::size_t lv = 0; lv < n.levels.size(); ++lv) {
    LoopSpec& l = n.levels[lv];
    const Selection* s = selection_of(l.domain);
    if (!s) throw Error(ErrorCode::InvalidProgram, "loop level " + std::to_string(lv) + " has no reservoir");
    IndexInterval ii;
    ii.structure = structure;
    for (const auto& [f, v] : s->where) ii.path.push_back(v);
    if (const auto* vs = std::get_if<ValueScan>(&l.domain.node)) ii.structure += "." + vs->field;
    ii.underlying = std::make_shared<const Domain>(l.domain);
    l.domain = Domain{std::move(ii)};
    if (lv == t) l.binder = idx;
  }

  std::vector<std::string> via{structure};
  for (const auto& [f, v] : tsel.where) via.push_back(v);
  via.push_back(idx);
  auto is_tuple_field = [&](const std::string& f) { return schema.find(f) || p.find_localized(f); };
  ExprRewriter fe = [&](const ExprPtr& e) -> ExprPtr {
    if (const auto* f = std::get_if<FieldRef>(&e->node); f && f->via.empty() && is_tuple_field(f->name))
      return std::make_shared<const Expr>(Expr{FieldRef{f->name, via}});
    return nullptr;
  };
  StmtHook fs = [&](const Stmt& s) -> std::optional<Stmt> {
    if (const auto* w = std::get_if<FieldWrite>(&s.node); w && w->via.empty())
      return Stmt{FieldWrite{w->field, w->op, w->value, via}};
    return std::nullopt;
  };
  n.body() = map_body(n.body(), fe, fs);
  Program q = p;
  q.root = n.pack();
  q.history.push_back("materialize");
  return q;
}

Program reduce_reservoir(const Program& p, const SubsetSpec& subset) {
  if (has_reduce(p)) return p;
  Nest n(p.root);
  if (n.levels.size() != 1)
    throw Error(ErrorCode::NotReducible, "reservoir reduction applies to a flat loop over the whole reservoir");
  const auto* ts = std::get_if<TupleScan>(&n.levels[0].domain.node);
  if (!ts || !ts->sel.where.empty() || ts->sel.part)
    throw Error(ErrorCode::NotReducible, "reservoir reduction applies to a flat loop over the whole reservoir");
  const TupleReservoir& r = p.reservoir(ts->sel.reservoir);
  const TupleSchema& schema = r.schema();
  std::size_t fu = require_index_field(schema, subset.source);
  std::size_t fv = require_index_field(schema, subset.target);
  if (schema.size() != 2)
    throw Error(ErrorCode::NotReducible, "family tuples must consist of the source and target fields only");
  auto pit = p.params.find(subset.universe);
  if (pit == p.params.end())
    throw Error(ErrorCode::NotReducible, "no program parameter '" + subset.universe + "' gives the target universe");
  const std::uint64_t V = pit->second;

  // Families: sources whose targets are exactly [0,V) \ {u}.
  std::map<std::uint64_t, std::vector<std::uint64_t>> targets;
  for (std::size_t i = 0; i < r.size(); ++i) {
    std::uint64_t v = r.index(i, fv);
    if (v == kStubTarget) throw Error(ErrorCode::NotReducible, "reservoir already contains stub tuples");
    targets[r.index(i, fu)].push_back(v);
  }
  std::set<std::uint64_t> family;
  if (V >= 2) {
    for (auto& [u, ts_] : targets) {
      if (ts_.size() != V - 1) continue;
      std::sort(ts_.begin(), ts_.end());
      bool ok = true;
      for (std::uint64_t k = 0, w = 0; k < ts_.size() && ok; ++k, ++w) {
        if (w == u) ++w;
        ok = ts_[k] == w;
      }
      if (ok) family.insert(u);
    }
  }
  Program q = p;
  q.history.push_back("reduce(dangling)");
  if (family.empty()) return q;

  TupleReservoir reduced = r.empty_like(r.name());
  for (std::size_t i = 0; i < r.size(); ++i)
    if (!family.count(r.index(i, fu))) reduced.insert_packed(r.packed(i));
  for (std::uint64_t u : family) {
    double w[2];
    w[schema.offset(fu)] = static_cast<double>(u);
    w[schema.offset(fv)] = static_cast<double>(kStubTarget);
    reduced.insert_packed(w);
  }
  q.reservoirs[r.name()] = std::make_shared<const TupleReservoir>(std::move(reduced));

  // Spaces whose every access is keyed by the same fields, including the
  // target, hold per-tuple state and keep the stub key.
  auto& body = n.body();
  std::map<std::string, std::optional<std::vector<std::string>>> keys;
  std::set<std::string> not_tuple_state;
  auto note = [&](const std::string& space, const std::vector<ExprPtr>& key) {
    std::vector<std::string> fs;
    bool plain = true;
    for (const auto& k : key) {
      if (const auto* f = std::get_if<FieldRef>(&k->node)) fs.push_back(f->name);
      else plain = false;
    }
    bool has_target = std::find(fs.begin(), fs.end(), subset.target) != fs.end();
    auto& slot = keys[space];
    if (!plain || !has_target || (slot && *slot != fs)) not_tuple_state.insert(space);
    slot = fs;
  };
  visit_stmts(body, [&](const Expr& e) {
    if (const auto* rd = std::get_if<SpaceRead>(&e.node)) note(rd->space, rd->key);
  });
  walk_stmts(body, [&](const Stmt& s) {
    if (const auto* w = std::get_if<SpaceWrite>(&s.node)) note(w->space, w->key);
    if (const auto* w = std::get_if<Swap>(&s.node)) not_tuple_state.insert(w->space);
  });
  auto tuple_state = [&](const std::string& s) { return keys.count(s) && !not_tuple_state.count(s); };

  const std::string w = fresh_name(p, schema, {"z", "w", "y"});
  // Replaces the target field by w except inside keys of tuple-state spaces.
  ExprRewriter subst = [&](const ExprPtr& e) -> ExprPtr {
    if (const auto* f = std::get_if<FieldRef>(&e->node); f && f->name == subset.target) return var(w);
    if (const auto* rd = std::get_if<SpaceRead>(&e->node); rd && tuple_state(rd->space)) {
      SpaceRead orig = *rd;
      for (auto& k : orig.key)
        if (const auto* v = std::get_if<VarRef>(&k->node); v && v->name == w) k = field(subset.target);
      return std::make_shared<const Expr>(Expr{std::move(orig)});
    }
    return nullptr;
  };
  auto mentions_target = [&](const ExprPtr& e) {
    bool found = false;
    visit_expr(rewrite_expr(e, subst), [&](const Expr& x) {
      if (const auto* v = std::get_if<VarRef>(&x.node); v && v->name == w) found = true;
    });
    return found;
  };

  const ExprPtr is_stub = cmp(CmpOp::Eq, field(subset.target), cnst(static_cast<double>(kStubTarget)));
  std::function<std::vector<Stmt>(const std::vector<Stmt>&)> rewrite = [&](const std::vector<Stmt>& in) {
    std::vector<Stmt> out;
    for (const Stmt& s : in) {
      if (const auto* f = std::get_if<If>(&s.node)) {
        if (!f->structural && mentions_target(f->guard))
          throw Error(ErrorCode::NotReducible, "guard " + to_string(*f->guard) + " depends on the family member");
        out.push_back(Stmt{If{f->guard, rewrite(f->then_body), rewrite(f->else_body), f->structural}});
        continue;
      }
      if (std::holds_alternative<NestedLoop>(s.node))
        throw Error(ErrorCode::NotReducible, "loop body already contains a nested loop");
      bool expand = false;
      if (const auto* sw = std::get_if<SpaceWrite>(&s.node)) {
        if (!tuple_state(sw->space)) {
          for (const auto& k : sw->key) expand = expand || mentions_target(k);
        }
        expand = expand || mentions_target(sw->value);
      } else if (const auto* fw = std::get_if<FieldWrite>(&s.node)) {
        expand = mentions_target(fw->value);
      } else if (const auto* sp = std::get_if<Swap>(&s.node)) {
        for (const auto& k : sp->key_a) expand = expand || mentions_target(k);
        for (const auto& k : sp->key_b) expand = expand || mentions_target(k);
        if (expand) throw Error(ErrorCode::NotReducible, "swap depends on the family member");
      }
      if (!expand) {
        out.push_back(s);
        continue;
      }
      std::vector<Stmt> inner = map_body({s}, subst, [&](const Stmt& x) -> std::optional<Stmt> {
        if (const auto* sw = std::get_if<SpaceWrite>(&x.node); sw && tuple_state(sw->space)) {
          SpaceWrite c = *sw;
          for (auto& k : c.key)
            if (const auto* v = std::get_if<VarRef>(&k->node); v && v->name == w) k = field(subset.target);
          return Stmt{std::move(c)};
        }
        return std::nullopt;
      });
      Domain all{Enumerate{var(subset.universe), field(subset.source), subset.arbitrary}};
      out.push_back(when(is_stub, {nested(forelem(w, all, std::move(inner)))}, {s}));
    }
    return out;
  };
  body = rewrite(body);
  q.root = n.pack();
  return q;
}

Program interchange(const Program& p, std::size_t a, std::size_t b) {
  if (b != a + 1) throw Error(ErrorCode::NotPerfectlyNested, "only adjacent loop levels can be interchanged");
  Nest n(p.root);
  if (b >= n.levels.size())
    throw Error(ErrorCode::NotPerfectlyNested,
                "nest has " + std::to_string(n.levels.size()) + " perfectly nested levels, level " +
                    std::to_string(b) + " requested");
  auto* ia = std::get_if<IndexInterval>(&n.levels[a].domain.node);
  auto* ib = std::get_if<IndexInterval>(&n.levels[b].domain.node);
  if (!ia || !ib) throw Error(ErrorCode::NotPerfectlyNested, "interchange requires materialized loop levels");

  std::vector<Stmt> body = std::move(n.body());
  n.levels.back().body.clear();
  if (n.is_tuple(b) && !n.is_tuple(a)) {
    // The ragged tuple level moves outward: pad it and guard the body.
    ib->padded_over = n.levels[a].binder;
    ExprPtr len = std::make_shared<const Expr>(Expr{StructSize{ib->structure, ib->path}});
    If g{cmp(CmpOp::Lt, var(n.levels[b].binder), len), std::move(body), {}, true};
    body = {Stmt{std::move(g)}};
  } else if (n.is_tuple(a) && ia->padded_over && *ia->padded_over == n.levels[b].binder) {
    ia->padded_over.reset();
    const If* g = body.size() == 1 ? std::get_if<If>(&body[0].node) : nullptr;
    if (!g || !g->structural) throw Error(ErrorCode::NotPerfectlyNested, "padding guard missing");
    std::vector<Stmt> inner = g->then_body;
    body = std::move(inner);
  } else if (n.is_tuple(a) || n.is_tuple(b)) {
    throw Error(ErrorCode::NotPerfectlyNested, "tuple level bounds depend on the other loop");
  }
  std::swap(n.levels[a], n.levels[b]);
  n.levels.back().body = std::move(body);
  Program q = p;
  q.root = n.pack();
  q.history.push_back("interchange(" + std::to_string(a) + "," + std::to_string(b) + ")");
  return q;
}

Program concretize(const Program& p, Layout layout) {
  Program q = materialize(p);
  if (layout == Layout::JaggedDiagonal) {
    bool padded = false;
    for (const LoopSpec* l : nest_levels(q.root))
      if (const auto* ii = std::get_if<IndexInterval>(&l->domain.node); ii && ii->padded_over) padded = true;
    if (!padded)
      throw Error(ErrorCode::LayoutUnsupported, "jagged-diagonal layout needs an interchanged, padded loop nest");
  }
  q.layout = layout;
  q.concretized = true;
  q.history.push_back(std::string("concretize(") + to_string(layout) + ")");
  return q;
}

// ---------------------------------------------------------------------------
// Variants

namespace {

struct StepCall {
  std::string name;
  std::vector<std::string> args;
};

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

StepCall parse_step(const std::string& step) {
  StepCall c;
  auto open = step.find('(');
  c.name = trim(step.substr(0, open));
  if (open != std::string::npos) {
    auto close = step.rfind(')');
    if (close == std::string::npos || close < open)
      throw Error(ErrorCode::InvalidArgument, "malformed step '" + step + "'");
    std::string inner = step.substr(open + 1, close - open - 1);
    while (!trim(inner).empty()) {
      auto comma = inner.find(',');
      c.args.push_back(trim(inner.substr(0, comma)));
      if (comma == std::string::npos) break;
      inner = inner.substr(comma + 1);
    }
  }
  if (c.name.empty()) throw Error(ErrorCode::InvalidArgument, "empty pipeline step");
  static const std::set<std::string> known = {"orthogonalize", "localize",  "materialize", "reduce",
                                              "interchange",   "concretize", "split",       "split_value", "split_range"};
  if (!known.count(c.name)) throw Error(ErrorCode::InvalidArgument, "unknown transformation '" + c.name + "'");
  return c;
}

void want_args(const StepCall& c, std::size_t lo, std::size_t hi) {
  if (c.args.size() < lo || c.args.size() > hi)
    throw Error(ErrorCode::InvalidArgument, "step '" + c.name + "' takes " + std::to_string(lo) + "-" +
                                                std::to_string(hi) + " arguments");
}

std::size_t to_level(const std::string& s) {
  try {
    std::size_t used = 0;
    auto v = std::stoul(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "'" + s + "' is not a loop level");
  }
}

bool is_split(const std::string& name) { return name == "split" || name == "split_value" || name == "split_range"; }

std::string raw_message(const Error& e) {
  std::string m = e.what();
  auto pos = m.find(": ");
  return pos == std::string::npos ? m : m.substr(pos + 2);
}

}  // namespace

Program apply_step(const Program& p, const std::string& step) {
  StepCall c = parse_step(step);
  if (c.name == "orthogonalize") {
    want_args(c, 1, 2);
    return orthogonalize(p, c.args[0], c.args.size() > 1 ? c.args[1] : c.args[0] + "0");
  }
  if (c.name == "localize") {
    want_args(c, 1, 2);
    return localize(p, c.args[0], c.args.size() > 1 ? c.args[1] : "");
  }
  if (c.name == "materialize") {
    want_args(c, 0, 0);
    return materialize(p);
  }
  if (c.name == "reduce") {
    SubsetSpec s;
    for (const auto& a : c.args) {
      if (a == "arbitrary") s.arbitrary = true;
      else if (a != "dangling") throw Error(ErrorCode::InvalidArgument, "unknown reduce option '" + a + "'");
    }
    return reduce_reservoir(p, s);
  }
  if (c.name == "interchange") {
    want_args(c, 2, 2);
    return interchange(p, to_level(c.args[0]), to_level(c.args[1]));
  }
  if (c.name == "concretize") {
    want_args(c, 1, 1);
    return concretize(p, parse_layout(c.args[0]));
  }
  if (is_split(c.name)) throw Error(ErrorCode::InvalidArgument, "split steps need a partition count; use compose");
  throw Error(ErrorCode::InvalidArgument, "unknown transformation '" + c.name + "'");
}

std::vector<Program> compose(const Program& base, const Variant& v, std::size_t partitions) {
  if (partitions == 0) throw Error(ErrorCode::InvalidArgument, "partition count must be >= 1");
  std::vector<Program> progs{base};
  bool split_done = false;
  auto run = [&](std::size_t pos, const std::string& step, const std::function<void()>& fn) {
    try {
      fn();
      for (const auto& q : progs) require_valid(q);
    } catch (const Error& e) {
      throw Error(e.code(), v.name + " step " + std::to_string(pos) + " '" + step + "': " + raw_message(e));
    }
  };
  for (std::size_t i = 0; i < v.pipeline.size(); ++i) {
    const std::string& step = v.pipeline[i];
    run(i + 1, step, [&] {
      StepCall c = parse_step(step);
      if (is_split(c.name)) {
        want_args(c, 1, 1);
        if (split_done) throw Error(ErrorCode::InvalidProgram, "pipeline splits twice");
        split_done = true;
        progs = c.name == "split_range" ? split_by_range(progs[0], c.args[0], partitions)
                                        : split_by_value(progs[0], c.args[0], partitions);
        return;
      }
      for (auto& q : progs) q = apply_step(q, step);
    });
  }
  if (v.layout != Layout::AoS)
    run(v.pipeline.size() + 1, std::string("concretize(") + to_string(v.layout) + ")", [&] {
      for (auto& q : progs)
        if (!q.concretized || q.layout != v.layout) q = concretize(q, v.layout);
    });
  return progs;
}

const std::vector<Variant>& builtin_variants() {
  using xchg::ExchangeScheme;
  static const std::vector<Variant> kVariants = {
      {"Kmeans_1", "kmeans", {"orthogonalize(x,y)", "split(x)"}, ExchangeScheme::Buffered, Layout::AoS},
      {"Kmeans_2", "kmeans", {"orthogonalize(x,y)", "split(x)"}, ExchangeScheme::Indirect, Layout::AoS},
      {"Kmeans_3",
       "kmeans",
       {"orthogonalize(x,y)", "split(x)", "localize(COORDS,coords)", "localize(M,c_x)"},
       ExchangeScheme::Indirect,
       Layout::AoS},
      {"Kmeans_4",
       "kmeans",
       {"orthogonalize(x,y)", "split(x)", "localize(COORDS,coords)", "localize(M,c_x)"},
       ExchangeScheme::Buffered,
       Layout::AoS},
      {"PageRank_1", "pagerank", {"reduce(dangling)", "split(u)"}, ExchangeScheme::Buffered, Layout::AoS},
      {"PageRank_2",
       "pagerank",
       {"reduce(dangling)", "orthogonalize(v,w)", "split(v)", "localize(OLD,old)", "materialize"},
       ExchangeScheme::Buffered,
       Layout::AoS},
      {"PageRank_3",
       "pagerank",
       {"reduce(dangling)", "orthogonalize(v,w)", "localize(OLD,old)", "split(v)"},
       ExchangeScheme::Buffered,
       Layout::AoS},
      {"PageRank_4",
       "pagerank",
       {"reduce(dangling)", "orthogonalize(v,w)", "split(v)"},
       ExchangeScheme::Buffered,
       Layout::AoS},
      {"Matmul_Base", "matmul", {}, ExchangeScheme::Buffered, Layout::AoS},
      {"Matmul_SoA", "matmul", {"materialize"}, ExchangeScheme::Buffered, Layout::SoA},
      {"Matmul_JDS",
       "matmul",
       {"localize(A,a)", "orthogonalize(j,j)", "orthogonalize(i,i)", "materialize", "interchange(1,2)"},
       ExchangeScheme::Buffered,
       Layout::JaggedDiagonal},
      {"Sort", "sort", {}, ExchangeScheme::Buffered, Layout::AoS},
  };
  return kVariants;
}

const Variant& find_variant(const std::string& name, const std::vector<Variant>& extra) {
  for (const auto& v : extra)
    if (v.name == name) return v;
  for (const auto& v : builtin_variants())
    if (v.name == name) return v;
  throw Error(ErrorCode::UnknownVariant, "no variant named '" + name + "'");
}

std::vector<Variant> load_variants(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return {};
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path + ": " + e.what());
  }
  if (j.is_null()) return {};
  if (!j.is_array()) throw Error(ErrorCode::InvalidArgument, path + ": expected a JSON array of variants");
  std::vector<Variant> out;
  for (const auto& e : j) {
    try {
      Variant v;
      v.name = e.at("name").get<std::string>();
      v.app = e.value("app", "");
      v.pipeline = e.value("pipeline", std::vector<std::string>{});
      v.exchange = xchg::parse_scheme(e.value("exchange", "buffered"));
      v.layout = parse_layout(e.value("layout", "AoS"));
      for (const auto& s : v.pipeline) parse_step(s);
      out.push_back(std::move(v));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::InvalidArgument, path + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace forelem::xform
