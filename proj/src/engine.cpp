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

#include "engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include <absl/container/flat_hash_map.h>

namespace forelem::exec::detail {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

[[noreturn]] void unsupported(const std::string& what) { throw Error(ErrorCode::InvalidProgram, what); }

bool is_tuple_level(const ir::Domain& d) {
  if (std::holds_alternative<ir::TupleScan>(d.node)) return true;
  if (const auto* i = std::get_if<ir::IndexInterval>(&d.node))
    return i->underlying && std::holds_alternative<ir::TupleScan>(i->underlying->node);
  return false;
}

const ir::ValueScan* value_scan_of(const ir::Domain& d) {
  if (const auto* v = std::get_if<ir::ValueScan>(&d.node)) return v;
  if (const auto* i = std::get_if<ir::IndexInterval>(&d.node))
    if (i->underlying) return std::get_if<ir::ValueScan>(&i->underlying->node);
  return nullptr;
}

std::vector<ir::Stmt> strip_body(const std::vector<ir::Stmt>& body) {
  std::vector<ir::Stmt> out;
  for (const ir::Stmt& s : body) {
    if (const auto* nl = std::get_if<ir::NestedLoop>(&s.node)) {
      out.push_back({ir::NestedLoop{std::make_shared<const ir::LoopSpec>(strip_partitions(*nl->loop))}});
    } else if (const auto* f = std::get_if<ir::If>(&s.node)) {
      ir::If c = *f;
      c.then_body = strip_body(f->then_body);
      c.else_body = strip_body(f->else_body);
      out.push_back({std::move(c)});
    } else {
      out.push_back(s);
    }
  }
  return out;
}

std::size_t mix(std::size_t a, std::size_t b) {
  std::size_t h = a * 0x9E3779B97F4A7C15ULL ^ (b + 0x632BE59BD9B4E019ULL + (a << 6) + (a >> 2));
  h ^= h >> 29;
  h *= 0xBF58476D1CE4E5B9ULL;
  return h ^ (h >> 32);
}

}  // namespace

ir::LoopSpec strip_partitions(const ir::LoopSpec& loop) {
  ir::LoopSpec out = loop;
  if (ir::Selection* sel = ir::mutable_selection_of(out.domain)) sel->part.reset();
  out.body = strip_body(loop.body);
  return out;
}

// ---------------------------------------------------------------------------
// Compilation

class Compiler {
 public:
  explicit Compiler(Bound& b) : b_(b) {}

  std::uint32_t expr(const ir::ExprPtr& e) {
    if (!e) unsupported("null expression");
    return std::visit([&](const auto& x) { return node(x); }, e->node);
  }

  std::uint32_t list(const std::vector<ir::Stmt>& body) {
    std::vector<std::uint32_t> ids;
    for (const ir::Stmt& s : body) {
      if (const auto* f = std::get_if<ir::If>(&s.node); f && f->structural) {
        // Enforced by the iteration structure.
        std::uint32_t inner = list(f->then_body);
        for (std::uint32_t id : b_.lists[inner]) ids.push_back(id);
        continue;
      }
      ids.push_back(stmt(s));
    }
    b_.lists.push_back(std::move(ids));
    return static_cast<std::uint32_t>(b_.lists.size() - 1);
  }

 private:
  std::uint32_t push(Node n) {
    b_.nodes.push_back(n);
    return static_cast<std::uint32_t>(b_.nodes.size() - 1);
  }
  std::uint32_t alloc(std::uint32_t dim) {
    std::uint32_t o = b_.arena_size;
    b_.arena_size += dim;
    return o;
  }
  const Node& at(std::uint32_t i) const { return b_.nodes[i]; }

  std::uint32_t field_node(const std::string& name) {
    if (auto it = b_.local_of.find(name); it != b_.local_of.end()) {
      const LocalStore& ls = b_.locals[it->second];
      Node n;
      n.k = ls.vec ? NK::LocalVec : NK::Local;
      n.vec = ls.vec;
      n.dim = ls.width;
      n.id = it->second;
      return push(n);
    }
    auto it = b_.col_of.find(name);
    if (it == b_.col_of.end()) unsupported("unknown field '" + name + "'");
    const FieldCol& c = b_.cols[it->second];
    Node n;
    n.k = c.vec ? NK::FieldVec : NK::Field;
    n.vec = c.vec;
    n.dim = c.width;
    n.id = it->second;
    return push(n);
  }

  std::uint32_t node(const ir::FieldRef& f) { return field_node(f.name); }

  std::uint32_t node(const ir::VarRef& v) {
    for (auto it = env_.rbegin(); it != env_.rend(); ++it) {
      if (it->first == v.name) {
        Node n;
        n.k = NK::Env;
        n.id = it->second;
        return push(n);
      }
    }
    if (auto it = b_.prog.params.find(v.name); it != b_.prog.params.end()) {
      Node n;
      n.k = NK::Const;
      n.c = static_cast<double>(it->second);
      return push(n);
    }
    if (auto it = b_.level_var_field.find(v.name); it != b_.level_var_field.end()) return field_node(it->second);
    if (v.name == b_.tuple_binder) {
      Node n;
      n.k = NK::Ordinal;
      return push(n);
    }
    unsupported("unbound variable '" + v.name + "'");
  }

  std::uint32_t space_id(const std::string& name) {
    auto it = b_.space_of.find(name);
    if (it == b_.space_of.end()) throw Error(ErrorCode::UnknownSpace, "space '" + name + "' not declared");
    return it->second;
  }

  void keys(const std::vector<ir::ExprPtr>& key, std::uint32_t space, std::uint32_t* out, std::uint32_t& nkey) {
    const BoundSpace& bs = b_.spaces[space];
    if (key.size() != bs.s->decl().key_arity)
      throw Error(ErrorCode::ArityMismatch, "space " + bs.s->name() + " expects " +
                                                std::to_string(bs.s->decl().key_arity) + " key components");
    nkey = static_cast<std::uint32_t>(key.size());
    for (std::size_t i = 0; i < key.size(); ++i) {
      out[i] = expr(key[i]);
      if (at(out[i]).vec) throw Error(ErrorCode::KindMismatch, "vector-valued key for space " + bs.s->name());
    }
  }

  std::uint32_t node(const ir::SpaceRead& r) {
    Node n;
    n.id = space_id(r.space);
    keys(r.key, n.id, n.key, n.nkey);
    const BoundSpace& bs = b_.spaces[n.id];
    n.vec = !bs.scalar;
    n.dim = bs.width;
    n.k = !bs.dense ? NK::Hashed : (bs.scalar ? NK::DenseS : NK::DenseV);
    return push(n);
  }

  std::uint32_t node(const ir::Const& c) {
    Node n;
    if (c.value.is_scalar()) {
      n.k = NK::Const;
      n.c = c.value.as_scalar();
      return push(n);
    }
    auto v = c.value.as_vector();
    n.k = NK::ConstVec;
    n.vec = true;
    n.dim = static_cast<std::uint32_t>(v.size());
    n.id = static_cast<std::uint32_t>(b_.constpool.size());
    b_.constpool.insert(b_.constpool.end(), v.begin(), v.end());
    return push(n);
  }

  std::uint32_t node(const ir::Arith& a) {
    Node n;
    n.a = expr(a.lhs);
    n.b = expr(a.rhs);
    const Node &l = at(n.a), &r = at(n.b);
    if (l.vec && r.vec && l.dim != r.dim) throw Error(ErrorCode::DimMismatch, "arithmetic on vectors of different dim");
    n.vec = l.vec || r.vec;
    n.dim = std::max(l.dim, r.dim);
    switch (a.op) {
      case ir::ArithOp::Add: n.k = NK::Add; break;
      case ir::ArithOp::Sub: n.k = NK::Sub; break;
      case ir::ArithOp::Mul: n.k = NK::Mul; break;
      case ir::ArithOp::Div: n.k = NK::Div; break;
    }
    if (n.vec) n.arena = alloc(n.dim);
    return push(n);
  }

  std::uint32_t node(const ir::Compare& c) {
    Node n;
    n.a = expr(c.lhs);
    n.b = expr(c.rhs);
    const Node &l = at(n.a), &r = at(n.b);
    bool vec = l.vec || r.vec;
    switch (c.op) {
      case ir::CmpOp::Eq: n.k = NK::Eq; break;
      case ir::CmpOp::Ne: n.k = NK::Ne; break;
      case ir::CmpOp::Lt: n.k = NK::Lt; break;
      case ir::CmpOp::Le: n.k = NK::Le; break;
      case ir::CmpOp::Gt: n.k = NK::Gt; break;
      case ir::CmpOp::Ge: n.k = NK::Ge; break;
      case ir::CmpOp::AbsDiffGtEps: n.k = NK::AbsGt; break;
    }
    if (vec && ((n.k != NK::Eq && n.k != NK::Ne) || l.dim != r.dim))
      throw Error(ErrorCode::KindMismatch, "unsupported comparison of vector values");
    n.dim = vec ? l.dim : 1;  // operand width for Eq/Ne
    return push(n);
  }

  std::uint32_t node(const ir::Logic& g) {
    Node n;
    n.a = expr(g.lhs);
    if (g.op == ir::LogicOp::Not) {
      n.k = NK::Not;
    } else {
      n.b = expr(g.rhs);
      n.k = g.op == ir::LogicOp::And ? NK::And : NK::Or;
    }
    return push(n);
  }

  std::uint32_t node(const ir::Dist& d) {
    Node n;
    n.k = NK::Dist;
    n.a = expr(d.lhs);
    n.b = expr(d.rhs);
    if (at(n.a).dim != at(n.b).dim) throw Error(ErrorCode::DimMismatch, "dist operands differ in dim");
    n.c = at(n.a).dim;
    return push(n);
  }

  std::uint32_t node(const ir::StructSize&) { unsupported("index-structure size outside a structural guard"); }
  std::uint32_t node(const ir::WriteExpr&) { unsupported("write in expression position"); }

  std::uint32_t stmt(const ir::Stmt& s) {
    SNode out;
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, ir::SpaceWrite>) {
            out.k = SK::Write;
            out.op = x.op;
            out.id = space_id(x.space);
            keys(x.key, out.id, out.key, out.nkey);
            out.value = expr(x.value);
            const BoundSpace& bs = b_.spaces[out.id];
            if (at(out.value).vec && at(out.value).dim != bs.width)
              throw Error(ErrorCode::DimMismatch, "value dim does not match space " + x.space);
            if (at(out.value).vec && bs.scalar)
              throw Error(ErrorCode::KindMismatch, "vector written to scalar space " + x.space);
          } else if constexpr (std::is_same_v<T, ir::FieldWrite>) {
            auto it = b_.local_of.find(x.field);
            if (it == b_.local_of.end()) unsupported("write to immutable tuple field '" + x.field + "'");
            out.k = SK::LocalWrite;
            out.op = x.op;
            out.id = it->second;
            out.value = expr(x.value);
            if (at(out.value).vec && at(out.value).dim != b_.locals[out.id].width)
              throw Error(ErrorCode::DimMismatch, "value dim does not match field " + x.field);
          } else if constexpr (std::is_same_v<T, ir::Swap>) {
            out.k = SK::Swap;
            out.id = space_id(x.space);
            keys(x.key_a, out.id, out.key, out.nkey);
            keys(x.key_b, out.id, out.key_b, out.nkey_b);
            out.value = node(ir::SpaceRead{x.space, x.key_a});
            out.guard = node(ir::SpaceRead{x.space, x.key_b});
          } else if constexpr (std::is_same_v<T, ir::If>) {
            out.k = SK::If;
            out.guard = expr(x.guard);
            out.then_list = list(x.then_body);
            out.has_else = !x.else_body.empty();
            if (out.has_else) out.else_list = list(x.else_body);
          } else if constexpr (std::is_same_v<T, ir::NestedLoop>) {
            loop(*x.loop, out);
          }
        },
        s.node);
    b_.stmts.push_back(out);
    return static_cast<std::uint32_t>(b_.stmts.size() - 1);
  }

  void loop(const ir::LoopSpec& l, SNode& out) {
    const auto* en = std::get_if<ir::Enumerate>(&l.domain.node);
    if (!en) unsupported("only enumeration loops may appear inside a tuple body");
    out.k = SK::Loop;
    out.universe = expr(en->universe);
    out.has_excluded = en->excluded != nullptr;
    if (out.has_excluded) out.excluded = expr(en->excluded);
    out.arbitrary = en->arbitrary;
    out.env = b_.env_slots++;
    env_.emplace_back(l.binder, out.env);
    out.then_list = list(l.body);
    env_.pop_back();

    // PR[w] += c for every w of a dense scalar space: a uniform offset.
    if (out.arbitrary || l.body.size() != 1) return;
    const auto* w = std::get_if<ir::SpaceWrite>(&l.body[0].node);
    if (!w || w->op == ir::WriteOp::Assign || w->key.size() != 1) return;
    const auto* kv = std::get_if<ir::VarRef>(&w->key[0]->node);
    if (!kv || kv->name != l.binder) return;
    bool uses_binder = false;
    ir::visit_expr(w->value, [&](const ir::Expr& e) {
      if (const auto* v = std::get_if<ir::VarRef>(&e.node); v && v->name == l.binder) uses_binder = true;
    });
    if (uses_binder) return;
    std::uint32_t sid = space_id(w->space);
    BoundSpace& bs = b_.spaces[sid];
    const Node& u = at(out.universe);
    if (!bs.dense || !bs.scalar || u.k != NK::Const || u.c != static_cast<double>(bs.s->decl().extents[0])) return;
    const SNode& inner = b_.stmts[b_.lists[out.then_list][0]];
    out.k = SK::Broadcast;
    out.op = w->op;
    out.id = sid;
    out.value = inner.value;
    bs.whole_lock = true;
  }

  Bound& b_;
  std::vector<std::pair<std::string, std::uint32_t>> env_;
};

// ---------------------------------------------------------------------------
// Binding

Bound::Bound(const ir::Program& p, ExecutionState& st) : prog(p), state(st) {
  ir::require_valid(p);
  epsilon = p.epsilon;
  const auto levels = ir::nest_levels(p.root);
  std::size_t tl = kNone;
  for (std::size_t i = 0; i < levels.size(); ++i)
    if (is_tuple_level(levels[i]->domain)) {
      tl = i;
      break;
    }
  if (tl == kNone) unsupported("loop nest has no tuple level");

  const ir::Selection* sel = ir::selection_of(levels[tl]->domain);
  auto rit = p.reservoirs.find(sel->reservoir);
  if (rit == p.reservoirs.end() || !rit->second)
    throw Error(ErrorCode::UnknownReservoir, "reservoir '" + sel->reservoir + "' not declared");
  reservoir = rit->second;
  const ir::TupleReservoir& r = *reservoir;
  const ir::TupleSchema& schema = r.schema();

  // Level keys: value levels are keyed by a field, the tuple level by its
  // ordinal within the group formed by all value-level fields.
  std::vector<std::size_t> level_field(levels.size(), kNone);
  std::vector<std::size_t> value_fields;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (i == tl) {
      tuple_binder = levels[i]->binder;
      continue;
    }
    const ir::ValueScan* vs = value_scan_of(levels[i]->domain);
    if (!vs) unsupported("unsupported loop at nest level " + std::to_string(i));
    if (vs->sel.reservoir != sel->reservoir) unsupported("nest levels iterate different reservoirs");
    std::size_t f = schema.require(vs->field);
    if (schema.field(f).type.kind != ir::FieldKind::Index)
      throw Error(ErrorCode::NotIndexField, "field '" + vs->field + "' is not an index field");
    level_field[i] = f;
    value_fields.push_back(f);
    level_var_field[levels[i]->binder] = vs->field;
  }
  if (value_fields.size() > kMaxKeyArity) unsupported("loop nest too deep");
  auto check_where = [&](const ir::Selection& s) {
    for (const auto& [field, var] : s.where) {
      auto it = level_var_field.find(var);
      if (it == level_var_field.end() || it->second != field)
        unsupported("selection " + s.reservoir + "." + field + "[" + var + "] does not follow an enclosing value loop");
    }
  };
  for (const ir::LoopSpec* l : levels)
    if (const ir::Selection* s = ir::selection_of(l->domain)) check_where(*s);

  // Membership.
  std::vector<std::uint32_t> kept;
  kept.reserve(r.size());
  if (sel->part && sel->part->count > 1) {
    ir::Partitioner part(r, sel->part->field, sel->part->count, sel->part->mode);
    std::size_t f = schema.require(sel->part->field);
    for (std::size_t i = 0; i < r.size(); ++i)
      if (part(r.index(i, f)) == sel->part->index) kept.push_back(static_cast<std::uint32_t>(i));
  } else if (!sel->part || sel->part->index == 0) {
    kept.resize(r.size());
    std::iota(kept.begin(), kept.end(), 0u);
  }
  n = kept.size();

  // Ordinals and ordering.
  std::vector<std::uint64_t> ord(n);
  {
    absl::flat_hash_map<Key, std::uint64_t> next;
    std::array<std::uint64_t, kMaxKeyArity> kb{};
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < value_fields.size(); ++j) kb[j] = r.index(kept[i], value_fields[j]);
      ord[i] = next[Key(std::span<const std::uint64_t>(kb.data(), value_fields.size()))]++;
    }
  }
  auto level_key = [&](std::size_t i, std::size_t lv) -> std::uint64_t {
    return lv == tl ? ord[i] : r.index(kept[i], level_field[lv]);
  };
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  if (levels.size() > 1) {
    std::stable_sort(perm.begin(), perm.end(), [&](std::uint32_t a, std::uint32_t b) {
      for (std::size_t lv = 0; lv < levels.size(); ++lv) {
        std::uint64_t ka = level_key(a, lv), kb = level_key(b, lv);
        if (ka != kb) return ka < kb;
      }
      return false;
    });
  }
  base_pos.resize(n);
  ordinal.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    base_pos[s] = kept[perm[s]];
    ordinal[s] = static_cast<double>(ord[perm[s]]);
  }
  in_order.resize(n);
  std::iota(in_order.begin(), in_order.end(), 0u);
  for (std::size_t s = 0; s < n; ++s) {
    if (levels.size() == 1 || s == 0 || level_key(perm[s], 0) != level_key(perm[s - 1], 0))
      group_start.push_back(static_cast<std::uint32_t>(s));
  }
  group_start.push_back(static_cast<std::uint32_t>(n));

  // Tuple store: schema fields plus read-only localized fields.
  struct ColSrc {
    std::string name;
    std::uint32_t width;
    bool vec;
    std::size_t schema_off;  // kNone for localized
    const ir::LocalizedField* lf;
  };
  std::vector<ColSrc> srcs;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const ir::Field& fd = schema.field(f);
    srcs.push_back({fd.name, static_cast<std::uint32_t>(fd.type.width()), fd.type.kind == ir::FieldKind::Vector,
                    schema.offset(f), nullptr});
  }
  auto key_of = [&](const ir::LocalizedField& lf, std::uint32_t bp) {
    std::array<std::uint64_t, kMaxKeyArity> kb{};
    if (lf.key_fields.size() > kMaxKeyArity) throw Error(ErrorCode::ArityMismatch, "localized key too long");
    for (std::size_t j = 0; j < lf.key_fields.size(); ++j) kb[j] = r.index(bp, schema.require(lf.key_fields[j]));
    return Key(std::span<const std::uint64_t>(kb.data(), lf.key_fields.size()));
  };
  for (const ir::LocalizedField& lf : p.localized) {
    if (schema.find(lf.field)) unsupported("localized field '" + lf.field + "' shadows a tuple field");
    SharedSpace& origin = st.space(lf.origin.name);
    auto w = static_cast<std::uint32_t>(origin.width());
    bool vec = origin.decl().kind == ValueKind::Vector;
    if (!lf.is_mutable) {
      srcs.push_back({lf.field, w, vec, kNone, &lf});
      continue;
    }
    LocalStore ls;
    ls.field = lf.field;
    ls.origin = &origin;
    ls.width = w;
    ls.vec = vec;
    ls.slot_of_pos.resize(n);
    absl::flat_hash_map<Key, std::uint32_t> slots;
    for (std::size_t s = 0; s < n; ++s) {
      Key k = key_of(lf, base_pos[s]);
      auto [it, inserted] = slots.try_emplace(k, static_cast<std::uint32_t>(ls.slot_keys.size()));
      if (inserted) {
        ls.slot_keys.push_back(k);
        Value v = origin.read(k);
        auto d = v.data();
        ls.words.insert(ls.words.end(), d.begin(), d.end());
      }
      ls.slot_of_pos[s] = it->second;
    }
    local_of[lf.field] = static_cast<std::uint32_t>(locals.size());
    locals.push_back(std::move(ls));
  }
  std::size_t rec = 0;
  for (const ColSrc& c : srcs) rec += c.width;
  const bool aos = p.layout == ir::Layout::AoS;
  data.assign(rec * n, 0.0);
  std::size_t off = 0;
  for (const ColSrc& c : srcs) {
    FieldCol col;
    col.width = c.width;
    col.vec = c.vec;
    col.base = aos ? off : off * n;
    col.stride = aos ? rec : c.width;
    for (std::size_t s = 0; s < n; ++s) {
      double* dst = data.data() + col.base + s * col.stride;
      if (c.lf) {
        Value v = st.space(c.lf->origin.name).read(key_of(*c.lf, base_pos[s]));
        auto d = v.data();
        std::copy(d.begin(), d.end(), dst);
      } else {
        for (std::uint32_t w = 0; w < c.width; ++w) dst[w] = r.word(base_pos[s], c.schema_off + w);
      }
    }
    col_of[c.name] = static_cast<std::uint32_t>(cols.size());
    cols.push_back(col);
    off += c.width;
  }

  for (const auto& [name, decl] : p.spaces) {
    BoundSpace bs;
    bs.s = &st.space(name);
    bs.dense = bs.s->dense();
    bs.scalar = bs.s->decl().kind == ValueKind::Scalar;
    bs.width = static_cast<std::uint32_t>(bs.s->width());
    bs.whole_lock = !bs.dense;
    space_of[name] = static_cast<std::uint32_t>(spaces.size());
    spaces.push_back(bs);
  }

  const std::vector<ir::Stmt>& inner = levels.back()->body;
  ir::walk_stmts(inner, [&](const ir::Stmt& s) {
    if (const auto* f = std::get_if<ir::If>(&s.node); f && !f->structural) has_guard = true;
  });
  Compiler c(*this);
  body = c.list(inner);
}

std::uint32_t Bound::compile_free_expr(const ir::ExprPtr& e) {
  Compiler c(*this);
  return c.expr(e);
}

void Bound::export_locals() {
  for (const LocalStore& ls : locals) {
    for (std::size_t s = 0; s < ls.slot_keys.size(); ++s) {
      const double* w = ls.words.data() + s * ls.width;
      if (ls.vec)
        ls.origin->write(ls.slot_keys[s], Value(std::vector<double>(w, w + ls.width)));
      else
        ls.origin->write(ls.slot_keys[s], Value(*w));
    }
  }
}

// ---------------------------------------------------------------------------
// Execution

Worker::Worker(Bound& b, LockTable* locks, std::uint64_t seed, std::uint32_t id)
    : b_(b), locks_(locks), id_(id), rng_(seed), env_(b.env_slots), arena_(b.arena_size) {}

std::size_t Worker::eval_index(std::uint32_t n) {
  double x = eval(n).s;
  if (!(x >= 0.0) || x > static_cast<double>(kMaxIndex) || x != std::floor(x))
    throw Error(ErrorCode::KeyOutOfRange, "key component " + std::to_string(x) + " is not an index");
  return static_cast<std::size_t>(x);
}

Key Worker::eval_key(const std::uint32_t* keys, std::uint32_t nkey) {
  std::array<std::uint64_t, kMaxKeyArity> kb{};
  for (std::uint32_t i = 0; i < nkey; ++i) kb[i] = eval_index(keys[i]);
  return Key(std::span<const std::uint64_t>(kb.data(), nkey));
}

std::size_t Worker::dense_index(const BoundSpace& bs, const std::uint32_t* keys, std::uint32_t nkey) {
  const auto& ext = bs.s->decl().extents;
  std::size_t idx = 0;
  for (std::uint32_t i = 0; i < nkey; ++i) {
    std::size_t k = eval_index(keys[i]);
    if (k >= ext[i])
      throw Error(ErrorCode::KeyOutOfRange, "space " + bs.s->name() + " key component " + std::to_string(k) +
                                                " outside extent " + std::to_string(ext[i]));
    idx = idx * ext[i] + k;
  }
  return idx;
}

void Worker::lock_stripe(std::size_t h) {
  std::size_t stripe = h % LockTable::kStripes;
  auto& o = locks_->owner[stripe];
  const std::uint32_t me = id_ + 1;
  std::uint32_t cur = o.load(std::memory_order_acquire);
  if (cur == me) return;
  std::uint32_t expected = 0;
  if (!o.compare_exchange_strong(expected, me, std::memory_order_acq_rel)) throw Conflict{};
  held_.push_back(stripe);
}

void Worker::lock_space(std::uint32_t space, std::size_t idx) {
  if (!locks_) return;
  lock_stripe(b_.spaces[space].whole_lock ? mix(space, kNone) : mix(space, idx));
}

void Worker::lock_local(std::uint32_t store, std::size_t slot) {
  if (!locks_) return;
  lock_stripe(mix(store + 0x10000, slot));
}

void Worker::release() {
  if (!locks_) return;
  for (std::size_t s : held_) locks_->owner[s].store(0, std::memory_order_release);
  held_.clear();
}

Worker::Val Worker::eval(std::uint32_t ni) {
  const Node& d = b_.nodes[ni];
  switch (d.k) {
    case NK::Const: return {d.c};
    case NK::ConstVec: {
      const double* p = b_.constpool.data() + d.id;
      return {p[0], p, d.dim};
    }
    case NK::Field: {
      const FieldCol& c = b_.cols[d.id];
      return {b_.data[c.base + pos_ * c.stride]};
    }
    case NK::FieldVec: {
      const FieldCol& c = b_.cols[d.id];
      const double* p = b_.data.data() + c.base + pos_ * c.stride;
      return {p[0], p, d.dim};
    }
    case NK::Local:
    case NK::LocalVec: {
      const LocalStore& ls = b_.locals[d.id];
      std::uint32_t slot = ls.slot_of_pos[pos_];
      lock_local(d.id, slot);
      const double* p = ls.words.data() + static_cast<std::size_t>(slot) * ls.width;
      return {p[0], d.vec ? p : nullptr, d.dim};
    }
    case NK::Env: return {env_[d.id]};
    case NK::Ordinal: return {b_.ordinal[pos_]};
    case NK::DenseS: {
      const BoundSpace& bs = b_.spaces[d.id];
      std::size_t idx = dense_index(bs, d.key, d.nkey);
      lock_space(d.id, idx);
      return {bs.s->dense_words()[idx] + bs.s->offset()};
    }
    case NK::DenseV: {
      const BoundSpace& bs = b_.spaces[d.id];
      std::size_t idx = dense_index(bs, d.key, d.nkey);
      lock_space(d.id, idx);
      const double* p = bs.s->dense_words() + idx * bs.width;
      return {p[0], p, d.dim};
    }
    case NK::Hashed: {
      const BoundSpace& bs = b_.spaces[d.id];
      Key k = eval_key(d.key, d.nkey);
      lock_space(d.id, 0);
      const double* p = bs.s->find(k);
      if (!p) p = bs.s->default_words().data();
      return {p[0], d.vec ? p : nullptr, d.dim};
    }
    case NK::Add:
    case NK::Sub:
    case NK::Mul:
    case NK::Div: {
      Val l = eval(d.a);
      Val r = eval(d.b);
      if (!d.vec) {
        switch (d.k) {
          case NK::Add: return {l.s + r.s};
          case NK::Sub: return {l.s - r.s};
          case NK::Mul: return {l.s * r.s};
          default:
            if (r.s == 0.0) throw Error(ErrorCode::DivByZero, "division by zero");
            return {l.s / r.s};
        }
      }
      double* out = arena_.data() + d.arena;
      const bool lv = b_.nodes[d.a].vec, rv = b_.nodes[d.b].vec;
      for (std::uint32_t i = 0; i < d.dim; ++i) {
        double x = lv ? l.v[i] : l.s;
        double y = rv ? r.v[i] : r.s;
        switch (d.k) {
          case NK::Add: out[i] = x + y; break;
          case NK::Sub: out[i] = x - y; break;
          case NK::Mul: out[i] = x * y; break;
          default:
            if (y == 0.0) throw Error(ErrorCode::DivByZero, "division by zero");
            out[i] = x / y;
        }
      }
      return {out[0], out, d.dim};
    }
    case NK::Eq:
    case NK::Ne:
    case NK::Lt:
    case NK::Le:
    case NK::Gt:
    case NK::Ge:
    case NK::AbsGt: {
      Val l = eval(d.a);
      Val r = eval(d.b);
      if (b_.nodes[d.a].vec || b_.nodes[d.b].vec) {
        bool eq = true;
        for (std::uint32_t i = 0; i < d.dim && eq; ++i) eq = l.v[i] == r.v[i];
        return {(d.k == NK::Eq) == eq ? 1.0 : 0.0};
      }
      bool t = false;
      switch (d.k) {
        case NK::Eq: t = l.s == r.s; break;
        case NK::Ne: t = l.s != r.s; break;
        case NK::Lt: t = l.s < r.s; break;
        case NK::Le: t = l.s <= r.s; break;
        case NK::Gt: t = l.s > r.s; break;
        case NK::Ge: t = l.s >= r.s; break;
        default: t = std::fabs(l.s - r.s) > b_.epsilon;
      }
      return {t ? 1.0 : 0.0};
    }
    case NK::And: return {truth(d.a) && truth(d.b) ? 1.0 : 0.0};
    case NK::Or: return {truth(d.a) || truth(d.b) ? 1.0 : 0.0};
    case NK::Not: return {truth(d.a) ? 0.0 : 1.0};
    case NK::Dist: {
      Val l = eval(d.a);
      Val r = eval(d.b);
      const auto dim = static_cast<std::uint32_t>(d.c);
      if (!l.v || !r.v) return {std::fabs(l.s - r.s)};
      double acc = 0.0;
      for (std::uint32_t i = 0; i < dim; ++i) {
        double t = l.v[i] - r.v[i];
        acc += t * t;
      }
      return {std::sqrt(acc)};
    }
  }
  return {};
}

namespace {

inline void apply(double* dst, std::uint32_t w, ir::WriteOp op, const double* v, std::uint32_t dim, double off) {
  for (std::uint32_t i = 0; i < w; ++i) {
    double x = dim == 1 ? v[0] : v[i];
    switch (op) {
      case ir::WriteOp::Assign: dst[i] = x - off; break;
      case ir::WriteOp::Add: dst[i] += x; break;
      case ir::WriteOp::Sub: dst[i] -= x; break;
    }
  }
}

}  // namespace

void Worker::write_space(std::uint32_t space, const std::uint32_t* keys, std::uint32_t nkey, ir::WriteOp op,
                         const double* v, std::uint32_t dim) {
  const BoundSpace& bs = b_.spaces[space];
  const std::uint32_t w = bs.width;
  if (bs.dense) {
    std::size_t idx = dense_index(bs, keys, nkey);
    lock_space(space, idx);
    double* dst = bs.s->dense_words() + idx * w;
    undo_.push_back({UK::Dense, space, idx * w, undo_words_.size(), w, {}});
    undo_words_.insert(undo_words_.end(), dst, dst + w);
    apply(dst, w, op, v, dim, bs.scalar ? bs.s->offset() : 0.0);
    return;
  }
  Key k = eval_key(keys, nkey);
  lock_space(space, 0);
  // The value may live in the pool that locate() can grow.
  scratch_.assign(v, v + dim);
  const double* old = bs.s->find(k);
  if (!old) old = bs.s->default_words().data();
  undo_.push_back({UK::Hashed, space, 0, undo_words_.size(), w, k});
  undo_words_.insert(undo_words_.end(), old, old + w);
  double* dst = bs.s->locate(k);
  apply(dst, w, op, scratch_.data(), dim, 0.0);
}

void Worker::exec_list(std::uint32_t list) {
  for (std::uint32_t s : b_.lists[list]) exec(b_.stmts[s]);
}

void Worker::exec(const SNode& s) {
  switch (s.k) {
    case SK::Write: {
      Val v = eval(s.value);
      const double* p = v.v ? v.v : &v.s;
      write_space(s.id, s.key, s.nkey, s.op, p, v.v ? v.dim : 1);
      return;
    }
    case SK::LocalWrite: {
      Val v = eval(s.value);
      const double* p = v.v ? v.v : &v.s;
      LocalStore& ls = b_.locals[s.id];
      std::uint32_t slot = ls.slot_of_pos[pos_];
      lock_local(s.id, slot);
      double* dst = ls.words.data() + static_cast<std::size_t>(slot) * ls.width;
      undo_.push_back({UK::Local, s.id, static_cast<std::size_t>(slot) * ls.width, undo_words_.size(), ls.width, {}});
      undo_words_.insert(undo_words_.end(), dst, dst + ls.width);
      scratch_.assign(p, p + (v.v ? v.dim : 1));
      apply(dst, ls.width, s.op, scratch_.data(), v.v ? v.dim : 1, 0.0);
      return;
    }
    case SK::Swap: {
      Val a = eval(s.value);
      std::vector<double> va(a.v ? a.v : &a.s, (a.v ? a.v : &a.s) + (a.v ? a.dim : 1));
      Val b = eval(s.guard);
      std::vector<double> vb(b.v ? b.v : &b.s, (b.v ? b.v : &b.s) + (b.v ? b.dim : 1));
      write_space(s.id, s.key, s.nkey, ir::WriteOp::Assign, vb.data(), static_cast<std::uint32_t>(vb.size()));
      write_space(s.id, s.key_b, s.nkey_b, ir::WriteOp::Assign, va.data(), static_cast<std::uint32_t>(va.size()));
      return;
    }
    case SK::If: {
      if (truth(s.guard)) {
        fired_ = true;
        exec_list(s.then_list);
      } else if (s.has_else) {
        exec_list(s.else_list);
      }
      return;
    }
    case SK::Loop: {
      const std::size_t u = eval_index(s.universe);
      const std::size_t ex = s.has_excluded ? eval_index(s.excluded) : kNone;
      if (s.arbitrary) {
        std::size_t count = u - (ex < u ? 1 : 0);
        if (count == 0) return;
        std::size_t w = std::uniform_int_distribution<std::size_t>(0, count - 1)(rng_);
        if (ex < u && w >= ex) ++w;
        env_[s.env] = static_cast<double>(w);
        if (expansions) expansions->emplace_back(b_.base_pos[pos_], w);
        exec_list(s.then_list);
        return;
      }
      for (std::size_t w = 0; w < u; ++w) {
        if (w == ex) continue;
        env_[s.env] = static_cast<double>(w);
        if (expansions) expansions->emplace_back(b_.base_pos[pos_], w);
        exec_list(s.then_list);
      }
      return;
    }
    case SK::Broadcast: {
      double delta = eval(s.value).s;
      if (s.op == ir::WriteOp::Sub) delta = -delta;
      const BoundSpace& bs = b_.spaces[s.id];
      lock_space(s.id, 0);
      undo_.push_back({UK::Offset, s.id, 0, undo_words_.size(), 1, {}});
      undo_words_.push_back(bs.s->offset());
      if (s.has_excluded) {
        std::size_t ex = eval_index(s.excluded);
        if (ex < bs.s->dense_size()) {
          double* dst = bs.s->dense_words() + ex;
          undo_.push_back({UK::Dense, s.id, ex, undo_words_.size(), 1, {}});
          undo_words_.push_back(*dst);
          *dst -= delta;
        }
      }
      bs.s->set_offset(bs.s->offset() + delta);
      if (expansions) {
        const std::size_t ex = s.has_excluded ? eval_index(s.excluded) : kNone;
        for (std::size_t w = 0; w < bs.s->dense_size(); ++w)
          if (w != ex) expansions->emplace_back(b_.base_pos[pos_], w);
      }
      return;
    }
  }
}

void Worker::rollback() {
  for (auto it = undo_.rbegin(); it != undo_.rend(); ++it) {
    const double* saved = undo_words_.data() + it->saved;
    switch (it->k) {
      case UK::Dense: std::copy(saved, saved + it->nw, b_.spaces[it->id].s->dense_words() + it->idx); break;
      case UK::Hashed: std::copy(saved, saved + it->nw, b_.spaces[it->id].s->locate(it->key)); break;
      case UK::Local: std::copy(saved, saved + it->nw, b_.locals[it->id].words.data() + it->idx); break;
      case UK::Offset: b_.spaces[it->id].s->set_offset(saved[0]); break;
    }
  }
  undo_.clear();
  undo_words_.clear();
}

bool Worker::changed() const {
  for (const Undo& u : undo_) {
    const double* saved = undo_words_.data() + u.saved;
    const double* cur = nullptr;
    switch (u.k) {
      case UK::Dense: cur = b_.spaces[u.id].s->dense_words() + u.idx; break;
      case UK::Hashed: cur = b_.spaces[u.id].s->find(u.key); break;
      case UK::Local: cur = b_.locals[u.id].words.data() + u.idx; break;
      case UK::Offset:
        if (b_.spaces[u.id].s->offset() != saved[0]) return true;
        continue;
    }
    if (!std::equal(saved, saved + u.nw, cur)) return true;
  }
  return false;
}

void Worker::run_tuple(std::uint32_t pos) {
  pos_ = pos;
  for (unsigned attempt = 0;; ++attempt) {
    undo_.clear();
    undo_words_.clear();
    fired_ = !b_.has_guard;
    try {
      exec_list(b_.body);
    } catch (const Conflict&) {
      rollback();
      release();
      if (attempt < 8) {
        std::this_thread::yield();
      } else {
        auto us = std::uniform_int_distribution<int>(1, 50)(rng_);
        std::this_thread::sleep_for(std::chrono::microseconds(us));
      }
      continue;
    } catch (const Error& e) {
      rollback();
      release();
      std::string msg = e.what();
      if (auto c = msg.find(": "); c != std::string::npos) msg = msg.substr(c + 2);
      throw Error(e.code(), msg + " at tuple " + ir::to_string(b_.reservoir->at(b_.base_pos[pos])));
    } catch (...) {
      rollback();
      release();
      throw;
    }
    bool ch = changed();
    release();
    ++stats.tuples_visited;
    if (fired_) ++stats.guards_fired;
    if (ch) ++stats.state_changes;
    if (trace) trace->push_back(b_.base_pos[pos]);
    return;
  }
}

Value Worker::evaluate(std::uint32_t node, std::uint32_t pos) {
  pos_ = pos;
  Val v = eval(node);
  const Node& d = b_.nodes[node];
  release();
  if (!d.vec) return Value(v.s);
  return Value(std::vector<double>(v.v, v.v + d.dim));
}

}  // namespace forelem::exec::detail
