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

#include "forelem/executor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <absl/container/flat_hash_map.h>

#include "engine.hpp"

namespace forelem::exec {

const char* to_string(SchedulerPolicy p) {
  switch (p) {
    case SchedulerPolicy::SweepInOrder: return "in-order";
    case SchedulerPolicy::SweepShuffled: return "shuffled";
    case SchedulerPolicy::RandomWithReplacement: return "random";
  }
  return "?";
}

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Terminated: return "terminated";
    case RunStatus::SweepBudgetExhausted: return "budget-exhausted";
    case RunStatus::EarlyStopped: return "early-stopped";
  }
  return "?";
}

SweepStats WhilelemResult::total() const {
  SweepStats t;
  for (const auto& s : sweeps) t += s;
  return t;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Runs one partition's sweeps with its own workers.
class PartitionRunner {
 public:
  PartitionRunner(detail::Bound& b, std::size_t workers, Scheduler sched)
      : b_(b), sched_(sched), locks_(workers > 1 ? std::make_unique<detail::LockTable>() : nullptr) {
    for (std::size_t i = 0; i < std::max<std::size_t>(1, workers); ++i)
      workers_.push_back(std::make_unique<detail::Worker>(b_, locks_.get(), sched.seed * 7919 + i, static_cast<std::uint32_t>(i)));
  }

  SweepStats sweep(std::size_t sweep_no, bool force_in_order, std::vector<std::uint32_t>* trace = nullptr) {
    auto t0 = Clock::now();
    SchedulerPolicy pol = force_in_order ? SchedulerPolicy::SweepInOrder : sched_.policy;
    const std::vector<std::uint32_t>* seq = &b_.in_order;
    const std::vector<std::uint32_t>* groups = &b_.group_start;
    if (pol == SchedulerPolicy::SweepShuffled) {
      make_shuffled(sweep_no);
      seq = &seq_;
      groups = &groups_;
    } else if (pol == SchedulerPolicy::RandomWithReplacement) {
      make_random(sweep_no);
      seq = &seq_;
      groups = &groups_;
    }
    SweepStats total;
    if (workers_.size() == 1 || seq->size() < 2) {
      detail::Worker& w = *workers_[0];
      w.stats = {};
      w.trace = trace;
      for (std::uint32_t pos : *seq) w.run_tuple(pos);
      w.trace = nullptr;
      total = w.stats;
    } else {
      run_parallel(*seq, *groups, total);
    }
    total.wall_ms = ms_since(t0);
    return total;
  }

  std::size_t workers() const { return workers_.size(); }

 private:
  void make_shuffled(std::size_t sweep_no) {
    std::mt19937_64 rng(sched_.seed ^ (0x9E3779B97F4A7C15ULL * (sweep_no + 1)));
    const auto& gs = b_.group_start;
    std::size_t ng = gs.empty() ? 0 : gs.size() - 1;
    std::vector<std::uint32_t> gorder(ng);
    std::iota(gorder.begin(), gorder.end(), 0);
    std::shuffle(gorder.begin(), gorder.end(), rng);
    seq_.clear();
    groups_.clear();
    seq_.reserve(b_.n);
    for (std::uint32_t g : gorder) {
      groups_.push_back(static_cast<std::uint32_t>(seq_.size()));
      std::size_t begin = seq_.size();
      for (std::uint32_t p = gs[g]; p < gs[g + 1]; ++p) seq_.push_back(p);
      std::shuffle(seq_.begin() + static_cast<std::ptrdiff_t>(begin), seq_.end(), rng);
    }
    groups_.push_back(static_cast<std::uint32_t>(seq_.size()));
  }

  void make_random(std::size_t sweep_no) {
    std::mt19937_64 rng(sched_.seed ^ (0xC2B2AE3D27D4EB4FULL * (sweep_no + 1)));
    std::size_t draws = sched_.batch ? sched_.batch : b_.n;
    seq_.clear();
    groups_.clear();
    if (b_.n == 0) {
      groups_.push_back(0);
      return;
    }
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(b_.n - 1));
    for (std::size_t i = 0; i < draws; ++i) {
      groups_.push_back(static_cast<std::uint32_t>(i));
      seq_.push_back(pick(rng));
    }
    groups_.push_back(static_cast<std::uint32_t>(seq_.size()));
  }

  void run_parallel(const std::vector<std::uint32_t>& seq, const std::vector<std::uint32_t>& groups,
                    SweepStats& total) {
    const std::size_t nw = workers_.size();
    // Contiguous runs of whole groups, balanced by tuple count.
    std::vector<std::size_t> cut{0};
    std::size_t ng = groups.size() - 1;
    std::size_t g = 0;
    for (std::size_t w = 1; w < nw; ++w) {
      std::size_t target = seq.size() * w / nw;
      while (g < ng && groups[g] < target) ++g;
      cut.push_back(groups[g]);
    }
    cut.push_back(seq.size());
    std::vector<std::exception_ptr> errors(nw);
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < nw; ++w) {
      threads.emplace_back([&, w] {
        try {
          detail::Worker& wk = *workers_[w];
          wk.stats = {};
          for (std::size_t i = cut[w]; i < cut[w + 1]; ++i) wk.run_tuple(seq[i]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (auto& w : workers_) total += w->stats;
  }

  detail::Bound& b_;
  Scheduler sched_;
  std::unique_ptr<detail::LockTable> locks_;
  std::vector<std::unique_ptr<detail::Worker>> workers_;
  std::vector<std::uint32_t> seq_;
  std::vector<std::uint32_t> groups_;
};

bool has_whilelem(const ir::LoopSpec& l) {
  for (const ir::LoopSpec* lv : ir::nest_levels(l))
    if (lv->kind == ir::LoopKind::Whilelem) return true;
  return false;
}

// Copy of `p` iterating a one-tuple reservoir and without partitioning.
ir::Program single_tuple_program(const ir::Program& p, const ir::Tuple& t) {
  const ir::LoopSpec* tl = ir::innermost_tuple_loop(p.root);
  if (!tl) throw Error(ErrorCode::InvalidProgram, "program has no tuple loop");
  const ir::Selection* sel = ir::selection_of(tl->domain);
  const ir::TupleReservoir& r = p.reservoir(sel->reservoir);
  ir::Program q = p;
  q.reservoirs[sel->reservoir] =
      std::make_shared<const ir::TupleReservoir>(ir::build_reservoir(r.name(), r.schema(), {t}));
  q.root = detail::strip_partitions(p.root);
  return q;
}

std::vector<Change> diff_states(const ExecutionState& before, const ExecutionState& after) {
  std::vector<Change> out;
  for (const auto& [name, sa] : after.spaces()) {
    auto bi = before.spaces().find(name);
    std::vector<std::pair<Key, Value>> eb;
    if (bi != before.spaces().end()) eb = bi->second.entries();
    auto ea = sa.entries();
    const Value& def = sa.decl().default_value;
    std::size_t i = 0, j = 0;
    while (i < eb.size() || j < ea.size()) {
      if (j == ea.size() || (i < eb.size() && eb[i].first < ea[j].first)) {
        out.push_back({name, eb[i].first, eb[i].second, def});
        ++i;
      } else if (i == eb.size() || ea[j].first < eb[i].first) {
        out.push_back({name, ea[j].first, def, ea[j].second});
        ++j;
      } else {
        if (!(eb[i].second == ea[j].second)) out.push_back({name, ea[j].first, eb[i].second, ea[j].second});
        ++i;
        ++j;
      }
    }
  }
  return out;
}

}  // namespace

SweepStats run_forelem(const ir::Program& p, ExecutionState& state, const Scheduler& sched) {
  if (has_whilelem(p.root)) throw Error(ErrorCode::InvalidProgram, "run_forelem on a whilelem program");
  detail::Bound b(p, state);
  PartitionRunner r(b, 1, sched);
  SweepStats s = r.sweep(0, false);
  b.export_locals();
  return s;
}

WhilelemResult run_whilelem(const ir::Program& p, ExecutionState& state, const Scheduler& sched,
                            std::size_t max_sweeps) {
  if (!has_whilelem(p.root)) throw Error(ErrorCode::InvalidProgram, "run_whilelem on a forelem program");
  detail::Bound b(p, state);
  PartitionRunner r(b, 1, sched);
  WhilelemResult res;
  res.status = RunStatus::SweepBudgetExhausted;
  bool verify = false;
  const bool random = sched.policy == SchedulerPolicy::RandomWithReplacement;
  for (std::size_t s = 0; s < max_sweeps; ++s) {
    SweepStats st = r.sweep(s, verify);
    res.sweeps.push_back(st);
    if (st.state_changes == 0) {
      if (!random || verify) {
        res.status = RunStatus::Terminated;
        break;
      }
      verify = true;
    } else {
      verify = false;
    }
  }
  b.export_locals();
  return res;
}

ChangeRecord execute_tuple(const ir::Program& p, const ir::Tuple& t, ExecutionState& state) {
  ir::Program q = single_tuple_program(p, t);
  ExecutionState before = state;
  ChangeRecord rec;
  {
    detail::Bound b(q, state);
    detail::Worker w(b, nullptr, 0);
    w.run_tuple(0);
    rec.fired = w.stats.guards_fired != 0;
    b.export_locals();
  }
  for (auto& [name, s] : state.spaces()) s.normalize();
  rec.changes = diff_states(before, state);
  return rec;
}

Value eval_expr(const ir::Program& p, const ir::ExprPtr& e, const ir::Tuple& t, const ExecutionState& state,
                const std::map<std::string, std::uint64_t>& vars) {
  ir::Program q = single_tuple_program(p, t);
  for (const auto& [k, v] : vars) q.params[k] = v;
  ExecutionState copy = state;
  detail::Bound b(q, copy);
  std::uint32_t node = b.compile_free_expr(e);
  detail::Worker w(b, nullptr, 0);
  return w.evaluate(node, 0);
}

std::vector<ir::Tuple> trace_sweep(const ir::Program& p, const ExecutionState& state) {
  ExecutionState copy = state;
  detail::Bound b(p, copy);
  PartitionRunner r(b, 1, Scheduler::in_order());
  std::vector<std::uint32_t> trace;
  r.sweep(0, true, &trace);
  std::vector<ir::Tuple> out;
  out.reserve(trace.size());
  for (std::uint32_t pos : trace) out.push_back(b.reservoir->at(pos));
  return out;
}

// ---------------------------------------------------------------------------
// Partitioned execution

namespace {

// Reconciliation role of a shared space in a partitioned program.
enum class SpaceClass { ReadOnly, Private, Add, Owned, Derived };

struct Analysis {
  std::string split_field;
  std::map<std::string, SpaceClass> cls;
  // Key component carrying the split field, for Owned spaces.
  std::map<std::string, std::size_t> owner_component;
};

std::optional<std::size_t> split_component(const std::vector<ir::ExprPtr>& key, const std::string& split,
                                           const std::map<std::string, std::string>& var_field) {
  for (std::size_t j = 0; j < key.size(); ++j) {
    if (const auto* f = std::get_if<ir::FieldRef>(&key[j]->node); f && f->name == split) return j;
    if (const auto* v = std::get_if<ir::VarRef>(&key[j]->node)) {
      auto it = var_field.find(v->name);
      if (it != var_field.end() && it->second == split) return j;
    }
  }
  return std::nullopt;
}

Analysis analyze(const ir::Program& p, xchg::ExchangeScheme scheme, bool single) {
  Analysis a;
  const ir::LoopSpec* tl = ir::innermost_tuple_loop(p.root);
  if (!tl) throw Error(ErrorCode::InvalidProgram, "program has no tuple loop");
  const ir::Selection* sel = ir::selection_of(tl->domain);
  if (sel->part) a.split_field = sel->part->field;

  std::map<std::string, std::string> var_field;
  for (const ir::LoopSpec* lv : ir::nest_levels(p.root)) {
    if (const auto* vs = std::get_if<ir::ValueScan>(&lv->domain.node)) var_field[lv->binder] = vs->field;
    if (const auto* iv = std::get_if<ir::IndexInterval>(&lv->domain.node))
      if (iv->underlying)
        if (const auto* vs = std::get_if<ir::ValueScan>(&iv->underlying->node)) var_field[lv->binder] = vs->field;
  }

  struct Use {
    bool read = false, add = false, assign = false;
    bool all_split = true;
    bool writes_split = true;
    std::optional<std::size_t> comp;
  };
  std::map<std::string, Use> uses;
  auto note = [&](const std::string& space, const std::vector<ir::ExprPtr>& key, int kind) {
    Use& u = uses[space];
    auto c = split_component(key, a.split_field, var_field);
    if (!c) u.all_split = false;
    if (kind == 0) u.read = true;
    if (kind == 1) u.add = true;
    if (kind == 2) {
      u.assign = true;
      if (!c) u.writes_split = false;
      else if (u.comp && *u.comp != *c) u.writes_split = false;
      else u.comp = c;
    }
  };
  ir::visit_stmts(tl->body, [&](const ir::Expr& e) {
    if (const auto* r = std::get_if<ir::SpaceRead>(&e.node)) note(r->space, r->key, 0);
  });
  ir::walk_stmts(tl->body, [&](const ir::Stmt& s) {
    if (const auto* w = std::get_if<ir::SpaceWrite>(&s.node))
      note(w->space, w->key, w->op == ir::WriteOp::Assign ? 2 : 1);
    if (const auto* w = std::get_if<ir::Swap>(&s.node)) {
      note(w->space, w->key_a, 2);
      note(w->space, w->key_b, 2);
    }
  });

  std::set<std::string> derived;
  if (scheme == xchg::ExchangeScheme::Indirect)
    for (const auto& as : p.assertions) derived.insert(as.derived);

  for (const auto& [name, decl] : p.spaces) {
    auto it = uses.find(name);
    SpaceClass c = SpaceClass::ReadOnly;
    if (it != uses.end()) {
      const Use& u = it->second;
      if (!u.add && !u.assign) c = SpaceClass::ReadOnly;
      else if (single || (!a.split_field.empty() && u.all_split)) c = SpaceClass::Private;
      else if (u.add && u.assign)
        throw Error(ErrorCode::NotPartitionable, "space " + name + " is both accumulated and assigned across partitions");
      else if (u.add) c = SpaceClass::Add;
      else if (u.writes_split) {
        c = SpaceClass::Owned;
        a.owner_component[name] = *u.comp;
      } else {
        throw Error(ErrorCode::NotPartitionable,
                    "space " + name + " is assigned at keys not owned by the split field '" + a.split_field + "'");
      }
    }
    if (derived.count(name)) c = SpaceClass::Derived;
    a.cls[name] = c;
  }
  if (!single && !a.split_field.empty()) {
    for (const auto& lf : p.localized) {
      if (lf.is_mutable &&
          std::find(lf.key_fields.begin(), lf.key_fields.end(), a.split_field) == lf.key_fields.end())
        throw Error(ErrorCode::NotPartitionable,
                    "localized field " + lf.field + " is not keyed by the split field '" + a.split_field + "'");
    }
  }
  return a;
}

// Copies into `dst` every location of `src` that differs from `initial`.
void overlay_changes(const SharedSpace& initial, const SharedSpace& src, SharedSpace& dst) {
  if (src.dense()) {
    const std::size_t n = src.dense_size() * src.width();
    const double* s = src.dense_words();
    const double* i0 = initial.dense_words();
    double* d = dst.dense_words();
    const double so = src.offset(), io = initial.offset(), doff = dst.offset();
    if (src.width() == 1) {
      for (std::size_t i = 0; i < n; ++i)
        if (s[i] + so != i0[i] + io) d[i] = s[i] + so - doff;
    } else {
      for (std::size_t i = 0; i < n; ++i)
        if (s[i] != i0[i]) d[i] = s[i];
    }
    return;
  }
  src.for_each_hashed([&](const Key& k, std::span<const double> v) {
    const double* iv = initial.find(k);
    std::span<const double> ref = iv ? std::span<const double>(iv, src.width()) : initial.default_words();
    if (!std::equal(v.begin(), v.end(), ref.begin())) std::copy(v.begin(), v.end(), dst.locate(k));
  });
}

void diff_to_buffer(const SharedSpace& replica, const SharedSpace& base, bool overwrite, xchg::UpdateBuffer& buf) {
  const std::size_t w = replica.width();
  const bool counter = replica.decl().counter;
  auto emit = [&](const Key& k, const double* v, const double* b) {
    xchg::Delta d;
    d.space = replica.name();
    d.key = k;
    if (overwrite) {
      d.op = xchg::DeltaOp::Overwrite;
      d.value = w == 1 && replica.decl().kind == ValueKind::Scalar ? Value(v[0]) : Value(std::vector<double>(v, v + w));
    } else if (replica.decl().kind == ValueKind::Scalar) {
      d.op = counter ? xchg::DeltaOp::AddCount : xchg::DeltaOp::AddScalar;
      d.value = Value(v[0] - b[0]);
    } else {
      d.op = xchg::DeltaOp::AddVector;
      std::vector<double> dv(w);
      for (std::size_t i = 0; i < w; ++i) dv[i] = v[i] - b[i];
      d.value = Value(std::move(dv));
    }
    xchg::record_delta(buf, std::move(d));
  };
  if (replica.dense()) {
    const double* r = replica.dense_words();
    const double* b = base.dense_words();
    for (std::size_t i = 0; i < replica.dense_size(); ++i) {
      if (!std::equal(r + i * w, r + (i + 1) * w, b + i * w)) emit(replica.dense_key(i), r + i * w, b + i * w);
    }
    return;
  }
  std::vector<std::pair<Key, const double*>> items;
  replica.for_each_hashed([&](const Key& k, std::span<const double> v) { items.emplace_back(k, v.data()); });
  std::sort(items.begin(), items.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  for (const auto& [k, v] : items) {
    const double* bv = base.find(k);
    const double* ref = bv ? bv : base.default_words().data();
    if (!std::equal(v, v + w, ref)) emit(k, v, ref);
  }
}

}  // namespace

RunStats run_partitioned(const std::vector<ir::Program>& parts, ExecutionState& state,
                         const PartitionedOptions& opts) {
  if (parts.empty()) throw Error(ErrorCode::InvalidArgument, "no partitions");
  if (opts.workers == 0) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
  if (opts.sweeps_per_exchange == 0) throw Error(ErrorCode::InvalidArgument, "sweeps_per_exchange must be >= 1");
  const std::size_t P = parts.size();
  const bool whilelem = has_whilelem(parts[0].root);
  Analysis an = analyze(parts[0], opts.scheme, P == 1);
  if (P > 1 && an.split_field.empty())
    throw Error(ErrorCode::NotPartitionable, "partition programs carry no split");

  auto t0 = Clock::now();
  for (auto& [_, s] : state.spaces()) s.normalize();
  const ExecutionState initial = state;
  ExecutionState synced = state;
  std::vector<ExecutionState> replicas(P, state);
  std::vector<std::unique_ptr<detail::Bound>> bounds;
  std::vector<std::unique_ptr<PartitionRunner>> runners;
  for (std::size_t p = 0; p < P; ++p) {
    bounds.push_back(std::make_unique<detail::Bound>(parts[p], replicas[p]));
    std::size_t wp = 1;
    if (opts.workers > P) wp = opts.workers / P + (p < opts.workers % P ? 1 : 0);
    Scheduler sch = opts.sched;
    sch.seed += p;
    runners.push_back(std::make_unique<PartitionRunner>(*bounds[p], wp, sch));
  }

  // Owner lookup for Owned spaces.
  std::unique_ptr<ir::Partitioner> partitioner;
  if (P > 1) {
    const ir::LoopSpec* tl = ir::innermost_tuple_loop(parts[0].root);
    const ir::Selection* sel = ir::selection_of(tl->domain);
    partitioner = std::make_unique<ir::Partitioner>(parts[0].reservoir(sel->reservoir), sel->part->field,
                                                    sel->part->count, sel->part->mode);
  }

  RunStats rs;
  rs.partitions = P;
  rs.workers = opts.workers;
  rs.status = RunStatus::SweepBudgetExhausted;
  const bool random = opts.sched.policy == SchedulerPolicy::RandomWithReplacement;
  bool verify = false;
  std::size_t sweep_counter = 0;
  const std::size_t threads = std::min(opts.workers, P);

  for (std::size_t round = 0; round < opts.max_rounds; ++round) {
    std::vector<SweepStats> pstats(P);
    std::vector<std::size_t> psweeps(P, 0);
    auto run_part = [&](std::size_t p) {
      std::size_t limit = whilelem ? opts.sweeps_per_exchange : 1;
      for (std::size_t s = 0; s < limit; ++s) {
        SweepStats st = runners[p]->sweep(sweep_counter + s, verify);
        pstats[p] += st;
        ++psweeps[p];
        if (st.state_changes == 0) break;
      }
    };
    if (threads <= 1) {
      for (std::size_t p = 0; p < P; ++p) run_part(p);
    } else {
      std::vector<std::exception_ptr> errors(threads);
      std::vector<std::thread> ts;
      for (std::size_t t = 0; t < threads; ++t) {
        ts.emplace_back([&, t] {
          try {
            for (std::size_t p = t; p < P; p += threads) run_part(p);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
      for (auto& th : ts) th.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }
    sweep_counter += opts.sweeps_per_exchange;

    RoundInfo info;
    info.round = round;
    for (std::size_t p = 0; p < P; ++p) info.stats += pstats[p];
    rs.sweeps += *std::max_element(psweeps.begin(), psweeps.end());
    rs.rounds = round + 1;
    rs.tuples_visited += info.stats.tuples_visited;
    rs.guards_fired += info.stats.guards_fired;
    rs.state_changes += info.stats.state_changes;

    bool exchange_empty = true;
    if (P > 1) {
      std::vector<ExecutionState*> reps;
      for (auto& r : replicas) reps.push_back(&r);
      for (auto& r : replicas)
        for (auto& [_, s] : r.spaces()) s.normalize();
      std::vector<xchg::UpdateBuffer> bufs;
      for (std::size_t p = 0; p < P; ++p) {
        bufs.emplace_back(p, [&, p](const std::string& space, const Key& k) {
          auto it = an.owner_component.find(space);
          return it != an.owner_component.end() && (*partitioner)(k[it->second]) == p;
        });
      }
      for (const auto& [name, c] : an.cls) {
        if (c != SpaceClass::Add && c != SpaceClass::Owned) continue;
        for (std::size_t p = 0; p < P; ++p)
          diff_to_buffer(replicas[p].space(name), synced.space(name), c == SpaceClass::Owned, bufs[p]);
      }
      for (const auto& b : bufs)
        if (!b.empty()) exchange_empty = false;
      reps.push_back(&synced);
      if (opts.scheme == xchg::ExchangeScheme::Master)
        info.exchange = xchg::flush_master(bufs, reps, synced, opts.master_id);
      else
        info.exchange = xchg::flush_buffered(bufs, reps, synced);
      reps.pop_back();

      if (opts.scheme == xchg::ExchangeScheme::Indirect && !parts[0].assertions.empty()) {
        ExecutionState auth;
        std::set<std::string> needed;
        for (const auto& as : parts[0].assertions) {
          needed.insert(as.assignment);
          if (as.kind == ir::Assertion::Kind::Sum) needed.insert(as.source);
        }
        for (std::size_t p = 0; p < P; ++p) bounds[p]->export_locals();
        for (const auto& name : needed) {
          if (!initial.has(name))
            throw Error(ErrorCode::AssertionUnsatisfiable, "assertion space '" + name + "' not declared");
          SharedSpace s = initial.space(name);
          for (std::size_t p = 0; p < P; ++p) overlay_changes(initial.space(name), replicas[p].space(name), s);
          auth.spaces().emplace(name, std::move(s));
        }
        for (const auto& as : parts[0].assertions) auth.spaces().emplace(as.derived, initial.space(as.derived));
        if (info.stats.state_changes != 0) exchange_empty = false;
        reps.push_back(&synced);
        info.exchange += xchg::flush_indirect(parts[0].assertions, reps, auth);
      }
    }
    rs.exchange += info.exchange;

    if (opts.on_exchange) {
      std::vector<const ExecutionState*> views;
      for (auto& r : replicas) views.push_back(&r);
      opts.on_exchange(info, views);
    }

    if (!whilelem || (info.stats.state_changes == 0 && exchange_empty)) {
      if (!whilelem || !random || verify) {
        rs.status = RunStatus::Terminated;
        break;
      }
      verify = true;
    } else {
      verify = false;
    }
    if (opts.early_stop && opts.early_stop(info, P > 1 ? synced : replicas[0])) {
      rs.status = RunStatus::EarlyStopped;
      break;
    }
  }

  // Merge replicas into the caller's state.
  for (std::size_t p = 0; p < P; ++p) bounds[p]->export_locals();
  for (auto& r : replicas)
    for (auto& [_, s] : r.spaces()) s.normalize();
  for (auto& [name, s] : state.spaces()) {
    auto it = an.cls.find(name);
    SpaceClass c = it == an.cls.end() ? SpaceClass::Private : it->second;
    if (P == 1 || c == SpaceClass::Add || c == SpaceClass::Owned || c == SpaceClass::Derived) {
      s = P == 1 ? replicas[0].space(name) : (c == SpaceClass::Derived ? replicas[0].space(name) : synced.space(name));
    } else if (c != SpaceClass::ReadOnly) {
      for (std::size_t p = 0; p < P; ++p) overlay_changes(initial.space(name), replicas[p].space(name), s);
    }
  }
  rs.wall_ms = ms_since(t0);
  return rs;
}

std::string csv_header() {
  return "variant,partitions,workers,sweeps,guards_fired,state_changes,wall_ms,rounds,tuples_visited,"
         "deltas_sent,keys_touched,bytes,messages,status";
}

std::string to_csv_row(const RunStats& s) {
  std::ostringstream os;
  os << s.variant << ',' << s.partitions << ',' << s.workers << ',' << s.sweeps << ',' << s.guards_fired << ','
     << s.state_changes << ',' << s.wall_ms << ',' << s.rounds << ',' << s.tuples_visited << ','
     << s.exchange.deltas_sent << ',' << s.exchange.keys_touched << ',' << s.exchange.bytes << ','
     << s.exchange.messages << ',' << to_string(s.status);
  return os.str();
}

}  // namespace forelem::exec
