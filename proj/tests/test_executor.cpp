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

#include <doctest.h>

#include <algorithm>
#include <random>

#include "forelem/apps.hpp"
#include "forelem/executor.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace forelem;
using namespace forelem::ir::dsl;

namespace {

std::vector<double> sorted_copy(std::vector<double> a) {
  std::sort(a.begin(), a.end());
  return a;
}

// Every tuple of a terminated whilelem program is a no-op.
bool all_noops(const ir::Program& p, const ExecutionState& st) {
  const ir::LoopSpec* tl = ir::innermost_tuple_loop(p.root);
  const auto& r = p.reservoir(ir::selection_of(tl->domain)->reservoir);
  for (const auto& t : r.canonical()) {
    ExecutionState copy = st;
    if (!exec::execute_tuple(p, t, copy).empty()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("whilelem over an empty reservoir terminates immediately") {
  ir::Program p;
  ir::TupleSchema schema({{"u", ir::FieldType::index()}, {"v", ir::FieldType::index()}});
  p.reservoirs["E"] = std::make_shared<const ir::TupleReservoir>(ir::build_reservoir("E", schema, {}));
  ir::SpaceDecl d;
  d.name = "A";
  d.extents = {4};
  p.spaces["A"] = d;
  p.root = whilelem("t", scan("E"),
                    {when(cmp(ir::CmpOp::Gt, read("A", {field("u")}), read("A", {field("v")})),
                          {swap("A", {field("u")}, {field("v")})})});
  ExecutionState st = make_state(p);
  ExecutionState before = st;
  auto res = exec::run_whilelem(p, st);
  CHECK(res.status == exec::RunStatus::Terminated);
  CHECK(res.total().tuples_visited == 0);
  CHECK(st == before);

  exec::PartitionedOptions po;
  auto rs = exec::run_partitioned({p}, st, po);
  CHECK(rs.status == exec::RunStatus::Terminated);
  CHECK(st == before);
}

TEST_CASE("forelem runs the body exactly once per tuple") {
  std::mt19937_64 rng(5);
  auto r = testutil::random_reservoir(rng, 200, 7);
  std::vector<double> expect(7, 0.0);
  for (const auto& t : r.canonical())
    expect[std::get<std::uint64_t>(t[0])] += static_cast<double>(std::get<std::uint64_t>(t[2]));
  auto p = testutil::counting_program(r);
  ExecutionState st = make_state(p);
  auto stats = exec::run_forelem(p, st);
  CHECK(stats.tuples_visited == 200);
  for (std::uint64_t a = 0; a < 7; ++a) CHECK(st.space("S").read(Key{a}) == Value(expect[a]));
  CHECK_THROWS_AS(exec::run_whilelem(p, st), Error);
}

TEST_CASE("sparse matmul through forelem equals the dense oracle") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = datagen::gen_sparse_matrix(9, 7, 0.3, 5, rng());
    auto b = datagen::gen_sparse_matrix(7, 8, 0.3, 5, rng());
    auto p = apps::build_matmul_spec(a, b);
    auto st = apps::init_matmul(a, b);
    exec::run_forelem(p, st);
    CHECK(apps::extract_matmul(st) == oracle::matmul(9, 7, 8, a.to_dense(), b.to_dense()));
  }
}

TEST_CASE("execute_tuple on k-Means and PageRank no-op tuples") {
  auto km = testutil::kmeans_problem(32, 2, 3, 4);
  auto kp = apps::build_kmeans_spec(km);
  auto kst = apps::init_kmeans(km);
  auto assign = apps::initial_assignment(km);
  ir::Tuple own = ir::Tuple::of_indices({assign[0], 0});
  CHECK(exec::execute_tuple(kp, own, kst).empty());

  apps::PageRankProblem pr;
  pr.vertices = 3;
  pr.edges = {{0, 1}, {1, 2}, {2, 0}};
  auto pp = apps::build_pagerank_spec(pr);
  auto pst = apps::init_pagerank(pr);
  pst.space("OLD").write(Key{0, 1}, pst.space("PR").read(Key{0}));
  CHECK(exec::execute_tuple(pp, ir::Tuple::of_indices({0, 1}), pst).empty());
  auto rec = exec::execute_tuple(pp, ir::Tuple::of_indices({1, 2}), pst);
  CHECK(rec.fired);
  CHECK(rec.changes.size() == 2);
}

TEST_CASE("swap executes atomically with pre-block right-hand sides") {
  auto p = apps::build_sort_spec({5, 2}, true);
  auto st = apps::init_sort({5, 2});
  auto rec = exec::execute_tuple(p, ir::Tuple::of_indices({0, 1}), st);
  CHECK(rec.changes.size() == 2);
  CHECK(apps::extract_sorted(st) == std::vector<double>{2, 5});
}

TEST_CASE("a dividing block is rolled back before the error propagates") {
  ir::Program p;
  ir::TupleSchema schema({{"u", ir::FieldType::index()}});
  p.reservoirs["R"] = std::make_shared<const ir::TupleReservoir>(
      ir::build_reservoir("R", schema, {ir::Tuple::of_indices({0}), ir::Tuple::of_indices({1})}));
  for (const char* n : {"A", "Z"}) {
    ir::SpaceDecl d;
    d.name = n;
    d.extents = {2};
    p.spaces[n] = d;
  }
  p.root = ir::dsl::forelem("t", scan("R"),
                            {add_to("A", {field("u")}, cnst(1.0)),
                             add_to("A", {field("u")}, cnst(1.0) / read("Z", {field("u")}))});
  ExecutionState st = make_state(p);
  st.space("Z").write(Key{0}, 1.0);
  try {
    exec::run_forelem(p, st);
    FAIL("expected DivByZero");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DivByZero);
  }
  CHECK(st.space("A").read(Key{0}) == Value(2.0));
  CHECK(st.space("A").read(Key{1}) == Value(0.0));
}

TEST_CASE("sort terminates sorted and every tuple is then a no-op") {
  std::mt19937_64 rng(17);
  for (bool adjacent : {true, false}) {
    for (int trial = 0; trial < 20; ++trial) {
      auto a = datagen::gen_array(1 + rng() % 30, 50, rng());
      auto p = apps::build_sort_spec(a, adjacent);
      auto st = apps::init_sort(a);
      auto res = exec::run_whilelem(p, st);
      CHECK(res.status == exec::RunStatus::Terminated);
      CHECK(res.sweeps.back().state_changes == 0);
      CHECK(apps::extract_sorted(st) == sorted_copy(a));
      CHECK(all_noops(p, st));
    }
  }
}

TEST_CASE("sweep budget exhaustion is reported, not thrown") {
  auto a = datagen::gen_array(30, 100, 2);
  auto p = apps::build_sort_spec(a, true);
  auto st = apps::init_sort(a);
  auto res = exec::run_whilelem(p, st, {}, 2);
  CHECK(res.status == exec::RunStatus::SweepBudgetExhausted);
  CHECK(res.sweeps.size() == 2);
}

TEST_CASE("PageRank fixed point is scheduler independent") {
  auto prob = testutil::rmat_problem(7, 9, 8);
  auto p = apps::build_pagerank_spec(prob);
  auto base = apps::init_pagerank(prob);
  auto st = base;
  exec::run_whilelem(p, st);
  auto ref = apps::extract_pagerank(st);
  CHECK(oracle::linf(ref, oracle::pagerank(prob.vertices, prob.edges, prob.d)) <= 1e-6);
  const double tol = 10 * prob.epsilon * static_cast<double>(prob.vertices);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s2 = base;
    auto res = exec::run_whilelem(p, s2, exec::Scheduler::shuffled(seed));
    CHECK(res.status == exec::RunStatus::Terminated);
    CHECK(oracle::linf(apps::extract_pagerank(s2), ref) <= tol);
  }
  auto s3 = base;
  CHECK(exec::run_whilelem(p, s3).status == exec::RunStatus::Terminated);
  CHECK(all_noops(p, s3));
}

TEST_CASE("sort result is identical under all schedulers") {
  auto a = datagen::gen_array(25, 20, 8);
  auto p = apps::build_sort_spec(a, false);
  for (auto sched : {exec::Scheduler::in_order(), exec::Scheduler::shuffled(4), exec::Scheduler::random(4),
                     exec::Scheduler::random(5, 7)}) {
    auto st = apps::init_sort(a);
    auto res = exec::run_whilelem(p, st, sched);
    CHECK(res.status == exec::RunStatus::Terminated);
    CHECK(apps::extract_sorted(st) == sorted_copy(a));
  }
}

TEST_CASE("trace_sweep visits every tuple once") {
  std::mt19937_64 rng(1);
  auto r = testutil::random_reservoir(rng, 80, 5);
  auto p = testutil::counting_program(r);
  auto trace = exec::trace_sweep(p, make_state(p));
  CHECK(testutil::multiset(trace) == r.canonical());
}

TEST_CASE("one partition behaves like run_whilelem") {
  auto prob = testutil::rmat_problem(7, 2, 8);
  auto p = apps::build_pagerank_spec(prob);
  for (auto scheme : {xchg::ExchangeScheme::Buffered, xchg::ExchangeScheme::Master}) {
    auto a = apps::init_pagerank(prob);
    auto b = a;
    exec::run_whilelem(p, a);
    exec::PartitionedOptions po;
    po.scheme = scheme;
    auto rs = exec::run_partitioned({p}, b, po);
    CHECK(rs.status == exec::RunStatus::Terminated);
    CHECK(apps::extract_pagerank(a) == apps::extract_pagerank(b));
  }
}

TEST_CASE("several workers inside one partition reach the same fixed point") {
  auto prob = testutil::rmat_problem(8, 6, 8);
  auto p = apps::build_pagerank_spec(prob);
  auto st = apps::init_pagerank(prob);
  exec::PartitionedOptions po;
  po.workers = 4;
  auto rs = exec::run_partitioned({p}, st, po);
  CHECK(rs.status == exec::RunStatus::Terminated);
  CHECK(oracle::linf(apps::extract_pagerank(st), oracle::pagerank(prob.vertices, prob.edges, prob.d)) <= 1e-6);

  auto a = datagen::gen_array(40, 100, 6);
  auto sp = apps::build_sort_spec(a, false);
  auto ss = apps::init_sort(a);
  CHECK(exec::run_partitioned({sp}, ss, po).status == exec::RunStatus::Terminated);
  CHECK(apps::extract_sorted(ss) == sorted_copy(a));
}

TEST_CASE("run statistics serialize to CSV") {
  auto h = exec::csv_header();
  for (const char* col : {"variant", "partitions", "workers", "sweeps", "guards_fired", "state_changes", "wall_ms"})
    CHECK(h.find(col) != std::string::npos);
  exec::RunStats s;
  s.variant = "X";
  auto row = exec::to_csv_row(s);
  CHECK(std::count(row.begin(), row.end(), ',') == std::count(h.begin(), h.end(), ','));
}
