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

#include <random>

#include "forelem/apps.hpp"
#include "forelem/ir.hpp"
#include "forelem/space.hpp"
#include "test_util.hpp"

using namespace forelem;
using namespace forelem::ir::dsl;

namespace {

ir::TupleSchema edge_schema() {
  return ir::TupleSchema({{"u", ir::FieldType::index()}, {"v", ir::FieldType::index()}});
}

bool has_code(const std::vector<ir::Diagnostic>& ds, const std::string& code) {
  for (const auto& d : ds)
    if (d.code == code) return true;
  return false;
}

ir::Program sort_like(std::vector<ir::Stmt> body, ir::LoopKind kind = ir::LoopKind::Whilelem) {
  ir::Program p;
  p.reservoirs["E"] = std::make_shared<const ir::TupleReservoir>(
      ir::build_reservoir("E", edge_schema(), {ir::Tuple::of_indices({0, 1})}));
  ir::SpaceDecl a;
  a.name = "A";
  a.extents = {2};
  p.spaces["A"] = a;
  p.root = kind == ir::LoopKind::Whilelem ? whilelem("t", scan("E"), std::move(body))
                                          : ir::dsl::forelem("t", scan("E"), std::move(body));
  return p;
}

}  // namespace

TEST_CASE("schema rejects duplicate field names and zero-dim vectors") {
  CHECK_THROWS_AS(ir::TupleSchema({{"u", ir::FieldType::index()}, {"u", ir::FieldType::index()}}), Error);
  CHECK_THROWS_AS(ir::TupleSchema({{"p", ir::FieldType::vector(0)}}), Error);
  ir::TupleSchema s({{"m", ir::FieldType::index()}, {"p", ir::FieldType::vector(3)}, {"w", ir::FieldType::scalar()}});
  CHECK(s.width() == 5);
  CHECK(s.offset(2) == 4);
  CHECK(s.require("p") == 1);
  CHECK_THROWS_AS(s.require("q"), Error);
}

TEST_CASE("reservoir keeps duplicates and reports the offending tuple") {
  auto r = ir::build_reservoir("E", edge_schema(),
                               {ir::Tuple::of_indices({0, 1}), ir::Tuple::of_indices({0, 1}),
                                ir::Tuple::of_indices({2, 0})});
  CHECK(r.size() == 3);
  auto c = r.canonical();
  CHECK(c[0] == c[1]);
  try {
    ir::build_reservoir("E", edge_schema(), {ir::Tuple::of_indices({0, 1}), ir::Tuple::of_indices({1})});
    FAIL("expected SchemaMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaMismatch);
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
}

TEST_CASE("empty reservoir and selections") {
  auto r = ir::build_reservoir("E", edge_schema(), {});
  CHECK(r.empty());
  auto full = ir::build_reservoir("E", edge_schema(),
                                  {ir::Tuple::of_indices({3, 1}), ir::Tuple::of_indices({1, 2}),
                                   ir::Tuple::of_indices({3, 2})});
  CHECK(ir::select_by_field(full, "u", 7).empty());
  CHECK(ir::select_by_field(full, "u", 3).size() == 2);
  CHECK(ir::distinct_values(full, "u") == std::vector<std::uint64_t>{1, 3});
  CHECK_THROWS_AS(ir::select_by_field(full, "w", 1), Error);
}

TEST_CASE("select_by_field partitions the reservoir") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto r = testutil::random_reservoir(rng, 50, 6);
    std::vector<ir::Tuple> joined;
    for (auto v : ir::distinct_values(r, "b")) {
      auto part = ir::select_by_field(r, "b", v);
      for (const auto& t : part.canonical()) {
        CHECK(std::get<std::uint64_t>(t[1]) == v);
        joined.push_back(t);
      }
    }
    CHECK(testutil::multiset(joined) == r.canonical());
  }
}

TEST_CASE("partitioner modes") {
  std::vector<ir::Tuple> ts;
  for (std::uint64_t v : {10, 11, 12, 13, 14, 15, 16}) ts.push_back(ir::Tuple::of_indices({v, 0}));
  auto r = ir::build_reservoir("E", edge_schema(), ts);
  ir::Partitioner byval(r, "u", 3, ir::SplitMode::Value);
  CHECK(byval(10) == 0);
  CHECK(byval(11) == 1);
  CHECK(byval(13) == 0);
  ir::Partitioner byrange(r, "u", 3, ir::SplitMode::Range);
  CHECK(byrange.range(0) == std::pair<std::uint64_t, std::uint64_t>{10, 11});
  CHECK(byrange.range(2) == std::pair<std::uint64_t, std::uint64_t>{14, 16});
  CHECK(byrange(16) == 2);
  auto empty = ir::build_reservoir("E", edge_schema(), {});
  CHECK_THROWS_AS(ir::Partitioner(empty, "u", 2, ir::SplitMode::Range), Error);
  CHECK_NOTHROW(ir::Partitioner(empty, "u", 2, ir::SplitMode::Value));
}

TEST_CASE("application programs validate cleanly") {
  auto km = testutil::kmeans_problem(64, 3, 4, 1);
  CHECK(ir::validate_program(apps::build_kmeans_spec(km)).empty());
  auto pr = testutil::rmat_problem(6, 1);
  CHECK(ir::validate_program(apps::build_pagerank_spec(pr)).empty());
  CHECK(ir::validate_program(apps::build_pagerank_spec(pr, true)).empty());
  CHECK(ir::validate_program(apps::build_sort_spec({3, 1, 2}, false)).empty());
  auto a = apps::SparseMatrix::from_dense(2, 2, {1, 0, 2, 3});
  CHECK(ir::validate_program(apps::build_matmul_spec(a, a)).empty());
}

TEST_CASE("validator diagnostics") {
  SUBCASE("unknown space") {
    auto p = sort_like({when(cmp(ir::CmpOp::Gt, read("B", {field("u")}), cnst(0.0)), {})});
    CHECK(has_code(ir::validate_program(p), "UnknownSpace"));
    CHECK_THROWS_AS(ir::require_valid(p), Error);
  }
  SUBCASE("unknown field") {
    auto p = sort_like({when(cmp(ir::CmpOp::Gt, read("A", {field("q")}), cnst(0.0)), {})});
    CHECK(has_code(ir::validate_program(p), "UnknownField"));
  }
  SUBCASE("whilelem without a guard") {
    auto p = sort_like({assign("A", {field("u")}, cnst(1.0))});
    CHECK(has_code(ir::validate_program(p), "MissingGuard"));
    auto f = sort_like({assign("A", {field("u")}, cnst(1.0))}, ir::LoopKind::Forelem);
    CHECK(ir::validate_program(f).empty());
  }
  SUBCASE("impure guard") {
    auto w = std::make_shared<ir::Expr>(ir::Expr{ir::WriteExpr{"A", {field("u")}, cnst(1.0)}});
    auto p = sort_like({when(w, {})});
    CHECK(has_code(ir::validate_program(p), "ImpureGuard"));
  }
  SUBCASE("distance between vectors of different dims") {
    auto p = sort_like({when(cmp(ir::CmpOp::Gt, dist(cnst(Value{1.0, 2.0}), cnst(Value{1.0, 2.0, 3.0})), cnst(0.0)),
                             {})});
    CHECK(has_code(ir::validate_program(p), "DimMismatch"));
  }
  SUBCASE("unbound variable") {
    auto p = sort_like({when(cmp(ir::CmpOp::Gt, var("z"), cnst(0.0)), {})});
    CHECK(has_code(ir::validate_program(p), "UnknownVar"));
  }
}

TEST_CASE("printing shows loop kinds and guards") {
  auto s = ir::to_string(apps::build_sort_spec({2, 1}, true));
  CHECK(s.find("whilelem") != std::string::npos);
  CHECK(s.find("if") != std::string::npos);
}

TEST_CASE("shared spaces") {
  ir::SpaceDecl d;
  d.name = "C";
  d.kind = ValueKind::Vector;
  d.dim = 2;
  d.extents = {3};
  SharedSpace s(d);
  CHECK(s.read(Key{1}) == Value{0.0, 0.0});
  s.write(Key{1}, Value{1.0, 2.0});
  CHECK(s.read(Key{1}) == Value{1.0, 2.0});
  CHECK_THROWS_AS(s.read(Key{3}), Error);
  CHECK_THROWS_AS(s.read(Key{1, 1}), Error);
  CHECK_THROWS_AS(s.write(Key{0}, Value(1.0)), Error);

  ir::SpaceDecl h;
  h.name = "OLD";
  h.key_arity = 2;
  SharedSpace old(h);
  CHECK(old.read(Key{5, 9}) == Value(0.0));
  old.write(Key{5, 9}, 0.25);
  CHECK(old.entries().size() == 1);
  CHECK(old.read(Key{5, 9}) == Value(0.25));
}

TEST_CASE("dense offset is applied on read") {
  ir::SpaceDecl d;
  d.name = "PR";
  d.extents = {4};
  SharedSpace s(d);
  s.write(Key{2}, 1.0);
  s.set_offset(0.5);
  CHECK(s.read(Key{2}) == Value(1.5));
  CHECK(s.read(Key{0}) == Value(0.5));
  s.normalize();
  CHECK(s.offset() == 0.0);
  CHECK(s.read(Key{2}) == Value(1.5));
}
