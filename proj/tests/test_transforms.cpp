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

#include <cstdio>
#include <fstream>
#include <random>

#include "forelem/apps.hpp"
#include "forelem/driver.hpp"
#include "forelem/executor.hpp"
#include "forelem/transforms.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace forelem;

namespace {

std::vector<ir::Tuple> sweep_multiset(const ir::Program& p) {
  return testutil::multiset(exec::trace_sweep(p, make_state(p)));
}

std::vector<ir::Tuple> union_of(const std::vector<ir::Program>& parts) {
  std::vector<ir::Tuple> all;
  for (const auto& q : parts) {
    auto t = exec::trace_sweep(q, make_state(q));
    all.insert(all.end(), t.begin(), t.end());
  }
  return testutil::multiset(all);
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

std::string temp_file(const std::string& name, const std::string& content) {
  std::string path = "/tmp/forelem_test_" + name;
  std::ofstream(path) << content;
  return path;
}

}  // namespace

TEST_CASE("orthogonalize and materialize keep the executed-tuple multiset") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    auto r = testutil::random_reservoir(rng, 1 + rng() % 60, 1 + rng() % 8);
    auto base = testutil::counting_program(r);
    auto ref = sweep_multiset(base);
    auto o = xform::orthogonalize(base, "b", "y");
    CHECK(sweep_multiset(o) == ref);
    auto oo = xform::orthogonalize(o, "c", "z");
    CHECK(sweep_multiset(oo) == ref);
    CHECK(sweep_multiset(xform::materialize(base)) == ref);
    CHECK(sweep_multiset(xform::materialize(oo)) == ref);
  }
}

TEST_CASE("orthogonalize on a single-valued field gives one outer iteration") {
  std::vector<ir::Tuple> ts;
  for (std::uint64_t i = 0; i < 5; ++i) ts.push_back(ir::Tuple::of_indices({i, 3, i}));
  ir::TupleSchema schema(
      {{"a", ir::FieldType::index()}, {"b", ir::FieldType::index()}, {"c", ir::FieldType::index()}});
  auto p = testutil::counting_program(ir::build_reservoir("R", schema, ts));
  auto o = xform::orthogonalize(p, "b", "y");
  CHECK(sweep_multiset(o) == sweep_multiset(p));
  CHECK(o.history.back() == "orthogonalize(b,y)");
  CHECK(ir::to_string(o).find("y in") != std::string::npos);
}

TEST_CASE("orthogonalize rejects bad fields and names in use") {
  std::mt19937_64 rng(1);
  auto p = testutil::counting_program(testutil::random_reservoir(rng, 10, 3));
  CHECK(code_of([&] { xform::orthogonalize(p, "q", "y"); }) == ErrorCode::UnknownField);
  CHECK_THROWS_AS(xform::orthogonalize(p, "b", "t"), Error);
}

TEST_CASE("both split forms cover the reservoir") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 40; ++trial) {
    auto r = testutil::random_reservoir(rng, 1 + rng() % 80, 1 + rng() % 12);
    auto base = testutil::counting_program(r);
    auto ref = sweep_multiset(base);
    std::size_t parts = 1 + rng() % 6;
    auto byval = xform::split_by_value(base, "a", parts);
    CHECK(byval.size() == parts);
    CHECK(union_of(byval) == ref);
    auto byrange = xform::split_by_range(xform::orthogonalize(base, "a", "y"), "a", parts);
    CHECK(union_of(byrange) == ref);
  }
}

TEST_CASE("split edge cases") {
  std::mt19937_64 rng(2);
  auto p = testutil::counting_program(testutil::random_reservoir(rng, 6, 2));
  auto many = xform::split_by_value(p, "a", 5);
  CHECK(union_of(many) == sweep_multiset(p));
  std::size_t empty_parts = 0;
  for (const auto& q : many) empty_parts += exec::trace_sweep(q, make_state(q)).empty();
  CHECK(empty_parts >= 3);

  ir::TupleSchema schema(
      {{"a", ir::FieldType::index()}, {"b", ir::FieldType::index()}, {"c", ir::FieldType::index()}});
  auto e = testutil::counting_program(ir::build_reservoir("R", schema, {}));
  CHECK(code_of([&] { xform::split_by_range(e, "a", 2); }) == ErrorCode::EmptyReservoir);
  CHECK(xform::split_by_value(e, "a", 2).size() == 2);
  CHECK_THROWS_AS(xform::split_by_value(many[0], "b", 2), Error);
}

TEST_CASE("materialize is idempotent and handles empty reservoirs") {
  std::mt19937_64 rng(4);
  auto p = testutil::counting_program(testutil::random_reservoir(rng, 20, 4));
  auto m = xform::materialize(p);
  CHECK(ir::to_string(xform::materialize(m)) == ir::to_string(m));
  CHECK(ir::to_string(m).find("PR") != std::string::npos);

  ir::TupleSchema schema(
      {{"a", ir::FieldType::index()}, {"b", ir::FieldType::index()}, {"c", ir::FieldType::index()}});
  auto e = xform::materialize(testutil::counting_program(ir::build_reservoir("R", schema, {})));
  auto st = make_state(e);
  CHECK(exec::run_forelem(e, st).tuples_visited == 0);
}

TEST_CASE("localize moves k-Means spaces into the tuples") {
  auto prob = testutil::kmeans_problem(200, 3, 4, 9);
  auto base = apps::build_kmeans_spec(prob);
  auto o = xform::orthogonalize(base, "x", "y");
  auto l = xform::localize(xform::localize(o, "COORDS", "coords"), "M", "c_x");
  CHECK(l.spaces.count("M") == 0);
  CHECK(l.find_localized("c_x") != nullptr);
  CHECK(l.find_localized("c_x")->is_mutable);
  CHECK_FALSE(l.find_localized("coords")->is_mutable);

  // Same visit order as the orthogonalized program, so the same fixed point.
  auto s1 = apps::init_kmeans(prob);
  auto s2 = s1;
  exec::run_whilelem(o, s1);
  exec::run_whilelem(l, s2);
  auto r1 = apps::summarize_kmeans(prob, s1);
  CHECK(r1.assign == apps::summarize_kmeans(prob, s2).assign);
  CHECK(oracle::lloyd_fixed_point(prob.points, prob.dim, prob.k, r1.assign));
}

TEST_CASE("localize rejects non-uniform and derived accesses") {
  auto sort = apps::build_sort_spec({3, 1, 2}, true);
  CHECK(code_of([&] { xform::localize(sort, "A"); }) == ErrorCode::NotLocalizable);
  auto prob = testutil::kmeans_problem(20, 2, 2, 1);
  auto km = apps::build_kmeans_spec(prob);
  CHECK_THROWS_AS(xform::localize(km, "M_SIZE"), Error);
  CHECK_THROWS_AS(xform::localize(km, "NOPE"), Error);
}

TEST_CASE("reservoir reduction shrinks the tuple count and keeps the fixed point") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto prob = testutil::dangling_problem(60, 0.4, seed);
    const std::size_t e = oracle::distinct_edge_count(prob.edges);
    const std::size_t d = oracle::dangling_count(prob.vertices, prob.edges);
    REQUIRE(d >= 18);
    auto full = apps::build_pagerank_spec(prob);
    CHECK(full.reservoir("E").size() == e + d * (prob.vertices - 1));
    auto reduced = xform::reduce_reservoir(full);
    CHECK(reduced.reservoir("E").size() == e + d);
    CHECK(ir::to_string(xform::reduce_reservoir(reduced)) == ir::to_string(reduced));

    auto s1 = apps::init_pagerank(prob);
    auto s2 = s1;
    exec::run_whilelem(full, s1);
    exec::run_whilelem(reduced, s2);
    CHECK(oracle::linf(apps::extract_pagerank(s1), apps::extract_pagerank(s2)) <= 1e-9);
    CHECK(oracle::linf(apps::extract_pagerank(s2), oracle::pagerank(prob.vertices, prob.edges, prob.d)) <= 1e-6);
  }
}

TEST_CASE("reduction rejects programs it cannot rewrite") {
  auto sort = apps::build_sort_spec({2, 1, 3}, false);
  CHECK_THROWS_AS(xform::reduce_reservoir(sort), Error);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(xform::reduce_reservoir(testutil::counting_program(testutil::random_reservoir(rng, 5, 3))), Error);
}

TEST_CASE("interchange and jagged-diagonal concretization keep matmul exact") {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = datagen::gen_sparse_matrix(16, 16, 0.2, 9, rng());
    auto b = datagen::gen_sparse_matrix(16, 16, 0.2, 9, rng());
    auto expect = oracle::matmul(16, 16, 16, a.to_dense(), b.to_dense());
    auto base = apps::build_matmul_spec(a, b);
    auto nest = xform::materialize(xform::orthogonalize(xform::orthogonalize(base, "j", "j"), "i", "i"));
    auto swapped = xform::interchange(nest, 1, 2);
    auto jds = xform::concretize(swapped, ir::Layout::JaggedDiagonal);
    CHECK(jds.layout == ir::Layout::JaggedDiagonal);
    for (const auto* p : {&nest, &swapped, &jds}) {
      auto st = apps::init_matmul(a, b);
      exec::run_forelem(*p, st);
      CHECK(apps::extract_matmul(st) == expect);
    }
    auto back = xform::interchange(swapped, 1, 2);
    CHECK(ir::to_string(back) == ir::to_string(nest));
  }
}

TEST_CASE("interchange and concretize errors") {
  auto a = apps::SparseMatrix::from_dense(2, 2, {1, 2, 0, 3});
  auto base = apps::build_matmul_spec(a, a);
  CHECK_THROWS_AS(xform::interchange(base, 0, 1), Error);
  auto nest = xform::materialize(xform::orthogonalize(base, "j", "j"));
  CHECK_THROWS_AS(xform::interchange(nest, 0, 2), Error);
  CHECK(code_of([&] { xform::concretize(base, ir::Layout::JaggedDiagonal); }) == ErrorCode::LayoutUnsupported);
  auto soa = xform::concretize(base, ir::Layout::SoA);
  CHECK(soa.concretized);
}

TEST_CASE("AoS and SoA PageRank_2 give identical rank vectors") {
  auto prob = testutil::rmat_problem(8, 3, 8);
  driver::Options aos, soa;
  aos.partitions = soa.partitions = 2;
  soa.layout = ir::Layout::SoA;
  const auto& v = xform::find_variant("PageRank_2");
  CHECK(driver::run_pagerank(prob, v, aos).pr == driver::run_pagerank(prob, v, soa).pr);
}

TEST_CASE("variant composition") {
  std::mt19937_64 rng(3);
  auto base = testutil::counting_program(testutil::random_reservoir(rng, 20, 4));
  xform::Variant empty{"E", "", {}, xchg::ExchangeScheme::Buffered, ir::Layout::AoS};
  auto same = xform::compose(base, empty, 3);
  REQUIRE(same.size() == 1);
  CHECK(ir::to_string(same[0]) == ir::to_string(base));

  xform::Variant bad{"Bad", "", {"orthogonalize(b,y)", "localize(NOPE)"}, xchg::ExchangeScheme::Buffered,
                     ir::Layout::AoS};
  try {
    xform::compose(base, bad, 2);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("step 2") != std::string::npos);
  }
  xform::Variant twice{"Twice", "", {"split(a)", "split(b)"}, xchg::ExchangeScheme::Buffered, ir::Layout::AoS};
  CHECK_THROWS_AS(xform::compose(base, twice, 2), Error);
  CHECK_THROWS_AS(xform::apply_step(base, "frobnicate(a)"), Error);

  auto km = apps::build_kmeans_spec(testutil::kmeans_problem(50, 2, 3, 1));
  for (const char* name : {"Kmeans_1", "Kmeans_2", "Kmeans_3", "Kmeans_4"}) {
    auto parts = xform::compose(km, xform::find_variant(name), 4);
    CHECK(parts.size() == 4);
    for (const auto& q : parts) CHECK(ir::validate_program(q).empty());
  }
}

TEST_CASE("variant lookup and config files") {
  CHECK(code_of([] { xform::find_variant("Kmeans_9"); }) == ErrorCode::UnknownVariant);
  std::vector<std::string> names;
  for (const auto& v : xform::builtin_variants()) names.push_back(v.name);
  for (const char* n : {"Kmeans_1", "Kmeans_2", "Kmeans_3", "Kmeans_4", "PageRank_1", "PageRank_2", "PageRank_3",
                        "PageRank_4", "Matmul_JDS"})
    CHECK(std::find(names.begin(), names.end(), n) != names.end());

  auto cfg = temp_file("variants.json",
                       R"js([{"name":"Mine","app":"pagerank","pipeline":["reduce(dangling)","split_range(u)"],)js"
                       R"js("exchange":"master"}])js");
  auto extra = xform::load_variants(cfg);
  REQUIRE(extra.size() == 1);
  CHECK(extra[0].exchange == xchg::ExchangeScheme::Master);
  CHECK(xform::find_variant("Mine", extra).pipeline.size() == 2);

  CHECK(xform::load_variants(temp_file("empty.json", "")).empty());
  CHECK(code_of([&] { xform::load_variants(temp_file("broken.json", "[{")); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { xform::load_variants(temp_file("badstep.json", R"([{"name":"X","pipeline":["zap"]}])")); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([] { xform::load_variants("/nonexistent/variants.json"); }) == ErrorCode::IoError);
}
