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

#include <fstream>

#include "forelem/apps.hpp"
#include "forelem/driver.hpp"
#include "forelem/executor.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace forelem;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

void check_kmeans_invariants(const apps::KMeansProblem& prob, const driver::KMeansRun& run) {
  const auto& a = run.result.assign;
  REQUIRE(a.size() == prob.n);
  auto sizes = oracle::cluster_sizes(a, prob.k);
  CHECK(run.result.sizes == sizes);
  CHECK(run.check.sizes_match);
  CHECK(run.check.total_matches);
  CHECK(run.check.max_sum_rel_err <= 1e-9);
  for (auto s : sizes) CHECK(s >= 1);
  CHECK(oracle::lloyd_fixed_point(prob.points, prob.dim, prob.k, a));
}

}  // namespace

TEST_CASE("k-Means problem validation") {
  apps::KMeansProblem p;
  p.n = 2;
  p.dim = 1;
  p.k = 3;
  p.points = {0, 1};
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::InvalidArgument);
  p.k = 0;
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::InvalidArgument);
  p.k = 2;
  p.points = {0};
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("initial assignment is seeded and leaves no cluster empty") {
  auto prob = testutil::kmeans_problem(50, 2, 8, 3);
  auto a = apps::initial_assignment(prob);
  CHECK(a == apps::initial_assignment(prob));
  for (auto s : oracle::cluster_sizes(a, 8)) CHECK(s >= 1);
  prob.k = 50;
  for (auto s : oracle::cluster_sizes(apps::initial_assignment(prob), 50)) CHECK(s == 1);
}

TEST_CASE("two well separated points are already a fixed point") {
  apps::KMeansProblem prob;
  prob.n = 2;
  prob.dim = 2;
  prob.k = 2;
  prob.points = {0, 0, 10, 10};
  auto st = apps::init_kmeans(prob, {0, 1});
  auto res = exec::run_whilelem(apps::build_kmeans_spec(prob), st);
  CHECK(res.status == exec::RunStatus::Terminated);
  CHECK(res.sweeps.size() == 1);
  CHECK(res.total().state_changes == 0);
}

TEST_CASE("k-Means whilelem reaches a Lloyd fixed point with consistent statistics") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto prob = testutil::kmeans_problem(300, 3, 4, seed);
    auto st = apps::init_kmeans(prob);
    auto res = exec::run_whilelem(apps::build_kmeans_spec(prob), st);
    CHECK(res.status == exec::RunStatus::Terminated);
    auto r = apps::summarize_kmeans(prob, st);
    CHECK(oracle::lloyd_fixed_point(prob.points, prob.dim, prob.k, r.assign));
    auto sizes = oracle::cluster_sizes(r.assign, prob.k);
    auto sums = oracle::cluster_sums(prob.points, prob.dim, r.assign, prob.k);
    for (std::uint64_t m = 0; m < prob.k; ++m) {
      CHECK(st.space("M_SIZE").read(Key{m}) == Value(static_cast<double>(sizes[m])));
      auto got = st.space("M_SUM").read(Key{m});
      for (std::size_t j = 0; j < prob.dim; ++j) CHECK(got.as_vector()[j] == doctest::Approx(sums[m * prob.dim + j]));
    }
  }
}

TEST_CASE("all k-Means variants pass verification") {
  auto prob = testutil::kmeans_problem(1024, 4, 4, 12);
  driver::Options opt;
  opt.partitions = 4;
  for (const char* name : {"Kmeans_1", "Kmeans_2", "Kmeans_3", "Kmeans_4"}) {
    CAPTURE(name);
    auto run = driver::run_kmeans(prob, xform::find_variant(name), opt);
    CHECK(run.stats.status == exec::RunStatus::Terminated);
    CHECK(driver::verify(prob, run).pass);
    check_kmeans_invariants(prob, run);
  }
}

TEST_CASE("k-Means threshold stops early and convergence delta suppresses marginal moves") {
  auto prob = testutil::kmeans_problem(2000, 2, 4, 5);
  driver::Options opt;
  auto full = driver::run_kmeans(prob, xform::find_variant("Kmeans_1"), opt);
  prob.threshold = 0.05;
  auto early = driver::run_kmeans(prob, xform::find_variant("Kmeans_1"), opt);
  CHECK(early.stats.status == exec::RunStatus::EarlyStopped);
  CHECK(early.stats.sweeps <= full.stats.sweeps);
  CHECK(driver::verify(prob, early).pass);
  prob.threshold = 0.0;
  prob.convergence_delta = 1e6;
  auto frozen = driver::run_kmeans(prob, xform::find_variant("Kmeans_1"), opt);
  CHECK(frozen.stats.state_changes == 0);
}

TEST_CASE("batch Lloyd oracle converges to a fixed point") {
  auto prob = testutil::kmeans_problem(500, 2, 5, 8);
  auto r = apps::oracle_lloyd(prob, apps::initial_assignment(prob));
  CHECK(oracle::lloyd_fixed_point(prob.points, prob.dim, prob.k, r.assign));
  CHECK(apps::is_lloyd_fixed_point(prob, r.assign));
  CHECK(r.wcss == doctest::Approx(apps::wcss(prob, r.assign)));
}

TEST_CASE("graph ingestion") {
  apps::PageRankProblem p;
  CHECK(code_of([&] { apps::ingest(p); }) == ErrorCode::EmptyGraph);
  p.vertices = 3;
  p.edges = {{0, 3}};
  CHECK(code_of([&] { apps::ingest(p); }) == ErrorCode::InvalidArgument);
  p.edges = {{0, 1}, {0, 1}, {1, 1}, {1, 2}};
  p.d = 1.0;
  CHECK(code_of([&] { apps::ingest(p); }) == ErrorCode::InvalidArgument);
  p.d = 0.85;
  auto g = apps::ingest(p);
  CHECK(g.edges.size() == 2);
  CHECK(g.dangling == std::vector<std::uint64_t>{2});
  CHECK(g.dout[2] == 2.0);
  CHECK(g.expanded_size() == 4);
}

TEST_CASE("library power iteration agrees with the expanded-graph oracle") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto prob = testutil::dangling_problem(40, 0.3, seed);
    auto lib = apps::oracle_power_iteration(prob);
    CHECK(oracle::linf(lib, oracle::pagerank(prob.vertices, prob.edges, prob.d)) <= 1e-10);
    CHECK(apps::pagerank_residual(prob, lib) <= 1e-11);
  }
}

TEST_CASE("single vertex graph") {
  apps::PageRankProblem p;
  p.vertices = 1;
  auto st = apps::init_pagerank(p);
  auto res = exec::run_whilelem(apps::build_pagerank_spec(p), st);
  CHECK(res.status == exec::RunStatus::Terminated);
  CHECK(apps::extract_pagerank(st)[0] == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("all PageRank variants pass verification under both flush schemes") {
  auto prob = testutil::rmat_problem(8, 4, 8);
  auto ref = oracle::pagerank(prob.vertices, prob.edges, prob.d);
  for (const char* name : {"PageRank_1", "PageRank_2", "PageRank_3", "PageRank_4"}) {
    for (auto scheme : {xchg::ExchangeScheme::Buffered, xchg::ExchangeScheme::Master}) {
      CAPTURE(name);
      driver::Options opt;
      opt.partitions = 3;
      opt.scheme = scheme;
      auto run = driver::run_pagerank(prob, xform::find_variant(name), opt);
      CHECK(run.stats.status == exec::RunStatus::Terminated);
      CHECK(driver::verify(prob, run).pass);
      CHECK(oracle::linf(run.pr, ref) <= 1e-6);
    }
  }
}

TEST_CASE("matmul and sort applications") {
  auto a = apps::SparseMatrix::from_dense(2, 3, {1, 0, 2, 0, 3, 0});
  auto b = apps::SparseMatrix::from_dense(2, 2, {1, 1, 1, 1});
  CHECK(code_of([&] { apps::build_matmul_spec(a, b); }) == ErrorCode::DimMismatch);
  CHECK(a.to_dense() == std::vector<double>{1, 0, 2, 0, 3, 0});
  CHECK(code_of([] { apps::build_sort_spec({}, true); }) == ErrorCode::InvalidArgument);

  for (const char* name : {"Matmul_Base", "Matmul_SoA", "Matmul_JDS"}) {
    auto x = datagen::gen_sparse_matrix(12, 12, 0.25, 9, 1);
    auto y = datagen::gen_sparse_matrix(12, 12, 0.25, 9, 2);
    auto run = driver::run_matmul(x, y, xform::find_variant(name), {});
    CHECK(run.c == oracle::matmul(12, 12, 12, x.to_dense(), y.to_dense()));
    CHECK(driver::verify(x, y, run).pass);
  }
  auto arr = datagen::gen_array(20, 9, 4);
  auto sorted = driver::run_sort(arr, false, {});
  CHECK(driver::verify(arr, sorted).pass);
}

TEST_CASE("verification never passes a wrong answer") {
  auto prob = testutil::rmat_problem(7, 1, 8);
  driver::PageRankRun run = driver::run_pagerank(prob, xform::find_variant("PageRank_1"), {});
  run.pr[0] += 1e-3;
  CHECK_FALSE(driver::verify(prob, run).pass);

  auto km = testutil::kmeans_problem(200, 2, 3, 2);
  auto kr = driver::run_kmeans(km, xform::find_variant("Kmeans_1"), {});
  kr.check.sizes_match = false;
  CHECK_FALSE(driver::verify(km, kr).pass);
}

TEST_CASE("point and edge files round-trip") {
  apps::PointSet ps{3, 2, {0.1, 1.0 / 3.0, -2.5, 4, 1e-17, 7}};
  apps::write_points("/tmp/forelem_pts.txt", ps);
  auto back = apps::read_points("/tmp/forelem_pts.txt");
  CHECK(back.n == 3);
  CHECK(back.dim == 2);
  CHECK(back.coords == ps.coords);

  std::vector<std::pair<std::uint64_t, std::uint64_t>> es{{0, 1}, {5, 2}};
  apps::write_edges("/tmp/forelem_edges.txt", es);
  CHECK(apps::read_edges("/tmp/forelem_edges.txt") == es);

  std::ofstream("/tmp/forelem_bad.txt") << "# header\n1 2\n3\n";
  try {
    apps::read_points("/tmp/forelem_bad.txt");
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
    CHECK(std::string(e.what()).find("forelem_bad.txt:3") != std::string::npos);
  }
  CHECK(code_of([] { apps::read_edges("/nonexistent/e.txt"); }) == ErrorCode::IoError);
}
