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
#include <cmath>

#include "forelem/datagen.hpp"

using namespace forelem;

TEST_CASE("clustered points are seeded and shaped as requested") {
  datagen::ClusterGenConfig g;
  g.n = 1000;
  g.dim = 3;
  g.clusters = 5;
  g.seed = 9;
  auto a = datagen::gen_clustered_points(g);
  auto b = datagen::gen_clustered_points(g);
  CHECK(a.points.coords == b.points.coords);
  CHECK(a.points.n == 1000);
  CHECK(a.points.dim == 3);
  CHECK(a.points.coords.size() == 3000);
  CHECK(a.truth.size() == 1000);
  CHECK(a.centers.size() == 15);
  for (auto t : a.truth) CHECK(t < 5);
  g.seed = 10;
  CHECK(datagen::gen_clustered_points(g).points.coords != a.points.coords);

  g.n = 0;
  CHECK(datagen::gen_clustered_points(g).points.coords.empty());
}

TEST_CASE("points stay near their generating center") {
  datagen::ClusterGenConfig g;
  g.n = 4000;
  g.dim = 2;
  g.clusters = 3;
  g.seed = 2;
  auto c = datagen::gen_clustered_points(g);
  std::size_t close = 0;
  for (std::size_t i = 0; i < g.n; ++i) {
    double d2 = 0;
    for (std::size_t j = 0; j < g.dim; ++j) {
      double diff = c.points.coords[i * g.dim + j] - c.centers[c.truth[i] * g.dim + j];
      d2 += diff * diff;
    }
    // sigma <= extent/8, so 4 sigma in 2-D covers nearly every point.
    if (std::sqrt(d2) <= 4 * g.extent / 8) ++close;
  }
  CHECK(close >= g.n * 99 / 100);
}

TEST_CASE("invalid generator configurations") {
  datagen::ClusterGenConfig g;
  g.n = 10;
  g.clusters = 0;
  CHECK_THROWS_AS(datagen::gen_clustered_points(g), Error);
  g.clusters = 2;
  g.dim = 0;
  CHECK_THROWS_AS(datagen::gen_clustered_points(g), Error);

  datagen::GraphGenConfig r;
  r.a = 0.6;
  CHECK_THROWS_AS(datagen::gen_graph(r), Error);
  r.a = 0.57;
  r.scale = 0;
  CHECK_THROWS_AS(datagen::gen_graph(r), Error);
  r.scale = 31;
  CHECK_THROWS_AS(datagen::gen_graph(r), Error);
  CHECK_THROWS_AS(datagen::gen_sparse_matrix(4, 4, 1.5, 3, 0), Error);
  CHECK_THROWS_AS(datagen::gen_sparse_matrix(4, 4, 0.5, 0, 0), Error);
}

TEST_CASE("R-MAT graphs are seeded, loop free and heavy tailed") {
  datagen::GraphGenConfig r;
  r.scale = 14;
  r.seed = 3;
  auto g = datagen::gen_graph(r);
  CHECK(g.vertices == 16384);
  CHECK(g.edges == datagen::gen_graph(r).edges);
  CHECK(g.edges.size() <= 16 * g.vertices);
  CHECK(g.edges.size() >= 15 * g.vertices);
  std::vector<std::size_t> deg(g.vertices, 0);
  bool well_formed = true;
  for (auto [u, v] : g.edges) {
    well_formed = well_formed && u != v && u < g.vertices && v < g.vertices;
    ++deg[u];
  }
  CHECK(well_formed);
  std::sort(deg.rbegin(), deg.rend());
  std::size_t top = 0;
  for (std::size_t i = 0; i < g.vertices / 100; ++i) top += deg[i];
  CHECK(static_cast<double>(top) > 0.05 * static_cast<double>(g.edges.size()));
}

TEST_CASE("sparse matrices and arrays") {
  auto m = datagen::gen_sparse_matrix(64, 64, 0.2, 9, 4);
  auto dense = m.to_dense();
  std::size_t nz = 0;
  for (double v : dense) {
    if (v == 0) continue;
    ++nz;
    CHECK(v == std::round(v));
    CHECK(std::fabs(v) <= 9);
  }
  CHECK(nz > 64 * 64 / 10);
  CHECK(nz < 64 * 64 * 3 / 10);
  CHECK(datagen::gen_sparse_matrix(64, 64, 0.2, 9, 4).to_dense() == dense);
  CHECK(datagen::gen_sparse_matrix(8, 8, 0.0, 9, 4).to_dense() == std::vector<double>(64, 0.0));

  auto a = datagen::gen_array(500, 7, 1);
  CHECK(a.size() == 500);
  for (double v : a) CHECK(std::fabs(v) <= 7);
  CHECK(a == datagen::gen_array(500, 7, 1));
  CHECK(datagen::gen_array(0, 7, 1).empty());
}
