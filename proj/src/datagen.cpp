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

#include "forelem/datagen.hpp"

#include <cmath>
#include <random>

namespace forelem::datagen {

ClusteredPoints gen_clustered_points(const ClusterGenConfig& cfg) {
  if (cfg.clusters == 0) throw Error(ErrorCode::InvalidArgument, "need at least one cluster");
  if (cfg.dim == 0) throw Error(ErrorCode::InvalidArgument, "dim must be >= 1");
  if (!(cfg.extent > 0.0)) throw Error(ErrorCode::InvalidArgument, "extent must be positive");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> where(0.0, cfg.extent);
  std::uniform_real_distribution<double> spread(cfg.extent / 16.0, cfg.extent / 8.0);
  ClusteredPoints out;
  out.centers.resize(cfg.clusters * cfg.dim);
  for (auto& c : out.centers) c = where(rng);
  std::vector<double> sigma(cfg.clusters);
  for (auto& s : sigma) s = spread(rng);

  std::uniform_int_distribution<std::uint64_t> pick(0, cfg.clusters - 1);
  std::normal_distribution<double> noise(0.0, 1.0);
  out.points.n = cfg.n;
  out.points.dim = cfg.dim;
  out.points.coords.resize(cfg.n * cfg.dim);
  out.truth.resize(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    auto c = pick(rng);
    out.truth[i] = c;
    for (std::size_t j = 0; j < cfg.dim; ++j)
      out.points.coords[i * cfg.dim + j] = out.centers[c * cfg.dim + j] + sigma[c] * noise(rng);
  }
  return out;
}

GeneratedGraph gen_graph(const GraphGenConfig& cfg) {
  if (cfg.scale < 1 || cfg.scale > 30) throw Error(ErrorCode::InvalidArgument, "scale must lie in [1,30]");
  if (cfg.a < 0 || cfg.b < 0 || cfg.c < 0 || cfg.d < 0 || std::fabs(cfg.a + cfg.b + cfg.c + cfg.d - 1.0) > 1e-9)
    throw Error(ErrorCode::InvalidArgument, "quadrant probabilities must be non-negative and sum to 1");
  GeneratedGraph g;
  g.vertices = std::size_t{1} << cfg.scale;
  const std::size_t draws = cfg.edge_factor * g.vertices;
  g.edges.reserve(draws);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double ab = cfg.a + cfg.b, abc = ab + cfg.c;
  for (std::size_t e = 0; e < draws; ++e) {
    std::uint64_t u = 0, v = 0;
    for (unsigned bit = 0; bit < cfg.scale; ++bit) {
      double r = unit(rng);
      u <<= 1;
      v <<= 1;
      if (r < cfg.a) continue;
      if (r < ab) v |= 1;
      else if (r < abc) u |= 1;
      else u |= 1, v |= 1;
    }
    if (u != v) g.edges.emplace_back(u, v);
  }
  return g;
}

apps::SparseMatrix gen_sparse_matrix(std::size_t rows, std::size_t cols, double density, int max_abs,
                                     std::uint64_t seed) {
  if (!(density >= 0.0 && density <= 1.0)) throw Error(ErrorCode::InvalidArgument, "density must lie in [0,1]");
  if (max_abs < 1) throw Error(ErrorCode::InvalidArgument, "max_abs must be >= 1");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(density);
  std::uniform_int_distribution<int> mag(1, max_abs);
  std::bernoulli_distribution negative(0.5);
  apps::SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  for (std::uint64_t i = 0; i < rows; ++i)
    for (std::uint64_t j = 0; j < cols; ++j) {
      if (!keep(rng)) continue;
      int x = mag(rng);
      m.entries.emplace_back(i, j, negative(rng) ? -x : x);
    }
  return m;
}

std::vector<double> gen_array(std::size_t n, int max_abs, std::uint64_t seed) {
  if (max_abs < 0) throw Error(ErrorCode::InvalidArgument, "max_abs must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(-max_abs, max_abs);
  std::vector<double> a(n);
  for (auto& x : a) x = pick(rng);
  return a;
}

}  // namespace forelem::datagen
