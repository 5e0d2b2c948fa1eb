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

// Seeded synthetic inputs: Gaussian point clusters and R-MAT graphs.

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "forelem/apps.hpp"

namespace forelem::datagen {

struct ClusterGenConfig {
  std::size_t n = 0;
  std::size_t dim = 2;
  std::size_t clusters = 4;
  /// Centers are drawn uniformly from [0, extent]^dim.
  double extent = 10.0;
  std::uint64_t seed = 0;
};

struct ClusteredPoints {
  apps::PointSet points;
  std::vector<std::uint64_t> truth;  // generating cluster of each point
  std::vector<double> centers;       // clusters * dim
};

/// Each point picks a cluster uniformly and adds N(0, sigma^2) noise per
/// coordinate, where sigma is drawn per cluster from
/// [extent/16, extent/8]. Throws InvalidArgument for clusters == 0 or dim == 0.
ClusteredPoints gen_clustered_points(const ClusterGenConfig& cfg);

struct GraphGenConfig {
  unsigned scale = 10;  // |V| = 2^scale
  std::size_t edge_factor = 16;
  double a = 0.57, b = 0.19, c = 0.19, d = 0.05;
  std::uint64_t seed = 0;
};

struct GeneratedGraph {
  std::size_t vertices = 0;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> edges;
};

/// R-MAT: edge_factor * 2^scale draws, each descending `scale` quadrant
/// choices with probabilities a, b, c, d. Self-loops are discarded and
/// duplicates kept. Throws InvalidArgument unless the probabilities are
/// non-negative and sum to 1 (within 1e-9) and 1 <= scale <= 30.
GeneratedGraph gen_graph(const GraphGenConfig& cfg);

/// Each entry is nonzero with probability `density`, drawn uniformly from the
/// integers in [-max_abs, max_abs] \ {0}.
apps::SparseMatrix gen_sparse_matrix(std::size_t rows, std::size_t cols, double density, int max_abs,
                                     std::uint64_t seed);

/// `n` integers drawn uniformly from [-max_abs, max_abs].
std::vector<double> gen_array(std::size_t n, int max_abs, std::uint64_t seed);

}  // namespace forelem::datagen
