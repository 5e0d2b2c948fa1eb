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

// The four example programs expressed in the IR, their initial states, and
// independent reference implementations used to check them.

#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "forelem/ir.hpp"
#include "forelem/space.hpp"

namespace forelem::apps {

// ---------------------------------------------------------------------------
// k-Means
//
// Spaces: M[x] (cluster of point x), COORDS[x] (point), M_SUM[m] (vector sum
// of member coordinates), M_SIZE[m] (member count). Cluster centers are
// M_SUM/M_SIZE. The reservoir T holds every pair <m,x>.

struct KMeansProblem {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::size_t k = 0;
  std::vector<double> points;  // n * dim, row-major
  std::uint64_t seed = 0;
  /// A point only moves when the new center is closer by more than this.
  double convergence_delta = 0.0;
  /// Early stop once a sweep moves fewer than threshold * n points (0 = off).
  double threshold = 0.0;

  /// Throws InvalidArgument unless n >= k >= 1, dim >= 1 and the point
  /// buffer has n * dim entries.
  void validate() const;
};

ir::Program build_kmeans_spec(const KMeansProblem& prob);

/// Seeded uniform assignment; empty clusters steal one point from the
/// largest cluster until every cluster has a member.
std::vector<std::uint64_t> initial_assignment(const KMeansProblem& prob);

/// State for build_kmeans_spec, starting from initial_assignment (or from
/// `assign` when given).
ExecutionState init_kmeans(const KMeansProblem& prob);
ExecutionState init_kmeans(const KMeansProblem& prob, const std::vector<std::uint64_t>& assign);

struct KMeansResult {
  std::vector<std::uint64_t> assign;
  std::vector<double> centers;  // k * dim, recomputed from assign
  std::vector<std::uint64_t> sizes;
  double wcss = 0.0;
};

/// Reads M from `state` and recomputes centers, sizes and WCSS.
KMeansResult summarize_kmeans(const KMeansProblem& prob, const ExecutionState& state);
KMeansResult summarize_assignment(const KMeansProblem& prob, const std::vector<std::uint64_t>& assign);

double wcss(const KMeansProblem& prob, const std::vector<std::uint64_t>& assign);

/// True when no point is closer to a non-empty foreign center by more than
/// `tol` than to its own center.
bool is_lloyd_fixed_point(const KMeansProblem& prob, const std::vector<std::uint64_t>& assign, double tol = 1e-9);

struct StatsCheck {
  bool sizes_match = false;      // M_SIZE[m] == recount, exactly
  bool total_matches = false;    // sum of M_SIZE == n
  double max_sum_abs_err = 0.0;  // |M_SUM[m][i] - recomputed|
  double max_sum_rel_err = 0.0;  // relative to max(1, |recomputed|)
};

StatsCheck check_statistics(const KMeansProblem& prob, const ExecutionState& state);

struct LloydResult {
  std::vector<std::uint64_t> assign;
  std::vector<double> centers;
  double wcss = 0.0;
  std::size_t iterations = 0;
};

/// Batch Lloyd iterations from `init` until no point is reassigned. Ties
/// keep the current cluster; clusters that would become empty keep their
/// previous center.
LloydResult oracle_lloyd(const KMeansProblem& prob, const std::vector<std::uint64_t>& init,
                         std::size_t max_iterations = 100000);

// ---------------------------------------------------------------------------
// PageRank
//
// Spaces: PR[v], OLD[u,v] (last pushed value of PR[u] along u->v) and
// INV_DOUT[u] = 1/Dout[u]. Dangling vertices link to every other vertex.

struct PageRankProblem {
  std::size_t vertices = 0;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> edges;
  double d = 0.85;
  double epsilon = 1e-10;
};

/// Ingested graph: duplicate edges merged, self-loops dropped.
struct Graph {
  std::size_t vertices = 0;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> edges;  // sorted
  std::vector<std::uint64_t> dangling;
  std::vector<double> dout;  // after dangling expansion

  /// |E| + D * (|V| - 1): tuple count of the expanded reservoir.
  std::size_t expanded_size() const;
};

/// Throws EmptyGraph for zero vertices, InvalidArgument for out-of-range
/// endpoints or a damping factor outside (0,1).
Graph ingest(const PageRankProblem& prob);

/// Reservoir E over the expanded edge set (or, with `reduced`, one stub
/// <u,$C> per dangling vertex expanded at run time).
ir::Program build_pagerank_spec(const PageRankProblem& prob, bool reduced = false);

ExecutionState init_pagerank(const PageRankProblem& prob);

std::vector<double> extract_pagerank(const ExecutionState& state);

/// Jacobi iteration of the PageRank equation until the L-infinity change
/// drops below `tol`. Throws NoConvergence after `max_iterations`.
std::vector<double> oracle_power_iteration(const PageRankProblem& prob, double tol = 1e-12,
                                           std::size_t max_iterations = 100000);

/// max_v |PR[v] - ((1-d)/|V| + d * sum_{u->v} PR[u]/Dout[u])|
double pagerank_residual(const PageRankProblem& prob, const std::vector<double>& pr);

double linf(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------
// Sparse matrix multiplication and sorting

struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::tuple<std::uint64_t, std::uint64_t, double>> entries;

  static SparseMatrix from_dense(std::size_t rows, std::size_t cols, const std::vector<double>& dense);
  std::vector<double> to_dense() const;
};

/// forelem over X = {<i,j,k> : A[i,k] != 0 and B[k,j] != 0} of
/// C[i,j] += A[i,k] * B[k,j]. Throws DimMismatch for non-conformable inputs.
ir::Program build_matmul_spec(const SparseMatrix& a, const SparseMatrix& b);
ExecutionState init_matmul(const SparseMatrix& a, const SparseMatrix& b);
/// Dense rows*cols contents of C.
std::vector<double> extract_matmul(const ExecutionState& state);
std::vector<double> oracle_dense_matmul(const SparseMatrix& a, const SparseMatrix& b);

/// whilelem over <i,i+1> (adjacent_only) or all <i,j> with i<j of
/// if (A[i] > A[j]) swap. Throws InvalidArgument for an empty array.
ir::Program build_sort_spec(const std::vector<double>& a, bool adjacent_only);
ExecutionState init_sort(const std::vector<double>& a);
std::vector<double> extract_sorted(const ExecutionState& state);

// ---------------------------------------------------------------------------
// ASCII input/output. Lines starting with '#' are ignored.

struct PointSet {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> coords;
};

/// One point per line, coordinates separated by whitespace.
PointSet read_points(const std::string& path);
void write_points(const std::string& path, const PointSet& points);

/// One "u v" pair per line, 0-based.
std::vector<std::pair<std::uint64_t, std::uint64_t>> read_edges(const std::string& path);
void write_edges(const std::string& path, const std::vector<std::pair<std::uint64_t, std::uint64_t>>& edges);

}  // namespace forelem::apps
