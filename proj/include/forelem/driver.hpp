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

// Build, transform, run and verify one application instance under a variant.
// Timings cover state initialization and execution only.

#pragma once

#include <optional>
#include <vector>

#include "forelem/apps.hpp"
#include "forelem/executor.hpp"
#include "forelem/transforms.hpp"

namespace forelem::driver {

struct Options {
  std::size_t partitions = 1;
  std::size_t workers = 1;
  std::size_t sweeps_per_exchange = 1;
  std::size_t max_rounds = 100000;
  /// Overrides the variant's exchange scheme / layout.
  std::optional<xchg::ExchangeScheme> scheme;
  std::optional<ir::Layout> layout;
  exec::Scheduler sched;
  std::size_t master_id = 0;
};

struct Verdict {
  bool pass = false;
  double residual = 0.0;  // app-specific distance to the oracle
  std::string detail;
};

struct KMeansRun {
  exec::RunStats stats;
  apps::KMeansResult result;
  apps::StatsCheck check;
  bool fixed_point = false;
  double calc_ms = 0.0;
};

KMeansRun run_kmeans(const apps::KMeansProblem& prob, const xform::Variant& v, const Options& opt);
/// Statistics must match the recount exactly (sizes) or within 1e-9
/// relative (sums); without an early-stop threshold the assignment must also
/// be a Lloyd fixed point.
Verdict verify(const apps::KMeansProblem& prob, const KMeansRun& run);

struct PageRankRun {
  exec::RunStats stats;
  std::vector<double> pr;
  std::size_t reservoir_size = 0;
  double calc_ms = 0.0;
};

/// Pipelines that start with a reduce step are built directly in reduced
/// form, so the dangling fan-out is never materialized.
PageRankRun run_pagerank(const apps::PageRankProblem& prob, const xform::Variant& v, const Options& opt);
/// L-infinity distance to power iteration at most `tol`.
Verdict verify(const apps::PageRankProblem& prob, const PageRankRun& run, double tol = 1e-6);

struct MatmulRun {
  exec::RunStats stats;
  std::vector<double> c;
  double calc_ms = 0.0;
};

MatmulRun run_matmul(const apps::SparseMatrix& a, const apps::SparseMatrix& b, const xform::Variant& v,
                     const Options& opt);
Verdict verify(const apps::SparseMatrix& a, const apps::SparseMatrix& b, const MatmulRun& run);

struct SortRun {
  exec::RunStats stats;
  std::vector<double> sorted;
  double calc_ms = 0.0;
};

SortRun run_sort(const std::vector<double>& a, bool adjacent_only, const Options& opt);
Verdict verify(const std::vector<double>& input, const SortRun& run);

}  // namespace forelem::driver
