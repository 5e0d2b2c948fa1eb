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

#include "forelem/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

namespace forelem::driver {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

exec::PartitionedOptions partitioned(const xform::Variant& v, const Options& opt) {
  exec::PartitionedOptions po;
  po.scheme = opt.scheme.value_or(v.exchange);
  po.workers = opt.workers;
  po.sweeps_per_exchange = opt.sweeps_per_exchange;
  po.max_rounds = opt.max_rounds;
  po.sched = opt.sched;
  po.master_id = opt.master_id;
  return po;
}

xform::Variant with_layout(const xform::Variant& v, const Options& opt) {
  xform::Variant out = v;
  if (opt.layout) out.layout = *opt.layout;
  return out;
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

}  // namespace

KMeansRun run_kmeans(const apps::KMeansProblem& prob, const xform::Variant& v, const Options& opt) {
  auto parts = xform::compose(apps::build_kmeans_spec(prob), with_layout(v, opt), opt.partitions);
  auto po = partitioned(v, opt);
  if (prob.threshold > 0.0) {
    const double limit = prob.threshold * static_cast<double>(prob.n);
    po.early_stop = [limit](const exec::RoundInfo& ri, const ExecutionState&) {
      return static_cast<double>(ri.stats.state_changes) < limit;
    };
  }
  KMeansRun run;
  auto t0 = Clock::now();
  ExecutionState st = apps::init_kmeans(prob);
  run.stats = exec::run_partitioned(parts, st, po);
  run.calc_ms = ms_since(t0);
  run.stats.variant = v.name;
  run.result = apps::summarize_kmeans(prob, st);
  run.check = apps::check_statistics(prob, st);
  run.fixed_point = apps::is_lloyd_fixed_point(prob, run.result.assign);
  return run;
}

Verdict verify(const apps::KMeansProblem& prob, const KMeansRun& run) {
  Verdict out;
  out.residual = run.check.max_sum_rel_err;
  bool stats_ok = run.check.sizes_match && run.check.total_matches && run.check.max_sum_rel_err <= 1e-9;
  bool fp_ok = prob.threshold > 0.0 || run.fixed_point;
  bool term_ok = run.stats.status != exec::RunStatus::SweepBudgetExhausted;
  out.pass = stats_ok && fp_ok && term_ok;
  if (!run.check.sizes_match || !run.check.total_matches) out.detail = "cluster sizes disagree with recount";
  else if (!stats_ok) out.detail = "cluster sums off by " + fmt("%.3g", run.check.max_sum_rel_err);
  else if (!fp_ok) out.detail = "not a Lloyd fixed point";
  else if (!term_ok) out.detail = "did not terminate";
  return out;
}

PageRankRun run_pagerank(const apps::PageRankProblem& prob, const xform::Variant& v, const Options& opt) {
  bool reduced = !v.pipeline.empty() && v.pipeline.front().rfind("reduce", 0) == 0;
  // An arbitrary-element reduction has to be produced by the transformation.
  if (reduced && v.pipeline.front().find("arbitrary") != std::string::npos) reduced = false;
  ir::Program base = apps::build_pagerank_spec(prob, reduced);
  PageRankRun run;
  run.reservoir_size = base.reservoirs.at("E")->size();
  auto parts = xform::compose(base, with_layout(v, opt), opt.partitions);
  auto po = partitioned(v, opt);
  auto t0 = Clock::now();
  ExecutionState st = apps::init_pagerank(prob);
  run.stats = exec::run_partitioned(parts, st, po);
  run.calc_ms = ms_since(t0);
  run.stats.variant = v.name;
  run.pr = apps::extract_pagerank(st);
  return run;
}

Verdict verify(const apps::PageRankProblem& prob, const PageRankRun& run, double tol) {
  Verdict out;
  auto oracle = apps::oracle_power_iteration(prob);
  out.residual = apps::linf(run.pr, oracle);
  bool term_ok = run.stats.status != exec::RunStatus::SweepBudgetExhausted;
  out.pass = out.residual <= tol && term_ok;
  if (!term_ok) out.detail = "did not terminate";
  else if (!out.pass) out.detail = "L-inf distance to power iteration " + fmt("%.3g", out.residual);
  return out;
}

MatmulRun run_matmul(const apps::SparseMatrix& a, const apps::SparseMatrix& b, const xform::Variant& v,
                     const Options& opt) {
  auto parts = xform::compose(apps::build_matmul_spec(a, b), with_layout(v, opt), opt.partitions);
  auto po = partitioned(v, opt);
  MatmulRun run;
  auto t0 = Clock::now();
  ExecutionState st = apps::init_matmul(a, b);
  run.stats = exec::run_partitioned(parts, st, po);
  run.calc_ms = ms_since(t0);
  run.stats.variant = v.name;
  run.c = apps::extract_matmul(st);
  return run;
}

Verdict verify(const apps::SparseMatrix& a, const apps::SparseMatrix& b, const MatmulRun& run) {
  Verdict out;
  auto oracle = apps::oracle_dense_matmul(a, b);
  out.residual = apps::linf(run.c, oracle);
  out.pass = run.c == oracle;
  if (!out.pass) out.detail = "product differs from the dense oracle";
  return out;
}

SortRun run_sort(const std::vector<double>& a, bool adjacent_only, const Options& opt) {
  ir::Program p = apps::build_sort_spec(a, adjacent_only);
  const xform::Variant& v = xform::find_variant("Sort");
  auto parts = xform::compose(p, with_layout(v, opt), 1);
  auto po = partitioned(v, opt);
  SortRun run;
  auto t0 = Clock::now();
  ExecutionState st = apps::init_sort(a);
  run.stats = exec::run_partitioned(parts, st, po);
  run.calc_ms = ms_since(t0);
  run.stats.variant = v.name;
  run.sorted = apps::extract_sorted(st);
  return run;
}

Verdict verify(const std::vector<double>& input, const SortRun& run) {
  Verdict out;
  auto expect = input;
  std::sort(expect.begin(), expect.end());
  out.pass = run.sorted == expect && run.stats.status == exec::RunStatus::Terminated;
  std::size_t inversions = 0;
  for (std::size_t i = 1; i < run.sorted.size(); ++i) inversions += run.sorted[i - 1] > run.sorted[i];
  out.residual = static_cast<double>(inversions);
  if (!out.pass) out.detail = "array not sorted";
  return out;
}

}  // namespace forelem::driver
