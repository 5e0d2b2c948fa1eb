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

#include <algorithm>
#include <cmath>

#include "forelem/apps.hpp"

namespace forelem::apps {

using namespace ir::dsl;

std::size_t Graph::expanded_size() const {
  return edges.size() + dangling.size() * (vertices > 0 ? vertices - 1 : 0);
}

Graph ingest(const PageRankProblem& prob) {
  if (prob.vertices == 0) throw Error(ErrorCode::EmptyGraph, "graph has no vertices");
  if (!(prob.d > 0.0 && prob.d < 1.0)) throw Error(ErrorCode::InvalidArgument, "damping factor must lie in (0,1)");
  Graph g;
  g.vertices = prob.vertices;
  g.edges.reserve(prob.edges.size());
  for (const auto& [u, v] : prob.edges) {
    if (u >= prob.vertices || v >= prob.vertices)
      throw Error(ErrorCode::InvalidArgument,
                  "edge " + std::to_string(u) + "->" + std::to_string(v) + " outside vertex range");
    if (u != v) g.edges.emplace_back(u, v);
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  std::vector<std::size_t> out(prob.vertices, 0);
  for (const auto& e : g.edges) ++out[e.first];
  g.dout.resize(prob.vertices);
  for (std::size_t u = 0; u < prob.vertices; ++u) {
    if (out[u] == 0) g.dangling.push_back(u);
    g.dout[u] = static_cast<double>(out[u] ? out[u] : prob.vertices - 1);
  }
  return g;
}

namespace {

ir::SpaceDecl pr_decl(std::string name, std::size_t v) {
  ir::SpaceDecl d;
  d.name = std::move(name);
  d.extents = {v};
  return d;
}

ir::SpaceDecl old_decl() {
  ir::SpaceDecl d;
  d.name = "OLD";
  d.key_arity = 2;
  return d;
}

}  // namespace

ir::Program build_pagerank_spec(const PageRankProblem& prob, bool reduced) {
  Graph g = ingest(prob);
  ir::TupleSchema schema({{"u", ir::FieldType::index()}, {"v", ir::FieldType::index()}});
  ir::TupleReservoir e("E", schema);
  auto put = [&](std::uint64_t u, std::uint64_t v) {
    const double w[2] = {static_cast<double>(u), static_cast<double>(v)};
    e.insert_packed(w);
  };
  for (const auto& [u, v] : g.edges) put(u, v);
  for (auto u : g.dangling) {
    if (reduced) {
      put(u, kStubTarget);
      continue;
    }
    for (std::uint64_t w = 0; w < g.vertices; ++w)
      if (w != u) put(u, w);
  }

  ir::Program p;
  p.reservoirs["E"] = std::make_shared<const ir::TupleReservoir>(std::move(e));
  p.spaces["PR"] = pr_decl("PR", g.vertices);
  p.spaces["OLD"] = old_decl();
  p.spaces["INV_DOUT"] = pr_decl("INV_DOUT", g.vertices);
  p.epsilon = prob.epsilon;
  p.params["V"] = g.vertices;

  auto u = field("u");
  auto v = field("v");
  auto pr_u = read("PR", {u});
  auto old = read("OLD", {u, v});
  auto delta = cnst(prob.d) * (pr_u - old) * read("INV_DOUT", {u});
  auto remember = assign("OLD", {u, v}, pr_u);
  if (!reduced) {
    p.root = whilelem("t", scan("E"), {when(abs_gt_eps(pr_u, old), {add_to("PR", {v}, delta), remember})});
    return p;
  }
  ir::Domain all;
  all.node = ir::Enumerate{var("V"), u};
  auto fan_out = forelem("z", all, {add_to("PR", {var("z")}, delta)});
  auto push = when(cmp(ir::CmpOp::Eq, v, cnst(static_cast<double>(kStubTarget))), {nested(fan_out)},
                   {add_to("PR", {v}, delta)});
  p.root = whilelem("t", scan("E"), {when(abs_gt_eps(pr_u, old), {push, remember})});
  p.history.push_back("reduce(dangling)");
  return p;
}

ExecutionState init_pagerank(const PageRankProblem& prob) {
  Graph g = ingest(prob);
  ExecutionState st;
  SharedSpace& pr = st.add(pr_decl("PR", g.vertices));
  st.add(old_decl());
  SharedSpace& inv = st.add(pr_decl("INV_DOUT", g.vertices));
  const double base = (1.0 - prob.d) / static_cast<double>(g.vertices);
  for (std::size_t v = 0; v < g.vertices; ++v) {
    pr.dense_words()[v] = base;
    inv.dense_words()[v] = g.dout[v] > 0 ? 1.0 / g.dout[v] : 0.0;
  }
  return st;
}

std::vector<double> extract_pagerank(const ExecutionState& state) {
  const SharedSpace& pr = state.space("PR");
  std::vector<double> out(pr.dense_size());
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = pr.dense_words()[v] + pr.offset();
  return out;
}

namespace {

// One application of the PageRank operator to `x`.
void apply(const Graph& g, double d, const std::vector<double>& x, std::vector<double>& y) {
  const std::size_t n = g.vertices;
  const double base = (1.0 - d) / static_cast<double>(n);
  double dangling_sum = 0.0;
  if (n > 1)
    for (auto u : g.dangling) dangling_sum += x[u] / static_cast<double>(n - 1);
  std::fill(y.begin(), y.end(), 0.0);
  for (const auto& [u, v] : g.edges) y[v] += x[u] / g.dout[u];
  std::vector<bool> is_dangling(n, false);
  for (auto u : g.dangling) is_dangling[u] = true;
  for (std::size_t v = 0; v < n; ++v) {
    double in = y[v] + dangling_sum;
    if (n > 1 && is_dangling[v]) in -= x[v] / static_cast<double>(n - 1);
    y[v] = base + d * in;
  }
}

}  // namespace

std::vector<double> oracle_power_iteration(const PageRankProblem& prob, double tol, std::size_t max_iterations) {
  Graph g = ingest(prob);
  std::vector<double> x(g.vertices, (1.0 - prob.d) / static_cast<double>(g.vertices));
  std::vector<double> y(g.vertices);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    apply(g, prob.d, x, y);
    double change = linf(x, y);
    x.swap(y);
    if (change < tol) return x;
  }
  throw Error(ErrorCode::NoConvergence,
              "power iteration did not converge in " + std::to_string(max_iterations) + " iterations");
}

double pagerank_residual(const PageRankProblem& prob, const std::vector<double>& pr) {
  Graph g = ingest(prob);
  if (pr.size() != g.vertices) throw Error(ErrorCode::DimMismatch, "rank vector size differs from |V|");
  std::vector<double> y(g.vertices);
  apply(g, prob.d, pr, y);
  return linf(pr, y);
}

double linf(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimMismatch, "vector sizes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace forelem::apps
