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
#include <random>

#include "forelem/apps.hpp"

namespace forelem::apps {

using namespace ir::dsl;

void KMeansProblem::validate() const {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "dim must be >= 1");
  if (n < k) throw Error(ErrorCode::InvalidArgument, "need at least k points (n=" + std::to_string(n) + ", k=" +
                                                         std::to_string(k) + ")");
  if (points.size() != n * dim) throw Error(ErrorCode::InvalidArgument, "point buffer does not hold n*dim values");
}

namespace {

ir::SpaceDecl decl(std::string name, std::size_t extent, ValueKind kind, std::size_t dim, bool counter = false) {
  ir::SpaceDecl d;
  d.name = std::move(name);
  d.key_arity = 1;
  d.kind = kind;
  d.dim = dim;
  d.default_value = Value::zeros(kind, dim);
  d.extents = {extent};
  d.counter = counter;
  return d;
}

double sqdist(const double* a, const double* b, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    double t = a[i] - b[i];
    acc += t * t;
  }
  return acc;
}

// Centers as sum/size; empty clusters get no center (size 0).
void centers_of(const KMeansProblem& p, const std::vector<std::uint64_t>& assign, std::vector<double>& centers,
                std::vector<std::uint64_t>& sizes) {
  centers.assign(p.k * p.dim, 0.0);
  sizes.assign(p.k, 0);
  for (std::size_t x = 0; x < p.n; ++x) {
    std::uint64_t m = assign[x];
    ++sizes[m];
    for (std::size_t i = 0; i < p.dim; ++i) centers[m * p.dim + i] += p.points[x * p.dim + i];
  }
  for (std::size_t m = 0; m < p.k; ++m)
    if (sizes[m])
      for (std::size_t i = 0; i < p.dim; ++i) centers[m * p.dim + i] /= static_cast<double>(sizes[m]);
}

}  // namespace

ir::Program build_kmeans_spec(const KMeansProblem& prob) {
  prob.validate();
  ir::TupleSchema schema({{"m", ir::FieldType::index()}, {"x", ir::FieldType::index()}});
  ir::TupleReservoir t("T", schema);
  for (std::size_t m = 0; m < prob.k; ++m)
    for (std::size_t x = 0; x < prob.n; ++x) {
      const double w[2] = {static_cast<double>(m), static_cast<double>(x)};
      t.insert_packed(w);
    }

  ir::Program p;
  p.reservoirs["T"] = std::make_shared<const ir::TupleReservoir>(std::move(t));
  for (auto d : {decl("M", prob.n, ValueKind::Scalar, 1), decl("COORDS", prob.n, ValueKind::Vector, prob.dim),
                 decl("M_SUM", prob.k, ValueKind::Vector, prob.dim),
                 decl("M_SIZE", prob.k, ValueKind::Scalar, 1, true)})
    p.spaces[d.name] = d;

  auto m = field("m");
  auto x = field("x");
  auto mx = read("M", {x});
  auto coords = read("COORDS", {x});
  auto new_dist = dist(coords, read("M_SUM", {m}) / read("M_SIZE", {m}));
  if (prob.convergence_delta > 0.0) new_dist = new_dist + cnst(prob.convergence_delta);
  auto old_dist = dist(coords, read("M_SUM", {mx}) / read("M_SIZE", {mx}));
  auto guard = land(cmp(ir::CmpOp::Ne, mx, m),
                    land(cmp(ir::CmpOp::Gt, read("M_SIZE", {m}), cnst(0.0)),
                         land(cmp(ir::CmpOp::Gt, read("M_SIZE", {mx}), cnst(1.0)),
                              cmp(ir::CmpOp::Lt, new_dist, old_dist))));
  p.root = whilelem("t", scan("T"),
                    {when(guard, {sub_from("M_SUM", {mx}, coords), sub_from("M_SIZE", {mx}, cnst(1.0)),
                                  add_to("M_SUM", {m}, coords), add_to("M_SIZE", {m}, cnst(1.0)),
                                  assign("M", {x}, m)})});
  p.assertions.push_back({ir::Assertion::Kind::Count, "M_SIZE", "M", ""});
  p.assertions.push_back({ir::Assertion::Kind::Sum, "M_SUM", "M", "COORDS"});
  p.params["N"] = prob.n;
  p.params["K"] = prob.k;
  return p;
}

std::vector<std::uint64_t> initial_assignment(const KMeansProblem& prob) {
  prob.validate();
  std::mt19937_64 rng(prob.seed);
  std::uniform_int_distribution<std::uint64_t> pick(0, prob.k - 1);
  std::vector<std::uint64_t> assign(prob.n);
  std::vector<std::size_t> sizes(prob.k, 0);
  for (auto& a : assign) ++sizes[a = pick(rng)];
  for (std::size_t m = 0; m < prob.k; ++m) {
    if (sizes[m]) continue;
    auto largest = static_cast<std::uint64_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    // Steal the highest-numbered member of the largest cluster.
    for (std::size_t x = prob.n; x-- > 0;) {
      if (assign[x] == largest) {
        assign[x] = m;
        --sizes[largest];
        ++sizes[m];
        break;
      }
    }
  }
  return assign;
}

ExecutionState init_kmeans(const KMeansProblem& prob) { return init_kmeans(prob, initial_assignment(prob)); }

ExecutionState init_kmeans(const KMeansProblem& prob, const std::vector<std::uint64_t>& assign) {
  prob.validate();
  if (assign.size() != prob.n) throw Error(ErrorCode::InvalidArgument, "assignment size differs from n");
  ExecutionState st;
  SharedSpace& M = st.add(decl("M", prob.n, ValueKind::Scalar, 1));
  SharedSpace& C = st.add(decl("COORDS", prob.n, ValueKind::Vector, prob.dim));
  SharedSpace& S = st.add(decl("M_SUM", prob.k, ValueKind::Vector, prob.dim));
  SharedSpace& Z = st.add(decl("M_SIZE", prob.k, ValueKind::Scalar, 1, true));
  st.rng_seed = prob.seed;
  std::copy(prob.points.begin(), prob.points.end(), C.dense_words());
  for (std::size_t x = 0; x < prob.n; ++x) {
    std::uint64_t m = assign[x];
    if (m >= prob.k) throw Error(ErrorCode::InvalidArgument, "assignment out of range");
    M.dense_words()[x] = static_cast<double>(m);
    Z.dense_words()[m] += 1.0;
    for (std::size_t i = 0; i < prob.dim; ++i) S.dense_words()[m * prob.dim + i] += prob.points[x * prob.dim + i];
  }
  return st;
}

KMeansResult summarize_assignment(const KMeansProblem& prob, const std::vector<std::uint64_t>& assign) {
  KMeansResult r;
  r.assign = assign;
  centers_of(prob, assign, r.centers, r.sizes);
  r.wcss = wcss(prob, assign);
  return r;
}

KMeansResult summarize_kmeans(const KMeansProblem& prob, const ExecutionState& state) {
  const SharedSpace& M = state.space("M");
  std::vector<std::uint64_t> assign(prob.n);
  for (std::size_t x = 0; x < prob.n; ++x) assign[x] = static_cast<std::uint64_t>(M.read(Key{x}).as_scalar());
  return summarize_assignment(prob, assign);
}

double wcss(const KMeansProblem& prob, const std::vector<std::uint64_t>& assign) {
  std::vector<double> centers;
  std::vector<std::uint64_t> sizes;
  centers_of(prob, assign, centers, sizes);
  double acc = 0.0;
  for (std::size_t x = 0; x < prob.n; ++x)
    acc += sqdist(&prob.points[x * prob.dim], &centers[assign[x] * prob.dim], prob.dim);
  return acc;
}

bool is_lloyd_fixed_point(const KMeansProblem& prob, const std::vector<std::uint64_t>& assign, double tol) {
  std::vector<double> centers;
  std::vector<std::uint64_t> sizes;
  centers_of(prob, assign, centers, sizes);
  for (std::size_t x = 0; x < prob.n; ++x) {
    const double* p = &prob.points[x * prob.dim];
    double own = std::sqrt(sqdist(p, &centers[assign[x] * prob.dim], prob.dim));
    for (std::size_t m = 0; m < prob.k; ++m) {
      if (m == assign[x] || sizes[m] == 0) continue;
      if (std::sqrt(sqdist(p, &centers[m * prob.dim], prob.dim)) < own - tol) return false;
    }
  }
  return true;
}

StatsCheck check_statistics(const KMeansProblem& prob, const ExecutionState& state) {
  const SharedSpace& M = state.space("M");
  const SharedSpace& S = state.space("M_SUM");
  const SharedSpace& Z = state.space("M_SIZE");
  std::vector<double> sums(prob.k * prob.dim, 0.0);
  std::vector<std::uint64_t> sizes(prob.k, 0);
  for (std::size_t x = 0; x < prob.n; ++x) {
    auto m = static_cast<std::uint64_t>(M.read(Key{x}).as_scalar());
    if (m >= prob.k) return {};
    ++sizes[m];
    for (std::size_t i = 0; i < prob.dim; ++i) sums[m * prob.dim + i] += prob.points[x * prob.dim + i];
  }
  StatsCheck c;
  c.sizes_match = true;
  double total = 0.0;
  for (std::size_t m = 0; m < prob.k; ++m) {
    double z = Z.read(Key{m}).as_scalar();
    total += z;
    if (z != static_cast<double>(sizes[m])) c.sizes_match = false;
    Value s = S.read(Key{m});
    auto sv = s.as_vector();
    for (std::size_t i = 0; i < prob.dim; ++i) {
      double ref = sums[m * prob.dim + i];
      double err = std::fabs(sv[i] - ref);
      c.max_sum_abs_err = std::max(c.max_sum_abs_err, err);
      c.max_sum_rel_err = std::max(c.max_sum_rel_err, err / std::max(1.0, std::fabs(ref)));
    }
  }
  c.total_matches = total == static_cast<double>(prob.n);
  return c;
}

LloydResult oracle_lloyd(const KMeansProblem& prob, const std::vector<std::uint64_t>& init,
                         std::size_t max_iterations) {
  prob.validate();
  LloydResult r;
  r.assign = init;
  std::vector<double> centers;
  std::vector<std::uint64_t> sizes;
  centers_of(prob, r.assign, centers, sizes);
  std::vector<double> prev = centers;
  for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
    bool moved = false;
    for (std::size_t x = 0; x < prob.n; ++x) {
      const double* p = &prob.points[x * prob.dim];
      std::uint64_t best = r.assign[x];
      double bd = sqdist(p, &centers[best * prob.dim], prob.dim);
      for (std::size_t m = 0; m < prob.k; ++m) {
        double dm = sqdist(p, &centers[m * prob.dim], prob.dim);
        if (dm < bd) {
          bd = dm;
          best = m;
        }
      }
      if (best != r.assign[x]) {
        r.assign[x] = best;
        moved = true;
      }
    }
    if (!moved) break;
    prev = centers;
    centers_of(prob, r.assign, centers, sizes);
    for (std::size_t m = 0; m < prob.k; ++m)
      if (!sizes[m]) std::copy(&prev[m * prob.dim], &prev[m * prob.dim] + prob.dim, &centers[m * prob.dim]);
  }
  r.centers = centers;
  r.wcss = wcss(prob, r.assign);
  return r;
}

}  // namespace forelem::apps
