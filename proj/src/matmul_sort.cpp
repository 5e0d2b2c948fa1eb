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
#include <array>

#include "forelem/apps.hpp"

namespace forelem::apps {

using namespace ir::dsl;

SparseMatrix SparseMatrix::from_dense(std::size_t rows, std::size_t cols, const std::vector<double>& dense) {
  if (dense.size() != rows * cols) throw Error(ErrorCode::DimMismatch, "dense buffer does not hold rows*cols values");
  SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      if (double x = dense[i * cols + j]; x != 0.0) m.entries.emplace_back(i, j, x);
  return m;
}

std::vector<double> SparseMatrix::to_dense() const {
  std::vector<double> d(rows * cols, 0.0);
  for (const auto& [i, j, x] : entries) {
    if (i >= rows || j >= cols) throw Error(ErrorCode::DimMismatch, "matrix entry outside its shape");
    d[i * cols + j] += x;
  }
  return d;
}

namespace {

ir::SpaceDecl mat_decl(std::string name, std::size_t rows, std::size_t cols) {
  ir::SpaceDecl d;
  d.name = std::move(name);
  d.key_arity = 2;
  d.extents = {rows, cols};
  return d;
}

void check_conformable(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.cols != b.rows)
    throw Error(ErrorCode::DimMismatch, "cannot multiply " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                                            " by " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
}

}  // namespace

ir::Program build_matmul_spec(const SparseMatrix& a, const SparseMatrix& b) {
  check_conformable(a, b);
  const auto da = a.to_dense();
  const auto db = b.to_dense();
  std::vector<std::array<std::uint64_t, 3>> x;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      if (da[i * a.cols + k] == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j)
        if (db[k * b.cols + j] != 0.0) x.push_back({i, j, k});
    }
  std::sort(x.begin(), x.end());

  ir::TupleSchema schema(
      {{"i", ir::FieldType::index()}, {"j", ir::FieldType::index()}, {"k", ir::FieldType::index()}});
  ir::TupleReservoir r("X", schema);
  for (const auto& t : x) {
    const double w[3] = {static_cast<double>(t[0]), static_cast<double>(t[1]), static_cast<double>(t[2])};
    r.insert_packed(w);
  }
  ir::Program p;
  p.reservoirs["X"] = std::make_shared<const ir::TupleReservoir>(std::move(r));
  p.spaces["A"] = mat_decl("A", a.rows, a.cols);
  p.spaces["B"] = mat_decl("B", b.rows, b.cols);
  p.spaces["C"] = mat_decl("C", a.rows, b.cols);
  auto i = field("i"), j = field("j"), k = field("k");
  p.root = forelem("t", scan("X"), {add_to("C", {i, j}, read("A", {i, k}) * read("B", {k, j}))});
  return p;
}

ExecutionState init_matmul(const SparseMatrix& a, const SparseMatrix& b) {
  check_conformable(a, b);
  ExecutionState st;
  auto da = a.to_dense();
  auto db = b.to_dense();
  std::copy(da.begin(), da.end(), st.add(mat_decl("A", a.rows, a.cols)).dense_words());
  std::copy(db.begin(), db.end(), st.add(mat_decl("B", b.rows, b.cols)).dense_words());
  st.add(mat_decl("C", a.rows, b.cols));
  return st;
}

std::vector<double> extract_matmul(const ExecutionState& state) {
  const SharedSpace& c = state.space("C");
  return {c.dense_words(), c.dense_words() + c.dense_size()};
}

std::vector<double> oracle_dense_matmul(const SparseMatrix& a, const SparseMatrix& b) {
  check_conformable(a, b);
  const auto da = a.to_dense();
  const auto db = b.to_dense();
  std::vector<double> c(a.rows * b.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += da[i * a.cols + k] * db[k * b.cols + j];
      c[i * b.cols + j] = acc;
    }
  return c;
}

namespace {

ir::SpaceDecl array_decl(std::size_t n) {
  ir::SpaceDecl d;
  d.name = "A";
  d.extents = {n};
  return d;
}

}  // namespace

ir::Program build_sort_spec(const std::vector<double>& a, bool adjacent_only) {
  if (a.empty()) throw Error(ErrorCode::InvalidArgument, "cannot sort an empty array");
  ir::TupleSchema schema({{"i", ir::FieldType::index()}, {"j", ir::FieldType::index()}});
  ir::TupleReservoir r("R", schema);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < (adjacent_only ? std::min(i + 2, a.size()) : a.size()); ++j) {
      const double w[2] = {static_cast<double>(i), static_cast<double>(j)};
      r.insert_packed(w);
    }
  ir::Program p;
  p.reservoirs["R"] = std::make_shared<const ir::TupleReservoir>(std::move(r));
  p.spaces["A"] = array_decl(a.size());
  auto i = field("i"), j = field("j");
  p.root = whilelem("t", scan("R"),
                    {when(cmp(ir::CmpOp::Gt, read("A", {i}), read("A", {j})), {swap("A", {i}, {j})})});
  return p;
}

ExecutionState init_sort(const std::vector<double>& a) {
  if (a.empty()) throw Error(ErrorCode::InvalidArgument, "cannot sort an empty array");
  ExecutionState st;
  std::copy(a.begin(), a.end(), st.add(array_decl(a.size())).dense_words());
  return st;
}

std::vector<double> extract_sorted(const ExecutionState& state) {
  const SharedSpace& s = state.space("A");
  return {s.dense_words(), s.dense_words() + s.dense_size()};
}

}  // namespace forelem::apps
