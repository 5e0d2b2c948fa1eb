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

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "forelem/apps.hpp"

namespace forelem::apps {

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  return out;
}

bool skip(const std::string& line) {
  auto p = line.find_first_not_of(" \t\r");
  return p == std::string::npos || line[p] == '#';
}

[[noreturn]] void bad_line(const std::string& path, std::size_t lineno, const std::string& why) {
  throw Error(ErrorCode::IoError, path + ":" + std::to_string(lineno) + ": " + why);
}

}  // namespace

PointSet read_points(const std::string& path) {
  auto in = open_in(path);
  PointSet ps;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (skip(line)) continue;
    std::istringstream ss(line);
    std::size_t dim = 0;
    double x;
    while (ss >> x) {
      ps.coords.push_back(x);
      ++dim;
    }
    if (!ss.eof()) bad_line(path, lineno, "not a number");
    if (ps.n == 0) ps.dim = dim;
    else if (dim != ps.dim)
      bad_line(path, lineno, "expected " + std::to_string(ps.dim) + " coordinates, got " + std::to_string(dim));
    ++ps.n;
  }
  return ps;
}

void write_points(const std::string& path, const PointSet& points) {
  if (points.coords.size() != points.n * points.dim)
    throw Error(ErrorCode::InvalidArgument, "point buffer does not hold n*dim values");
  auto out = open_out(path);
  for (std::size_t i = 0; i < points.n; ++i) {
    for (std::size_t j = 0; j < points.dim; ++j) out << (j ? " " : "") << points.coords[i * points.dim + j];
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path);
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> read_edges(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> edges;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (skip(line)) continue;
    std::istringstream ss(line);
    long long u = -1, v = -1;
    std::string rest;
    if (!(ss >> u >> v) || u < 0 || v < 0 || (ss >> rest))
      bad_line(path, lineno, "expected two non-negative vertex ids");
    edges.emplace_back(static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(v));
  }
  return edges;
}

void write_edges(const std::string& path, const std::vector<std::pair<std::uint64_t, std::uint64_t>>& edges) {
  auto out = open_out(path);
  for (const auto& [u, v] : edges) out << u << ' ' << v << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path);
}

}  // namespace forelem::apps
