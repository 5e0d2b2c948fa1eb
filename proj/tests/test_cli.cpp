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
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "forelem");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = forelem::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

fs::path tmp(const std::string& name) {
  auto dir = fs::temp_directory_path() / "forelem_cli_test";
  fs::create_directories(dir);
  auto p = dir / name;
  fs::remove(p);
  return p;
}

}  // namespace

TEST_CASE("list-variants prints built-ins and config variants") {
  auto r = invoke({"list-variants"});
  CHECK(r.code == 0);
  CHECK(lines(r.out) == 12);
  for (const char* v : {"Kmeans_1", "Kmeans_4", "PageRank_1", "PageRank_4", "Matmul_JDS", "Sort"})
    CHECK(r.out.find(v) != std::string::npos);

  auto empty = tmp("empty.json");
  std::ofstream(empty).close();
  auto e = invoke({"list-variants", "--config", empty.string()});
  CHECK(e.code == 0);
  CHECK(e.out == r.out);

  auto cfg = tmp("extra.json");
  std::ofstream(cfg) << R"js([{"name": "MyRank", "app": "pagerank", "pipeline": ["split(u)"]}])js";
  auto c = invoke({"list-variants", "--config", cfg.string()});
  CHECK(c.code == 0);
  CHECK(lines(c.out) == 13);
  CHECK(c.out.find("MyRank") != std::string::npos);

  auto bad = tmp("bad.json");
  std::ofstream(bad) << "[{";
  CHECK(invoke({"list-variants", "--config", bad.string()}).code == forelem::cli::kUsage);
}

TEST_CASE("generate writes seeded files") {
  auto p = tmp("pts.txt");
  auto r = invoke({"generate", "kmeans", "--n", "500", "--dim", "3", "--k", "4", "--seed", "1", "-o", p.string()});
  CHECK(r.code == 0);
  auto text = slurp(p);
  CHECK(lines(text) == 500);

  auto g1 = tmp("g1.txt"), g2 = tmp("g2.txt");
  CHECK(invoke({"generate", "graph", "--scale", "8", "--seed", "4", "--out", g1.string()}).code == 0);
  CHECK(invoke({"generate", "graph", "--scale", "8", "--seed", "4", "--out", g2.string()}).code == 0);
  CHECK(slurp(g1) == slurp(g2));
  CHECK(lines(slurp(g1)) > 0);

  auto z = tmp("zero.txt");
  auto zr = invoke({"generate", "kmeans", "--n", "0", "--out", z.string()});
  CHECK(zr.code == 0);
  CHECK(fs::exists(z));
  CHECK(fs::file_size(z) == 0);
  CHECK(zr.err.find("warning") != std::string::npos);
}

TEST_CASE("FORELEM_SEED is the default seed") {
  auto a = tmp("env.txt"), b = tmp("flag.txt");
  setenv("FORELEM_SEED", "5", 1);
  CHECK(invoke({"generate", "graph", "--scale", "7", "--out", a.string()}).code == 0);
  unsetenv("FORELEM_SEED");
  CHECK(invoke({"generate", "graph", "--scale", "7", "--seed", "5", "--out", b.string()}).code == 0);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("run exit codes") {
  auto ok = invoke({"run", "--app", "kmeans", "--gen-n", "400", "--k", "3", "-P", "2", "--verify"});
  CHECK(ok.code == forelem::cli::kOk);
  CHECK(ok.out.find(",pass,") != std::string::npos);

  auto loose = invoke({"run", "--app", "pagerank", "--gen-scale", "8", "--epsilon", "1e-2", "--verify"});
  CHECK(loose.code == forelem::cli::kVerifyFailed);
  CHECK(loose.out.find(",fail,") != std::string::npos);

  auto budget = invoke({"run", "--app", "sort", "--gen-size", "40", "--adjacent", "--max-sweeps", "2"});
  CHECK(budget.code == forelem::cli::kNonTermination);

  CHECK(invoke({"run", "--app", "kmeans", "--variant", "Nope"}).code == forelem::cli::kUsage);
  CHECK(invoke({"run", "--bogus"}).code == forelem::cli::kUsage);
  CHECK(invoke({"run", "--app", "pagerank", "--input", "/nonexistent/edges.txt"}).code == forelem::cli::kFailure);
}

TEST_CASE("CSV rows match the header and are appended") {
  auto csv = tmp("rows.csv");
  auto r = invoke({"run", "--app", "matmul", "--gen-size", "8", "--verify", "--csv", csv.string()});
  CHECK(r.code == 0);
  auto header = forelem::cli::csv_header();
  for (const char* col : {"app", "variant", "P", "W", "sweeps", "guards_fired", "state_changes", "calc_ms", "verify"})
    CHECK(header.find(col) != std::string::npos);
  CHECK(invoke({"run", "--app", "sort", "--gen-size", "10", "--csv", csv.string()}).code == 0);
  std::istringstream in(slurp(csv));
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == header);
  auto commas = std::count(header.begin(), header.end(), ',');
  CHECK(std::count(rows[1].begin(), rows[1].end(), ',') == commas);
  CHECK(rows[1].rfind("matmul,", 0) == 0);
  CHECK(rows[2].rfind("sort,", 0) == 0);
}

TEST_CASE("sweep runs the cartesian product") {
  auto r = invoke({"sweep", "--app", "kmeans", "--variants", "Kmeans_1,Kmeans_4", "--workers", "1,2", "--sizes",
                   "200,300", "--verify"});
  CHECK(r.code == 0);
  CHECK(lines(r.out) == 1 + 8);
}
