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

#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>

#include "forelem/datagen.hpp"
#include "forelem/driver.hpp"

namespace forelem::cli {

namespace {

const char* default_variant(const std::string& app) {
  if (app == "kmeans") return "Kmeans_4";
  if (app == "pagerank") return "PageRank_2";
  if (app == "matmul") return "Matmul_JDS";
  return "Sort";
}

exec::Scheduler parse_scheduler(const std::string& s, std::uint64_t seed) {
  if (s == "in-order") return exec::Scheduler::in_order();
  if (s == "shuffled") return exec::Scheduler::shuffled(seed);
  if (s == "random") return exec::Scheduler::random(seed);
  throw Error(ErrorCode::InvalidArgument, "unknown scheduler '" + s + "'");
}

driver::Options options(const RunConfig& cfg) {
  if (cfg.partitions == 0 || cfg.workers == 0 || cfg.sweeps_per_exchange == 0)
    throw Error(ErrorCode::InvalidArgument, "partitions, workers and sweeps-per-exchange must be >= 1");
  driver::Options o;
  o.partitions = cfg.partitions;
  o.workers = cfg.workers;
  o.sweeps_per_exchange = cfg.sweeps_per_exchange;
  o.max_rounds = std::max<std::size_t>(1, cfg.max_sweeps / cfg.sweeps_per_exchange);
  if (!cfg.exchange.empty()) o.scheme = xchg::parse_scheme(cfg.exchange);
  if (!cfg.layout.empty()) o.layout = ir::parse_layout(cfg.layout);
  o.sched = parse_scheduler(cfg.scheduler, cfg.seed);
  return o;
}

void fill(Row& row, const exec::RunStats& s, double calc_ms) {
  row.sweeps = s.sweeps;
  row.guards_fired = s.guards_fired;
  row.state_changes = s.state_changes;
  row.calc_ms = calc_ms;
  row.rounds = s.rounds;
  row.status = exec::to_string(s.status);
  row.deltas_sent = s.exchange.deltas_sent;
  row.bytes = s.exchange.bytes;
  if (s.status == exec::RunStatus::SweepBudgetExhausted) row.exit_code = kNonTermination;
}

void judge(Row& row, const driver::Verdict& v) {
  row.verify = v.pass ? "pass" : "fail";
  row.residual = v.residual;
  if (!v.pass) {
    row.error = v.detail;
    if (row.exit_code == kOk) row.exit_code = kVerifyFailed;
  }
}

apps::KMeansProblem kmeans_problem(const RunConfig& cfg) {
  apps::KMeansProblem prob;
  apps::PointSet pts;
  if (!cfg.input.empty()) {
    pts = apps::read_points(cfg.input);
  } else {
    datagen::ClusterGenConfig g;
    g.n = cfg.gen_n;
    g.dim = cfg.gen_dim;
    g.clusters = cfg.gen_clusters ? cfg.gen_clusters : cfg.k;
    g.seed = cfg.seed;
    pts = datagen::gen_clustered_points(g).points;
  }
  prob.n = pts.n;
  prob.dim = pts.dim;
  prob.k = cfg.k;
  prob.points = std::move(pts.coords);
  prob.seed = cfg.seed;
  prob.convergence_delta = cfg.delta;
  prob.threshold = cfg.threshold;
  prob.validate();
  return prob;
}

apps::PageRankProblem pagerank_problem(const RunConfig& cfg) {
  apps::PageRankProblem prob;
  if (!cfg.input.empty()) {
    prob.edges = apps::read_edges(cfg.input);
    std::size_t v = 0;
    for (const auto& [a, b] : prob.edges) v = std::max<std::size_t>(v, std::max(a, b) + 1);
    prob.vertices = cfg.vertices ? cfg.vertices : v;
  } else {
    datagen::GraphGenConfig g;
    g.scale = cfg.gen_scale;
    g.edge_factor = cfg.gen_edge_factor;
    g.seed = cfg.seed;
    auto graph = datagen::gen_graph(g);
    prob.vertices = graph.vertices;
    prob.edges = std::move(graph.edges);
  }
  prob.d = cfg.damping;
  prob.epsilon = cfg.epsilon;
  return prob;
}

std::vector<double> sort_input(const RunConfig& cfg) {
  if (cfg.input.empty()) return datagen::gen_array(cfg.gen_size, 1000, cfg.seed);
  auto pts = apps::read_points(cfg.input);
  if (pts.n > 0 && pts.dim != 1) throw Error(ErrorCode::InvalidArgument, "sort input needs one value per line");
  return pts.coords;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::UnknownVariant:
    case ErrorCode::InvalidArgument:
      return kUsage;
    default:
      return kFailure;
  }
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + '"';
}

void emit(const std::vector<Row>& rows, const std::string& csv_path, std::ostream& out) {
  out << csv_header() << '\n';
  for (const auto& r : rows) out << to_csv(r) << '\n';
  if (csv_path.empty()) return;
  bool fresh = !std::filesystem::exists(csv_path) || std::filesystem::file_size(csv_path) == 0;
  std::ofstream f(csv_path, std::ios::app);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + csv_path);
  if (fresh) f << csv_header() << '\n';
  for (const auto& r : rows) f << to_csv(r) << '\n';
}

std::vector<xform::Variant> load_config(const std::string& path) {
  return path.empty() ? std::vector<xform::Variant>{} : xform::load_variants(path);
}

void add_run_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--app", cfg.app, "kmeans, pagerank, matmul or sort")
      ->check(CLI::IsMember({"kmeans", "pagerank", "matmul", "sort"}));
  cmd->add_option("--input", cfg.input, "point file (kmeans, sort) or edge file (pagerank)");
  cmd->add_option("--config", cfg.config, "JSON file with extra variants");
  cmd->add_option("--gen-n", cfg.gen_n, "generated point count");
  cmd->add_option("--gen-dim", cfg.gen_dim, "generated point dimension");
  cmd->add_option("--gen-clusters", cfg.gen_clusters, "generated cluster count (default: k)");
  cmd->add_option("--gen-scale", cfg.gen_scale, "generated graph scale (|V| = 2^scale)");
  cmd->add_option("--gen-edge-factor", cfg.gen_edge_factor, "generated edges per vertex");
  cmd->add_option("--gen-size", cfg.gen_size, "matrix size (matmul) or array length (sort)");
  cmd->add_option("--gen-density", cfg.gen_density, "matrix density (matmul)");
  cmd->add_option("--k", cfg.k, "cluster count");
  cmd->add_option("--vertices", cfg.vertices, "vertex count for edge-file input");
  cmd->add_option("--damping", cfg.damping, "PageRank damping factor");
  cmd->add_flag("--adjacent", cfg.adjacent, "sort with adjacent pairs only");
  cmd->add_option("--partitions,-P", cfg.partitions, "partition count");
  cmd->add_option("--workers,-W", cfg.workers, "worker threads");
  cmd->add_option("--sweeps-per-exchange", cfg.sweeps_per_exchange, "local sweeps between exchanges");
  cmd->add_option("--max-sweeps", cfg.max_sweeps, "sweep budget");
  cmd->add_option("--epsilon", cfg.epsilon, "PageRank guard epsilon");
  cmd->add_option("--delta", cfg.delta, "k-Means convergence delta");
  cmd->add_option("--threshold", cfg.threshold, "k-Means early-stop fraction of moved points");
  cmd->add_option("--seed", cfg.seed, "random seed (default: $FORELEM_SEED or 0)");
  cmd->add_option("--exchange", cfg.exchange, "override the exchange scheme")
      ->check(CLI::IsMember({"buffered", "master", "indirect"}));
  cmd->add_option("--layout", cfg.layout, "override the layout (AoS, SoA, JaggedDiagonal)");
  cmd->add_option("--scheduler", cfg.scheduler, "in-order, shuffled or random")
      ->check(CLI::IsMember({"in-order", "shuffled", "random"}));
  cmd->add_flag("--verify", cfg.verify, "check the result against an independent oracle");
}

int worst(const std::vector<Row>& rows) {
  int code = kOk;
  for (const auto& r : rows) {
    if (r.exit_code == kOk) continue;
    if (code == kOk || r.exit_code == kNonTermination) code = r.exit_code;
  }
  return code;
}

}  // namespace

std::string csv_header() {
  return "app,variant,P,W,sweeps,guards_fired,state_changes,calc_ms,verify,residual,"
         "rounds,status,n,dim,k,deltas_sent,bytes,error";
}

std::string to_csv(const Row& r) {
  std::ostringstream os;
  os.precision(6);
  os << r.app << ',' << r.variant << ',' << r.partitions << ',' << r.workers << ',' << r.sweeps << ','
     << r.guards_fired << ',' << r.state_changes << ',' << std::fixed << r.calc_ms << ',' << r.verify << ','
     << std::scientific << std::setprecision(3) << r.residual << ',' << r.rounds << ',' << r.status << ','
     << r.n << ',' << r.dim << ',' << r.k << ',' << r.deltas_sent << ',' << r.bytes << ',' << csv_escape(r.error);
  return os.str();
}

std::uint64_t env_seed(std::uint64_t fallback) {
  const char* s = std::getenv("FORELEM_SEED");
  if (!s) return fallback;
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s, s + std::char_traits<char>::length(s), v);
  if (ec != std::errc() || *end != '\0') return fallback;
  return v;
}

Row run_one(const RunConfig& cfg, const std::vector<xform::Variant>& extra) {
  Row row;
  row.app = cfg.app;
  row.variant = cfg.variant.empty() ? default_variant(cfg.app) : cfg.variant;
  row.partitions = cfg.partitions;
  row.workers = cfg.workers;
  try {
    const xform::Variant& v = xform::find_variant(row.variant, extra);
    if (!v.app.empty() && v.app != cfg.app)
      throw Error(ErrorCode::InvalidArgument, "variant " + v.name + " belongs to app " + v.app);
    driver::Options opt = options(cfg);
    if (cfg.app == "kmeans") {
      auto prob = kmeans_problem(cfg);
      row.n = prob.n;
      row.dim = prob.dim;
      row.k = prob.k;
      auto run = driver::run_kmeans(prob, v, opt);
      fill(row, run.stats, run.calc_ms);
      if (cfg.verify) judge(row, driver::verify(prob, run));
    } else if (cfg.app == "pagerank") {
      auto prob = pagerank_problem(cfg);
      row.n = prob.vertices;
      auto run = driver::run_pagerank(prob, v, opt);
      fill(row, run.stats, run.calc_ms);
      if (cfg.verify) judge(row, driver::verify(prob, run));
    } else if (cfg.app == "matmul") {
      if (!cfg.input.empty()) throw Error(ErrorCode::InvalidArgument, "matmul takes generated input only");
      auto a = datagen::gen_sparse_matrix(cfg.gen_size, cfg.gen_size, cfg.gen_density, 9, cfg.seed);
      auto b = datagen::gen_sparse_matrix(cfg.gen_size, cfg.gen_size, cfg.gen_density, 9, cfg.seed + 1);
      row.n = cfg.gen_size;
      auto run = driver::run_matmul(a, b, v, opt);
      fill(row, run.stats, run.calc_ms);
      if (cfg.verify) judge(row, driver::verify(a, b, run));
    } else {
      auto a = sort_input(cfg);
      row.n = a.size();
      auto run = driver::run_sort(a, cfg.adjacent, opt);
      fill(row, run.stats, run.calc_ms);
      if (cfg.verify) judge(row, driver::verify(a, run));
    }
  } catch (const Error& e) {
    row.error = e.what();
    row.status = "error";
    row.exit_code = exit_code_for(e);
  } catch (const std::exception& e) {
    row.error = e.what();
    row.status = "error";
    row.exit_code = kFailure;
  }
  return row;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tuple-reservoir loop programs: generate data, run and verify variants"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  bool seed_given = false;

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic input file");
  gen->require_subcommand(1);
  datagen::ClusterGenConfig pc;
  std::string points_out;
  auto* gk = gen->add_subcommand("kmeans", "clustered points, one per line");
  gk->add_option("--n", pc.n, "point count")->required();
  gk->add_option("--dim", pc.dim, "dimension");
  gk->add_option("--k", pc.clusters, "generating clusters");
  gk->add_option("--extent", pc.extent, "centers lie in [0, extent]^dim");
  auto* gk_seed = gk->add_option("--seed", seed, "random seed");
  gk->add_option("--out,-o", points_out, "output file")->required();
  datagen::GraphGenConfig gc;
  std::string edges_out;
  auto* gg = gen->add_subcommand("graph", "R-MAT edge list, one 'u v' pair per line");
  gg->add_option("--scale", gc.scale, "|V| = 2^scale");
  gg->add_option("--edge-factor", gc.edge_factor, "draws per vertex");
  gg->add_option("--a", gc.a);
  gg->add_option("--b", gc.b);
  gg->add_option("--c", gc.c);
  gg->add_option("--d", gc.d);
  auto* gg_seed = gg->add_option("--seed", seed, "random seed");
  gg->add_option("--out,-o", edges_out, "output file")->required();

  // run
  RunConfig rc;
  std::string run_csv;
  auto* run_cmd = app.add_subcommand("run", "run one variant on one input");
  add_run_options(run_cmd, rc);
  run_cmd->add_option("--variant", rc.variant, "variant name (see list-variants)");
  run_cmd->add_option("--csv", run_csv, "append the result row to this file");

  // sweep
  RunConfig sc;
  std::string sweep_csv;
  std::vector<std::string> variants;
  std::vector<std::size_t> workers{1}, sizes, dims, ks;
  auto* sweep_cmd = app.add_subcommand("sweep", "run the cartesian product of variants, workers and input sizes");
  add_run_options(sweep_cmd, sc);
  sweep_cmd->remove_option(sweep_cmd->get_option("--workers"));
  sweep_cmd->add_option("--variants", variants, "comma-separated variant names")->delimiter(',');
  sweep_cmd->add_option("--workers,-W", workers, "comma-separated worker counts")->delimiter(',');
  sweep_cmd->add_option("--sizes", sizes, "points (kmeans), scale (pagerank) or size (matmul, sort)")
      ->delimiter(',');
  sweep_cmd->add_option("--dims", dims, "point dimensions (kmeans)")->delimiter(',');
  sweep_cmd->add_option("--ks", ks, "cluster counts (kmeans)")->delimiter(',');
  sweep_cmd->add_option("--csv", sweep_csv, "append result rows to this file");

  // list-variants
  std::string list_config;
  auto* list_cmd = app.add_subcommand("list-variants", "print the available variants and their pipelines");
  list_cmd->add_option("--config", list_config, "JSON file with extra variants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc_code = app.exit(e, out, err);
    return rc_code == 0 ? kOk : kUsage;
  }

  auto resolve_seed = [&](CLI::App* cmd) {
    seed_given = cmd->count("--seed") > 0;
    return seed_given ? seed : env_seed(0);
  };

  try {
    if (gk->parsed()) {
      pc.seed = resolve_seed(gk);
      if (pc.n == 0) err << "warning: n = 0, writing an empty file\n";
      auto data = datagen::gen_clustered_points(pc);
      apps::write_points(points_out, data.points);
      out << "wrote " << data.points.n << " points of dim " << data.points.dim << " to " << points_out
          << " (seed " << pc.seed << ")\n";
      return kOk;
    }
    if (gg->parsed()) {
      gc.seed = resolve_seed(gg);
      auto g = datagen::gen_graph(gc);
      apps::write_edges(edges_out, g.edges);
      out << "wrote " << g.edges.size() << " edges over " << g.vertices << " vertices to " << edges_out
          << " (seed " << gc.seed << ")\n";
      return kOk;
    }
    if (list_cmd->parsed()) {
      auto extra = load_config(list_config);
      auto show = [&](const xform::Variant& v, const char* origin) {
        out << v.name << '\t' << v.app << '\t' << xchg::to_string(v.exchange) << '\t' << ir::to_string(v.layout)
            << '\t' << origin << '\t';
        for (std::size_t i = 0; i < v.pipeline.size(); ++i) out << (i ? " ; " : "") << v.pipeline[i];
        if (v.pipeline.empty()) out << "(none)";
        out << '\n';
      };
      for (const auto& v : xform::builtin_variants()) show(v, "builtin");
      for (const auto& v : extra) show(v, "config");
      return kOk;
    }
    if (run_cmd->parsed()) {
      if (!run_cmd->count("--seed")) rc.seed = env_seed(0);
      auto extra = load_config(rc.config);
      Row row = run_one(rc, extra);
      emit({row}, run_csv, out);
      if (!row.error.empty()) err << "error: " << row.error << '\n';
      return row.exit_code;
    }
    if (sweep_cmd->parsed()) {
      if (!sweep_cmd->count("--seed")) sc.seed = env_seed(0);
      auto extra = load_config(sc.config);
      if (variants.empty()) variants.push_back(default_variant(sc.app));
      if (workers.empty()) {
        err << "error: empty worker grid\n";
        return kUsage;
      }
      const bool kmeans = sc.app == "kmeans";
      if (sizes.empty()) sizes.push_back(kmeans ? sc.gen_n : sc.app == "pagerank" ? sc.gen_scale : sc.gen_size);
      if (dims.empty()) dims.push_back(sc.gen_dim);
      if (ks.empty()) ks.push_back(sc.k);
      std::vector<Row> rows;
      for (const auto& name : variants)
        for (auto w : workers)
          for (auto size : sizes)
            for (auto dim : dims)
              for (auto k : ks) {
                RunConfig cell = sc;
                cell.variant = name;
                cell.workers = w;
                cell.gen_dim = dim;
                cell.k = k;
                if (kmeans) cell.gen_n = size;
                else if (sc.app == "pagerank") cell.gen_scale = static_cast<unsigned>(size);
                else cell.gen_size = size;
                rows.push_back(run_one(cell, extra));
              }
      emit(rows, sweep_csv, out);
      return worst(rows);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace forelem::cli
