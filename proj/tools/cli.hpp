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

// Command-line front end: generate, run, sweep, list-variants.

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "forelem/transforms.hpp"

namespace forelem::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kVerifyFailed = 2,
  kNonTermination = 3,
  kUsage = 4,
};

struct RunConfig {
  std::string app = "kmeans";
  std::string variant;  // empty: the app's default variant
  std::string input;    // empty: generate
  std::string config;   // variant config file

  // Generator settings used when no input file is given.
  std::size_t gen_n = 4096;
  std::size_t gen_dim = 4;
  std::size_t gen_clusters = 0;  // 0: same as k
  unsigned gen_scale = 10;
  std::size_t gen_edge_factor = 16;
  std::size_t gen_size = 32;
  double gen_density = 0.1;

  std::size_t k = 4;
  std::size_t vertices = 0;  // 0: largest endpoint + 1
  double damping = 0.85;
  bool adjacent = false;

  std::size_t partitions = 1;
  std::size_t workers = 1;
  std::size_t sweeps_per_exchange = 1;
  std::size_t max_sweeps = 100000;
  double epsilon = 1e-10;
  double delta = 0.0;
  double threshold = 0.0;
  std::uint64_t seed = 0;
  std::string exchange;   // empty: the variant's scheme
  std::string layout;     // empty: the variant's layout
  std::string scheduler = "in-order";
  bool verify = false;
};

struct Row {
  std::string app;
  std::string variant;
  std::size_t partitions = 1;
  std::size_t workers = 1;
  std::size_t sweeps = 0;
  std::uint64_t guards_fired = 0;
  std::uint64_t state_changes = 0;
  double calc_ms = 0.0;
  std::string verify = "off";  // pass | fail | off
  double residual = 0.0;
  std::size_t rounds = 0;
  std::string status;
  std::size_t n = 0;
  std::size_t dim = 0;
  std::size_t k = 0;
  std::uint64_t deltas_sent = 0;
  std::uint64_t bytes = 0;
  std::string error;
  int exit_code = kOk;
};

std::string csv_header();
std::string to_csv(const Row& r);

/// Loads or generates the input, runs the variant and verifies when asked.
/// Errors are reported in the row rather than thrown.
Row run_one(const RunConfig& cfg, const std::vector<xform::Variant>& extra = {});

/// Seed from FORELEM_SEED, or `fallback` when unset or unparsable.
std::uint64_t env_seed(std::uint64_t fallback = 0);

/// Entry point. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace forelem::cli
