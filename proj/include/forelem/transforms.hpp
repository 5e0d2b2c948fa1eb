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

// Source-to-source rewrites of programs and their composition into named
// variants. Every transformation is a pure function of its input program.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "forelem/exchange.hpp"
#include "forelem/ir.hpp"

namespace forelem::xform {

/// Introduces an outer loop over the distinct values of `field` (bound to
/// `var`) around an inner loop over the tuples selected by that value.
/// Applies to the innermost tuple loop of the nest.
ir::Program orthogonalize(const ir::Program& p, const std::string& field, const std::string& var);

/// Restricts the nest to one of `count` sub-reservoirs per returned program.
/// split_by_range throws EmptyReservoir for an empty reservoir.
std::vector<ir::Program> split_by_value(const ir::Program& p, const std::string& field, std::size_t count);
std::vector<ir::Program> split_by_range(const ir::Program& p, const std::string& field, std::size_t count);

/// Moves `space` into the tuples as field `field_name` (default: the space
/// name in lower case). Every access must be keyed by the same tuple fields.
ir::Program localize(const ir::Program& p, const std::string& space, const std::string& field_name = "");

/// Replaces every loop domain by an index interval over an index structure
/// named P<reservoir>. Tuple field references gain the access path. A
/// program that is already materialized is returned unchanged.
ir::Program materialize(const ir::Program& p);

/// Tuples <u,v> whose u has exactly the targets [0,V) \ {u} form a family
/// that is replaced by one stub <u,$C>; the body enumerates the family when
/// it meets a stub.
struct SubsetSpec {
  std::string source = "u";
  std::string target = "v";
  /// Program parameter holding the size of the target universe.
  std::string universe = "V";
  /// Execute the stub for one pseudo-random family member instead of all.
  bool arbitrary = false;
};

ir::Program reduce_reservoir(const ir::Program& p, const SubsetSpec& subset = {});

/// Swaps materialized nest levels a and b = a + 1 (levels are numbered from
/// the outermost loop). Moving a tuple level outward pads it over the other
/// loop and guards the body with the real row length.
ir::Program interchange(const ir::Program& p, std::size_t a, std::size_t b);

/// Fixes the physical layout. Materializes first when needed; throws
/// LayoutUnsupported for JaggedDiagonal on a nest without interchange.
ir::Program concretize(const ir::Program& p, ir::Layout layout);

// ---------------------------------------------------------------------------
// Variants

struct Variant {
  std::string name;
  std::string app;
  /// Steps such as "orthogonalize(x,y)", "split(x)", "split_range(x)",
  /// "localize(COORDS,coords)", "materialize", "reduce(dangling)",
  /// "interchange(1,2)", "concretize(SoA)".
  std::vector<std::string> pipeline;
  xchg::ExchangeScheme exchange = xchg::ExchangeScheme::Buffered;
  ir::Layout layout = ir::Layout::AoS;
};

/// Kmeans_1-4, PageRank_1-4, Matmul_Base, Matmul_SoA, Matmul_JDS, Sort.
const std::vector<Variant>& builtin_variants();

/// Finds a variant by name among `extra` then the built-ins. Throws
/// UnknownVariant.
const Variant& find_variant(const std::string& name, const std::vector<Variant>& extra = {});

/// Reads a JSON array of {"name", "app", "pipeline": [...], "exchange",
/// "layout"} objects. Throws IoError or InvalidArgument.
std::vector<Variant> load_variants(const std::string& path);

/// Applies the pipeline to `base`. A split step fans out into `partitions`
/// programs; without one the result is a single program. Each step is
/// checked as it is applied and errors name the failing step. A layout
/// other than AoS concretizes the result.
std::vector<ir::Program> compose(const ir::Program& base, const Variant& v, std::size_t partitions);

/// Applies one pipeline step to a single program (split steps excluded).
ir::Program apply_step(const ir::Program& p, const std::string& step);

}  // namespace forelem::xform
