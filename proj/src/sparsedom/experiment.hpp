#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "sparsedom/family.hpp"
#include "sparsedom/gridfn.hpp"
#include "sparsedom/io.hpp"
#include "sparsedom/tent.hpp"

namespace sparsedom {

// Subcommands: verify-sparse, bilinear, ellr-check, poincare, tent, square,
// potential, goodlambda-tent, goodlambda-sums, generate.
bool known_subcommand(const std::string& name);

// Checks every section and parameter domain and fills defaults. Throws
// InvalidArgument (bad value or unknown key) or ParseError.
Json normalize_config(const std::string& subcommand, const Json& config);

struct ExperimentResult {
  Json report;
  // Additional files keyed by name (curves, generated inputs), written next to report.json.
  std::map<std::string, std::string> artifacts;
  bool passed = true;
  double wall_seconds = 0.0;
};

ExperimentResult run_experiment(const std::string& subcommand, const Json& config);

// report.json, the artifacts, and timing.json (the only non-deterministic file).
void write_outputs(const ExperimentResult& result, const std::string& out_dir);

// A family built from f; `family` is a family section of the config. r is
// only used by the canonical and operator kinds.
std::unique_ptr<CubeFamily> family_from_grid(const GridFunction& f, const Json& family,
                                             std::optional<double> r = std::nullopt);

// Input generators. Every draw comes from SplitMix64(seed) in the documented order.
GridFunction generate_gridfn(const RootGeometry& g, const Json& spec, std::uint64_t seed);
GridFunction generate_measure(const RootGeometry& g, const Json& spec, std::uint64_t seed);
GridFunction generate_weight(const RootGeometry& g, const Json& spec, std::uint64_t seed);
HalfSpaceFunction generate_halfspace(const RootGeometry& g, const Json& spec, std::uint64_t seed);

}  // namespace sparsedom
