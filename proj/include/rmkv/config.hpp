#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmkv/coeffs.hpp"
#include "rmkv/diagnostics.hpp"
#include "rmkv/grid.hpp"
#include "rmkv/mkv.hpp"
#include "rmkv/roughpath.hpp"

namespace rmkv::cli {

using Json = nlohmann::json;

// Declarative single-file scenario description. Everything a run needs is in
// the file; seeds are mandatory so every artifact is replayable.
struct ScenarioConfig {
  std::string mode;  // rsde | mkv-direct | mkv-picard | randomize | diagnose | sweep
  std::uint64_t seed = 0;
  int d = 1, e = 1, eb = 1;
  double T = 1.0;
  int K = 1;
  int N = 1;
  int threads = 1;

  Json init;      // particles.init
  Json kernels;   // kernels.{b,sigma,f,fprime}
  Json driver;    // driver block
  Json params;    // alpha, beta, beta_prime, gamma, m, p, q list
  Json picard;    // tol, max_iter, init
  Json randomize; // samples, resolutions, phi, time_index
  Json sweep;     // axis, values, analytic
  Json probes;    // stability probe lattice
  Json output;    // dir, atoms, trajectories, remainders

  Json normalized;  // full normalized document (source of truth for emit/hash)
};

struct Validation {
  bool ok = false;
  std::vector<std::string> errors;    // "field.path: message"
  std::vector<std::string> warnings;  // parameter-range advisories etc.
  ScenarioConfig config;              // populated when ok
};

// Parse + validate + fill defaults. Never throws on content problems; all
// violations are collected with field paths.
Validation validate(const Json& doc);
Validation validate_file(const std::string& path);

// Normalized re-emission (sorted keys, defaults filled).
std::string emit(const ScenarioConfig& cfg);
std::uint64_t config_hash(const ScenarioConfig& cfg);

// Realized scenario pieces, built deterministically from the config.
coeffs::CoefficientSet build_coefficients(const ScenarioConfig& cfg);
Mat build_initial_atoms(const ScenarioConfig& cfg);
rough::GridRoughPath build_driver(const ScenarioConfig& cfg);
diag::StabilityParams build_stability_params(const ScenarioConfig& cfg);

// Execute the configured pipeline, writing artifacts + manifest.json into
// out_dir (the config's output.dir when empty). Returns the process exit
// code: 0 ok, 2 validation failure, 3 numerical abort.
int run(const ScenarioConfig& cfg, std::string out_dir = "");

// stability_report over two completed run directories (mkv modes with atom
// snapshots); writes report.json into each caller-chosen location.
diag::StabilityReport compare_runs(const std::string& dir_a, const std::string& dir_b,
                                   const diag::StabilityParams& params);

}  // namespace rmkv::cli
