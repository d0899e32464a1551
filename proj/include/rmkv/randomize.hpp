#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rmkv/coeffs.hpp"
#include "rmkv/grid.hpp"
#include "rmkv/mkv.hpp"
#include "rmkv/roughpath.hpp"
#include "rmkv/tensor.hpp"

namespace rmkv::rnd {

// One sampled common-noise Brownian path, stored as sub-increments at a fine
// resolution. Coarser views (any R dividing r_fine) aggregate consecutive
// fine increments, so every resolution refines the same path; this is what
// makes sub-resolution sweeps measure the area bias and nothing else.
struct CommonNoiseTape {
  TimeGrid grid;
  int e = 0;
  int r_fine = 0;
  std::vector<double> fine;  // (K * r_fine * e), step-major

  // Sub-increments at resolution r (r divides r_fine), K*r*e.
  std::vector<double> at_resolution(int r) const;
};

CommonNoiseTape sample_common_tape(const TimeGrid& grid, int e, std::uint64_t master_seed, std::uint64_t sample_index,
                                   int r_fine);

// Ito lift of the tape at the given sub-resolution (scalar case uses the
// exact area identity; see rough::ito_lift).
rough::GridRoughPath sample_common_lift(const CommonNoiseTape& tape, int sub_resolution, double alpha_hint = 0.5);

// Classical common-noise particle scheme: Euler in drift and idiosyncratic
// noise plus the Milstein-type area correction in the common noise,
//   Y+ = Y + b dt + sigma dB + f dW + G : A,
// with the empirical law frozen at the left endpoint. For scalar W the area
// is A = (dW^2 - dt)/2 exactly; multi-dimensional W uses the left-point
// sub-grid sums at the tape resolution. On identical tapes and equal
// resolutions this reproduces the rough pipeline bitwise; sweeping the rough
// side's resolution against a fine classical reference isolates the area
// bias.
mkv::MkvRun classical_common_noise_solver(const coeffs::CoefficientSet& cs, const Mat& initial,
                                          const std::vector<Mat>& db, const CommonNoiseTape& tape, int sub_resolution,
                                          int threads = 1);

// Bounded scalar test functions phi selectable by id: "one", "tanh_first",
// "cos_sum", "norm_capped".
using TestFunction = std::function<double(std::span<const double> y)>;
TestFunction make_test_function(const std::string& id);
const std::vector<std::string>& test_function_ids();

struct SampleComparison {
  int sample = 0;
  double rough_mean = 0.0;
  double classical_mean = 0.0;
  double delta = 0.0;
};

struct LawComparison {
  std::vector<SampleComparison> samples;
  double max_delta = 0.0;
  double mean_delta = 0.0;
};

// |mean_j phi(Y_rough) - mean_j phi(Y_classical)| at one grid time, per
// W-sample, plus max/mean summaries. Means run over particles in index order
// in both pipelines.
LawComparison conditional_law_compare(const std::vector<mkv::MkvRun>& rough_runs,
                                      const std::vector<mkv::MkvRun>& classical_runs, const TestFunction& phi,
                                      int time_index);

// Full randomization pass: per sample s, draw one W tape, lift it at
// rough_resolution, run the rough solver, run the classical solver at
// classical_resolution on the same tape and the same per-particle Brownian
// tapes.
struct RandomizationConfig {
  int samples = 8;
  int rough_resolution = 64;
  int classical_resolution = 64;
  int r_fine = 0;  // 0: lcm of both resolutions
  std::uint64_t master_seed = 1;
};

struct RandomizationRun {
  std::vector<mkv::MkvRun> rough_runs;
  std::vector<mkv::MkvRun> classical_runs;
};

RandomizationRun run_randomization(const coeffs::CoefficientSet& cs, const Mat& initial, const TimeGrid& grid,
                                   const RandomizationConfig& cfg, int threads = 1);

}  // namespace rmkv::rnd
