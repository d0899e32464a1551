#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rmkv/coeffs.hpp"
#include "rmkv/grid.hpp"
#include "rmkv/mkv.hpp"
#include "rmkv/roughpath.hpp"
#include "rmkv/tensor.hpp"

namespace rmkv::diag {

// Moment functional over samples (rows of a matrix, Euclidean norm per row):
//   q > 1:      (mean |Z|^q)^{1/q}
//   0 < q <= 1:  mean |Z|^q
//   q = 0:       mean (|Z| /\ 1)
double moment_norm(const Mat& samples, double q);
double moment_norm(std::span<const double> scalar_samples, double q);

// sup over grid pairs of the cross-path m-norm of increments:
//   sup_{s<t} moment_norm({dY^{(i)}_{s,t}}_i, m) / (t-s)^beta.
// The conditional norm is replaced by the unconditional norm across Monte
// Carlo paths (a lower-bound surrogate). paths: one (K+1) x dim matrix per
// sample, common grid. Pairs are exhaustive up to 4096 intervals, strided
// beyond with consecutive pairs always retained.
double holder_seminorm_Lm(const std::vector<Mat>& paths, const TimeGrid& grid, double beta, double m);

// Estimate of |E_s R_{s,t}| from K_cont fresh continuations: the resolver
// returns the remainder sample of continuation k (same rough path, fresh
// Brownian draws); the operation averages and reports the Euclidean norm.
// Monte Carlo bias O(K_cont^{-1/2}).
double conditional_remainder(const std::function<std::vector<double>(int k)>& resolver, int k_cont);

// Left- and right-hand side components of the stability estimate for two
// coupled runs, plus derived ratios. All Holder sups are finite-grid sups;
// all omega-norms are cross-particle moment norms.
struct StabilityReport {
  // left-hand side
  double lhs_sup_diff_m = 0.0;      // || sup_t |dY_{0,t} - dYbar_{0,t}| ||_m
  double lhs_y_norm = 0.0;          // sup_t ||Y-Ybar||_m + ||d(Y-Ybar)||_{alpha;m}
  double lhs_fy_seminorm = 0.0;     // ||d f(Y) - d fbar(Ybar)||_{beta;m}
  double lhs_remainder = 0.0;       // ||R - Rbar||_{alpha+beta;m}
  double lhs_total = 0.0;
  // right-hand side
  double rhs_xi_p = 0.0;            // ||xi - xibar||_p
  double rhs_rho = 0.0;             // rho_{alpha,beta}(X, Xbar)
  double rhs_b_sup = 0.0;           // probe-grid sup of |b - bbar|
  double rhs_sigma_sup = 0.0;       // probe-grid sup of |sigma - sigmabar|
  double rhs_f_dist = 0.0;          // probe-grid value+derivative distance of (f,f')
  double rhs_total = 0.0;

  double ratio = 0.0;               // lhs_total / rhs_total, 0/0 := 0
  double controlled_distance = 0.0; // ||Y-Ybar||_{beta;m} + ||Y'-Ybar'||_{beta';m} + ||R-Rbar||_{beta+beta';m}

  std::map<std::string, double> as_map() const;
  std::string to_json() const;
  std::string to_csv_row(bool with_header) const;
};

// Probe lattice for coefficient sup distances: a deterministic grid over
// [lo, hi]^d (resolution points per axis) plus visited states of both runs.
struct ProbeConfig {
  double lo = -2.0;
  double hi = 2.0;
  int resolution = 9;
  int time_stride = 8;   // stride over grid times when scanning measures
  int atom_stride = 16;  // stride over visited atoms added as probes
};

struct StabilityParams {
  double alpha = 0.5;
  double beta = 0.25;
  double beta_prime = 0.25;
  double m = 2.0;
  double p = 2.0;
  ProbeConfig probes;
};

// Both runs must share the grid and particle count and should be coupled
// (same Brownian tapes) for the pathwise differences to be meaningful.
StabilityReport stability_report(const mkv::MkvRun& run_a, const coeffs::CoefficientSet& cs_a,
                                 const mkv::MkvRun& run_b, const coeffs::CoefficientSet& cs_b,
                                 const StabilityParams& params);

// Full diagnostics of a single run: rough-path Holder report, particle-path
// Holder seminorm, moment norms at requested q, and the cross-particle mean
// remainder norm (unconditional surrogate of ||E. R||_{alpha+beta}).
struct RunDiagnostics {
  rough::HolderReport driver;
  double holder_Lm = 0.0;
  double remainder_norm = 0.0;
  std::map<std::string, double> moment_norms;  // key "q=<value>" at final time

  std::string to_json() const;
};
RunDiagnostics diagnose_run(const mkv::MkvRun& run, const coeffs::CoefficientSet& cs, double alpha, double beta,
                            double m, std::span<const double> qs);

}  // namespace rmkv::diag
