#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rmkv/grid.hpp"
#include "rmkv/tensor.hpp"

namespace rmkv::rough {

// Discretized 2-step rough path on a grid. The modeling content lives on
// consecutive intervals: first-level increments dx_step and second-level
// increments xx_step. Every non-consecutive second level is defined through
// Chen's relation
//   XX_{s,t} = XX_{s,u} + XX_{u,t} + dX_{s,u} (x) dX_{u,t},
// so Chen holds exactly by construction and memory stays O(K). The absolute
// first level x is the anchored cumulative sum kept for queries and
// serialization; increments are authoritative so that schemes consume the
// constructor's per-interval values bitwise (x(i+1)-x(i) can differ in the
// last ulp).
//
// Index convention for the second level: XX(u,v) over [s,t] approximates
// \int_s^t (X_r - X_s)^u dX^v_r (first index integrand, second integrator).
struct GridRoughPath {
  TimeGrid grid;
  Mat x;                     // (K+1) x e first-level values (anchored cumsum)
  Mat dx_step;               // K x e consecutive first-level increments
  std::vector<Mat> xx_step;  // K consecutive e x e second-level increments
  double alpha_hint = 0.5;

  int e() const { return x.cols; }
  int intervals() const { return grid.intervals(); }

  // dX_{i,j}: the stored row for j=i+1, the increment sum otherwise.
  std::vector<double> increment(int i, int j) const;

  // XX_{i,j} by Chen recursion (exact for j=i+1: the stored increment).
  Mat second_level(int i, int j) const;

  void validate() const;  // grid monotone, shapes consistent
};

struct HolderReport {
  double dx_alpha = 0.0;    // |dX|_alpha over all grid pairs
  double xx_2alpha = 0.0;   // |XX|_{2 alpha} over all grid pairs
  double triple_norm = 0.0; // dx_alpha + sqrt(xx_2alpha)
};

// Smooth sampler t -> x(t); writes e components.
using PathSampler = std::function<void(double t, std::span<double> out)>;

// Geometric lift of a smooth path. The second level on each interval is the
// trapezoidal approximation of \int dX (x) dx over R sub-steps; its symmetric
// part telescopes to dX (x) dX / 2 exactly in exact arithmetic, the
// antisymmetric (area) part carries the O(R^-2) quadrature error.
GridRoughPath lift_smooth(const PathSampler& sampler, const TimeGrid& grid, int e, int sub_resolution,
                          double alpha_hint = 0.5);

// Ito lift from per-sub-step Brownian increments (K*R*e values, step-major:
// increments[(i*R + r)*e + c] ~ N(0, dt_i/R)). First level at grid points is
// the cumulative sum. For e = 1 the per-interval area uses the exact identity
// XX = (dB^2 - dt)/2 with dB taken from the sub-sums; for e > 1 it is the
// left-point Ito sum over the sub-grid (bias O(dt/R) documented).
GridRoughPath ito_lift(std::span<const double> increments, const TimeGrid& grid, int e, int sub_resolution,
                       double alpha_hint = 0.5);

// Chen defect |XX_{i,j} - XX_{i,u} - XX_{u,j} - dX_{i,u} (x) dX_{u,j}|_F with
// non-consecutive values reconstructed; ~0 by construction, the operation
// guards the reconstruction code and externally supplied tables.
double chen_defect(const GridRoughPath& rp, int i, int u, int j);

// Same defect over an explicit dense table XX[i][j] (upper triangle filled),
// for externally loaded or deliberately corrupted second levels.
double chen_defect_dense(const GridRoughPath& rp, const std::vector<std::vector<Mat>>& table, int i, int u, int j);

// Dense reconstruction of all pairs (i < j), for tests and dense checks.
std::vector<std::vector<Mat>> reconstruct_dense(const GridRoughPath& rp);

// Holder sups over all grid pairs (exhaustive up to 4096 intervals, strided
// beyond, consecutive pairs always included).
HolderReport holder_norms(const GridRoughPath& rp, double alpha);

// rho_{alpha,alpha'} = |dX - dXbar|_alpha + |XX - XXbar|_{alpha+alpha'} over
// all grid pairs; grids must match exactly.
double rp_distance(const GridRoughPath& rp, const GridRoughPath& rp_bar, double alpha, double alpha_prime);

// Restriction to a sub-grid given by strictly increasing indices containing 0
// and K; consecutive second levels of the coarse path are Chen sums, so the
// coarse path reproduces the fine one exactly on the retained pairs.
GridRoughPath coarsen(const GridRoughPath& rp, std::span<const int> indices);

// Columnar text serialization: header "e K alpha", then per grid point
// "t x_1..x_e", then per interval the e*e second-level entries row-major.
// Bit-exact round trip at 17 significant digits.
void write_text(const GridRoughPath& rp, std::ostream& os);
GridRoughPath read_text(std::istream& is);
void save_text(const GridRoughPath& rp, const std::string& path);
GridRoughPath load_text(const std::string& path);

}  // namespace rmkv::rough
