#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rmkv/grid.hpp"
#include "rmkv/roughpath.hpp"
#include "rmkv/tensor.hpp"

namespace rmkv::rsde {

// Measure-free coefficient fields for one rough SDE. g is the full
// second-level coefficient (classically Df.f + f'; for mean-field systems it
// comes in precomposed with the measure terms). Flat layouts match coeffs:
// sigma d*eb, f d*e, g (i*e+u)*e+v.
struct FrozenFields {
  int d = 0;
  int e = 0;
  int eb = 0;
  std::function<void(double t, std::span<const double> y, std::span<double> out)> b;
  std::function<void(double t, std::span<const double> y, std::span<double> out)> sigma;
  std::function<void(double t, std::span<const double> y, std::span<double> out)> f;
  std::function<void(double t, std::span<const double> y, std::span<double> out)> g;
};

// Thrown when a step produces a non-finite state. The solver never clips;
// bounded coefficients cannot blow up, so this signals a configuration error.
struct BlowupError : std::runtime_error {
  int step = -1;
  int particle = -1;
  BlowupError(const std::string& what, int step_in, int particle_in = -1)
      : std::runtime_error(what), step(step_in), particle(particle_in) {}
};

struct Trajectory {
  TimeGrid grid;
  Mat states;  // (K+1) x d
  Mat db;      // K x eb Brownian increments consumed
  const rough::GridRoughPath* rp = nullptr;

  int d() const { return states.cols; }
};

// One explicit step of the Davie-type scheme, all integrands frozen at the
// left endpoint:
//   y+ = y + b(t,y) dt + sigma(t,y) dB + f(t,y) dX + g(t,y) : XX.
// Returns false when the result is non-finite.
bool davie_step(std::span<const double> y, double t, double dt, std::span<const double> db,
                std::span<const double> dx, std::span<const double> xx, const FrozenFields& fields,
                std::span<double> out);

// Iterated davie_step along the grid. The rough path must live on the solve
// grid (coarsen a finer path first: the Chen sums make that exact).
Trajectory solve_rsde(const FrozenFields& fields, std::span<const double> y0, const rough::GridRoughPath& rp,
                      const Mat& db);

// Remainder of the controlled-path decomposition over all grid pairs:
//   R_{i,j} = dY_{i,j} - f(t_i, Y_i) dX_{i,j},
// flat (K+1)x(K+1) table of d-vectors with only i<j populated.
std::vector<std::vector<std::vector<double>>> remainder_series(const Trajectory& traj, const FrozenFields& fields);

void write_trajectory_csv(const Trajectory& traj, const std::string& path);

}  // namespace rmkv::rsde
