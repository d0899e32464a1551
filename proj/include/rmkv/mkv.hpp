#pragma once

#include <span>
#include <vector>

#include "rmkv/coeffs.hpp"
#include "rmkv/roughpath.hpp"
#include "rmkv/rsde.hpp"
#include "rmkv/tensor.hpp"

namespace rmkv::mkv {

// One interacting-particle problem: N particles share the rough path (the
// common noise) and carry independent Brownian tapes.
struct MkvProblem {
  coeffs::CoefficientSet cs;
  rough::GridRoughPath rp;
  Mat initial;             // N x d
  std::vector<Mat> db;     // per particle, K x eb
  int threads = 1;

  int particles() const { return initial.rows; }
  void validate() const;
};

struct MkvRun {
  TimeGrid grid;
  std::vector<Mat> history;  // K+1 states, each N x d
  rough::GridRoughPath driver;

  int particles() const { return history.empty() ? 0 : history.front().rows; }
  int d() const { return history.empty() ? 0 : history.front().cols; }
};

struct PicardState {
  int iterations = 0;
  bool converged = false;
  std::vector<double> distances;  // sup_t max_j |Y^{(k+1)}_j - Y^{(k)}_j|
  std::vector<double> ratios;     // successive distance ratios
};

enum class PicardInit {
  frozen_initial,  // constant measure flow: atoms stay at the initial cloud
  direct,          // one direct-coupling pass supplies the initial flow
};

// Advance all particles from t_i to t_{i+1} against the supplied law atoms
// (frozen at the left endpoint). The f-kernel mean field at the atoms is
// computed once (O(N^2)) and shared across particles, then particle updates
// run independently. `states` is updated in place.
void step_particles(Mat& states, const coeffs::EmpiricalMeasure& law, const MkvProblem& prob, int step_index);

// Direct coupling: the law argument at each step is the empirical measure of
// the ensemble itself.
MkvRun simulate_direct(const MkvProblem& prob);

// Frozen-law Picard iteration: each iterate solves N decoupled equations
// against the previous iterate's measure flow, until the sup-over-time
// max-atom distance between successive iterates drops below tol.
std::pair<MkvRun, PicardState> simulate_picard(const MkvProblem& prob, double tol, int max_iter,
                                               PicardInit init = PicardInit::frozen_initial);

// Uniform-weight snapshot moments used by the snapshot writer.
struct SnapshotMoments {
  std::vector<double> mean;
  Mat covariance;
  std::vector<double> q_moments;  // moment_norm of |Y| for each configured q
};
SnapshotMoments snapshot_moments(const Mat& states, std::span<const double> qs);

}  // namespace rmkv::mkv
