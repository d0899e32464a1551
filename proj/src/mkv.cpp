#include "rmkv/mkv.hpp"

#include <cmath>
#include <stdexcept>

#include "rmkv/diagnostics.hpp"
#include "rmkv/util.hpp"

namespace rmkv::mkv {

void MkvProblem::validate() const {
  cs.validate();
  rp.validate();
  if (initial.rows < 1) throw std::invalid_argument("mkv: need at least one particle");
  if (initial.cols != cs.d) throw std::invalid_argument("mkv: initial atom dimension mismatch");
  if (rp.e() != cs.e) throw std::invalid_argument("mkv: rough path dimension mismatch");
  if (static_cast<int>(db.size()) != initial.rows) throw std::invalid_argument("mkv: one Brownian tape per particle");
  for (const Mat& tape : db) {
    if (tape.rows != rp.intervals() || tape.cols != cs.eb)
      throw std::invalid_argument("mkv: Brownian tape shape mismatch");
  }
}

void step_particles(Mat& states, const coeffs::EmpiricalMeasure& law, const MkvProblem& prob, int step_index) {
  const auto& cs = prob.cs;
  const int N = states.rows;
  const int d = cs.d, e = cs.e;
  const double t = prob.rp.grid.t(step_index);
  const double dt = prob.rp.grid.dt(step_index);
  const std::vector<double> dx = prob.rp.increment(step_index, step_index + 1);
  const Mat& xx = prob.rp.xx_step[step_index];

  // Measure-level phase: the per-atom mean field is the only O(N^2) piece.
  const Mat m_at_atoms = coeffs::flow_derivative_at_atoms(cs, t, law, prob.threads);

  Mat next(N, d);
  std::vector<int> bad(N, 0);
  parallel_for(N, prob.threads, [&](int j) {
    rsde::FrozenFields fields;
    fields.d = d;
    fields.e = e;
    fields.eb = cs.eb;
    fields.b = [&](double tt, std::span<const double> y, std::span<double> out) {
      coeffs::eval_field(cs.b, tt, y, law, out);
    };
    fields.sigma = [&](double tt, std::span<const double> y, std::span<double> out) {
      coeffs::eval_field(cs.sigma, tt, y, law, out);
    };
    fields.f = [&](double tt, std::span<const double> y, std::span<double> out) {
      coeffs::eval_field(cs.f, tt, y, law, out);
    };
    fields.g = [&](double tt, std::span<const double> y, std::span<double> out) {
      coeffs::second_level_coeff(cs, tt, y, law, m_at_atoms, out);
    };
    const bool ok = rsde::davie_step(states.row(j), t, dt, prob.db[j].row(step_index), dx, xx.a, fields, next.row(j));
    if (!ok) bad[j] = 1;
  });
  for (int j = 0; j < N; ++j) {
    if (bad[j])
      throw rsde::BlowupError("mkv: non-finite state, particle " + std::to_string(j) + " at step " +
                                  std::to_string(step_index),
                              step_index, j);
  }
  states = std::move(next);
}

MkvRun simulate_direct(const MkvProblem& prob) {
  prob.validate();
  const int K = prob.rp.intervals();

  MkvRun run;
  run.grid = prob.rp.grid;
  run.driver = prob.rp;
  run.history.reserve(K + 1);
  run.history.push_back(prob.initial);

  Mat states = prob.initial;
  for (int i = 0; i < K; ++i) {
    coeffs::EmpiricalMeasure law(states);
    step_particles(states, law, prob, i);
    run.history.push_back(states);
  }
  return run;
}

std::pair<MkvRun, PicardState> simulate_picard(const MkvProblem& prob, double tol, int max_iter, PicardInit init) {
  prob.validate();
  if (!(tol > 0.0)) throw std::invalid_argument("picard: tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("picard: max_iter must be >= 1");
  const int K = prob.rp.intervals();
  const int N = prob.particles();

  // Initial frozen flow.
  std::vector<Mat> flow;
  if (init == PicardInit::direct) {
    flow = simulate_direct(prob).history;
  } else {
    flow.assign(K + 1, prob.initial);
  }

  PicardState state;
  MkvRun run;
  run.grid = prob.rp.grid;
  run.driver = prob.rp;

  for (int k = 0; k < max_iter; ++k) {
    // Solve N decoupled equations against the frozen measure flow.
    std::vector<Mat> next_flow;
    next_flow.reserve(K + 1);
    next_flow.push_back(prob.initial);
    Mat states = prob.initial;
    for (int i = 0; i < K; ++i) {
      coeffs::EmpiricalMeasure law(flow[i]);
      step_particles(states, law, prob, i);
      next_flow.push_back(states);
    }

    // sup over grid times of the max atom distance between iterates
    double dist = 0.0;
    for (int i = 0; i <= K; ++i) {
      for (int j = 0; j < N; ++j) dist = std::max(dist, dist2(next_flow[i].row(j), flow[i].row(j)));
    }
    state.distances.push_back(dist);
    if (state.distances.size() >= 2) {
      const double prev = state.distances[state.distances.size() - 2];
      state.ratios.push_back(prev > 0.0 ? dist / prev : 0.0);  // 0/0 := 0
    }
    flow = std::move(next_flow);
    state.iterations = k + 1;
    if (dist < tol) {
      state.converged = true;
      break;
    }
  }

  run.history = std::move(flow);
  return {std::move(run), std::move(state)};
}

SnapshotMoments snapshot_moments(const Mat& states, std::span<const double> qs) {
  const int N = states.rows, d = states.cols;
  SnapshotMoments mom;
  mom.mean.assign(d, 0.0);
  coeffs::EmpiricalMeasure mu(states);  // canonical order for reproducible sums
  for (int j : mu.order)
    for (int c = 0; c < d; ++c) mom.mean[c] += mu.atoms(j, c);
  for (double& v : mom.mean) v /= N;

  mom.covariance = Mat(d, d);
  for (int j : mu.order)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) mom.covariance(a, b) += (mu.atoms(j, a) - mom.mean[a]) * (mu.atoms(j, b) - mom.mean[b]);
  for (double& v : mom.covariance.a) v /= N;

  for (double q : qs) mom.q_moments.push_back(diag::moment_norm(states, q));
  return mom;
}

}  // namespace rmkv::mkv
