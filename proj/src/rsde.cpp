#include "rmkv/rsde.hpp"

#include <cmath>
#include <fstream>

#include "rmkv/util.hpp"

namespace rmkv::rsde {

bool davie_step(std::span<const double> y, double t, double dt, std::span<const double> db,
                std::span<const double> dx, std::span<const double> xx, const FrozenFields& fields,
                std::span<double> out) {
  const int d = fields.d, e = fields.e, eb = fields.eb;
  thread_local std::vector<double> bv, sv, fv, gv;
  bv.assign(d, 0.0);
  sv.assign(static_cast<std::size_t>(d) * eb, 0.0);
  fv.assign(static_cast<std::size_t>(d) * e, 0.0);
  gv.assign(static_cast<std::size_t>(d) * e * e, 0.0);

  fields.b(t, y, bv);
  fields.sigma(t, y, sv);
  fields.f(t, y, fv);
  fields.g(t, y, gv);

  for (int i = 0; i < d; ++i) out[i] = y[i];
  for (int i = 0; i < d; ++i) out[i] += bv[i] * dt;
  matvec_acc(out, sv, db, d, eb);
  matvec_acc(out, fv, dx, d, e);
  ten3_contract_acc(out, gv, xx, d, e);
  return all_finite(out);
}

Trajectory solve_rsde(const FrozenFields& fields, std::span<const double> y0, const rough::GridRoughPath& rp,
                      const Mat& db) {
  if (static_cast<int>(y0.size()) != fields.d) throw std::invalid_argument("solve_rsde: initial condition dimension");
  if (rp.e() != fields.e) throw std::invalid_argument("solve_rsde: rough path dimension mismatch");
  const int K = rp.intervals();
  if (db.rows != K || db.cols != fields.eb) throw std::invalid_argument("solve_rsde: Brownian increments shape");

  Trajectory traj;
  traj.grid = rp.grid;
  traj.states = Mat(K + 1, fields.d);
  traj.db = db;
  traj.rp = &rp;
  for (int c = 0; c < fields.d; ++c) traj.states(0, c) = y0[c];

  for (int i = 0; i < K; ++i) {
    std::vector<double> dx = rp.increment(i, i + 1);
    const Mat& xx = rp.xx_step[i];
    const bool ok = davie_step(traj.states.row(i), rp.grid.t(i), rp.grid.dt(i), db.row(i), dx, xx.a, fields,
                               traj.states.row(i + 1));
    if (!ok) throw BlowupError("solve_rsde: non-finite state after step " + std::to_string(i), i);
  }
  return traj;
}

std::vector<std::vector<std::vector<double>>> remainder_series(const Trajectory& traj, const FrozenFields& fields) {
  const int K = traj.grid.intervals();
  const int d = fields.d, e = fields.e;
  if (traj.rp == nullptr) throw std::invalid_argument("remainder_series: trajectory has no driving path");
  require_same_grid(traj.grid, traj.rp->grid, "remainder_series");

  std::vector<std::vector<std::vector<double>>> r(K + 1, std::vector<std::vector<double>>(K + 1));
  std::vector<double> fv(static_cast<std::size_t>(d) * e);
  for (int i = 0; i <= K; ++i) {
    fields.f(traj.grid.t(i), traj.states.row(i), fv);
    for (int j = i + 1; j <= K; ++j) {
      std::vector<double> dx = traj.rp->increment(i, j);
      std::vector<double> val(d, 0.0);
      for (int c = 0; c < d; ++c) val[c] = traj.states(j, c) - traj.states(i, c);
      for (int c = 0; c < d; ++c) {
        double s = 0.0;
        for (int a = 0; a < e; ++a) s += fv[static_cast<std::size_t>(c) * e + a] * dx[a];
        val[c] -= s;
      }
      r[i][j] = std::move(val);
    }
  }
  return r;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << "t";
  for (int c = 0; c < traj.d(); ++c) os << ",Y_" << (c + 1);
  os << '\n';
  for (int i = 0; i < traj.grid.points(); ++i) {
    os << fmt17(traj.grid.t(i));
    for (int c = 0; c < traj.d(); ++c) os << ',' << fmt17(traj.states(i, c));
    os << '\n';
  }
}

}  // namespace rmkv::rsde
