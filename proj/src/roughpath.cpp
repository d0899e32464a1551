#include "rmkv/roughpath.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "rmkv/util.hpp"

namespace rmkv::rough {

namespace {

// Pair enumeration cutoff; beyond this the sups use strided start/end points
// plus all consecutive pairs.
constexpr int kExhaustivePairLimit = 4096;

void outer_acc(Mat& acc, std::span<const double> u, std::span<const double> v) {
  const int e = acc.rows;
  for (int a = 0; a < e; ++a)
    for (int b = 0; b < e; ++b) acc(a, b) += u[a] * v[b];
}

std::vector<int> sup_index_set(int K) {
  std::vector<int> idx;
  if (K + 1 <= kExhaustivePairLimit + 1) {
    idx.resize(K + 1);
    for (int i = 0; i <= K; ++i) idx[i] = i;
    return idx;
  }
  const int stride = (K + kExhaustivePairLimit - 1) / kExhaustivePairLimit;
  for (int i = 0; i <= K; i += stride) idx.push_back(i);
  if (idx.back() != K) idx.push_back(K);
  return idx;
}

}  // namespace

void GridRoughPath::validate() const {
  if (grid.points() < 2) throw std::invalid_argument("rough path: grid needs at least 2 points");
  if (!grid.strictly_increasing()) throw std::invalid_argument("rough path: grid not strictly increasing");
  if (x.rows != grid.points()) throw std::invalid_argument("rough path: first-level row count mismatch");
  if (dx_step.rows != grid.intervals() || dx_step.cols != e())
    throw std::invalid_argument("rough path: first-level increment shape mismatch");
  if (static_cast<int>(xx_step.size()) != grid.intervals())
    throw std::invalid_argument("rough path: second-level interval count mismatch");
  for (const Mat& m : xx_step) {
    if (m.rows != e() || m.cols != e()) throw std::invalid_argument("rough path: second-level shape mismatch");
  }
}

std::vector<double> GridRoughPath::increment(int i, int j) const {
  std::vector<double> d(e(), 0.0);
  for (int k = i; k < j; ++k)
    for (int c = 0; c < e(); ++c) d[c] += dx_step(k, c);
  return d;
}

Mat GridRoughPath::second_level(int i, int j) const {
  if (i < 0 || j > intervals() || i > j) throw std::invalid_argument("second_level: bad indices");
  Mat acc(e(), e());
  std::vector<double> run(e(), 0.0);  // dX_{i,k}
  // Chen sweep: XX_{i,k+1} = XX_{i,k} + XX_{k,k+1} + dX_{i,k} (x) dX_{k,k+1}.
  for (int k = i; k < j; ++k) {
    if (k > i) outer_acc(acc, run, dx_step.row(k));
    for (int a = 0; a < e(); ++a)
      for (int b = 0; b < e(); ++b) acc(a, b) += xx_step[k](a, b);
    for (int c = 0; c < e(); ++c) run[c] += dx_step(k, c);
  }
  return acc;
}

GridRoughPath lift_smooth(const PathSampler& sampler, const TimeGrid& grid, int e, int sub_resolution,
                          double alpha_hint) {
  if (!grid.strictly_increasing()) throw std::invalid_argument("lift_smooth: grid not strictly increasing");
  if (sub_resolution < 1) throw std::invalid_argument("lift_smooth: sub_resolution must be >= 1");
  const int K = grid.intervals();

  GridRoughPath rp;
  rp.grid = grid;
  rp.alpha_hint = alpha_hint;
  rp.x = Mat(K + 1, e);
  rp.dx_step = Mat(K, e);
  rp.xx_step.assign(K, Mat(e, e));

  std::vector<double> buf(e);
  for (int i = 0; i <= K; ++i) {
    sampler(grid.t(i), buf);
    for (int c = 0; c < e; ++c) rp.x(i, c) = buf[c];
  }
  for (int i = 0; i < K; ++i)
    for (int c = 0; c < e; ++c) rp.dx_step(i, c) = rp.x(i + 1, c) - rp.x(i, c);

  const int R = sub_resolution;
  std::vector<double> prev(e), cur(e), base(e);
  for (int i = 0; i < K; ++i) {
    const double s = grid.t(i);
    const double dt_sub = grid.dt(i) / R;
    sampler(s, base);
    prev = base;
    Mat& xx = rp.xx_step[i];
    for (int r = 1; r <= R; ++r) {
      sampler((r == R) ? grid.t(i + 1) : s + r * dt_sub, cur);
      // trapezoid: 1/2 (dX_{s,tau_{r-1}} + dX_{s,tau_r}) (x) dx_r
      for (int a = 0; a < e; ++a) {
        const double mid = 0.5 * ((prev[a] - base[a]) + (cur[a] - base[a]));
        for (int b = 0; b < e; ++b) xx(a, b) += mid * (cur[b] - prev[b]);
      }
      std::swap(prev, cur);
    }
  }
  return rp;
}

GridRoughPath ito_lift(std::span<const double> increments, const TimeGrid& grid, int e, int sub_resolution,
                       double alpha_hint) {
  if (!grid.strictly_increasing()) throw std::invalid_argument("ito_lift: grid not strictly increasing");
  if (sub_resolution < 1) throw std::invalid_argument("ito_lift: sub_resolution must be >= 1");
  const int K = grid.intervals();
  const int R = sub_resolution;
  if (increments.size() != static_cast<std::size_t>(K) * R * e)
    throw std::invalid_argument("ito_lift: increment count does not match K*R*e");

  GridRoughPath rp;
  rp.grid = grid;
  rp.alpha_hint = alpha_hint;
  rp.x = Mat(K + 1, e);
  rp.dx_step = Mat(K, e);
  rp.xx_step.assign(K, Mat(e, e));

  std::vector<double> run(e, 0.0);  // running position within the interval
  for (int i = 0; i < K; ++i) {
    Mat& xx = rp.xx_step[i];
    vec_fill(run, 0.0);
    for (int r = 0; r < R; ++r) {
      const double* inc = increments.data() + (static_cast<std::size_t>(i) * R + r) * e;
      if (e > 1) {
        // left-point sum: (B_{tau_r} - B_s) (x) inc
        for (int a = 0; a < e; ++a)
          for (int b = 0; b < e; ++b) xx(a, b) += run[a] * inc[b];
      }
      for (int c = 0; c < e; ++c) run[c] += inc[c];
    }
    for (int c = 0; c < e; ++c) {
      rp.dx_step(i, c) = run[c];  // the sub-sum, bitwise
      rp.x(i + 1, c) = rp.x(i, c) + run[c];
    }
    if (e == 1) xx(0, 0) = (run[0] * run[0] - grid.dt(i)) / 2.0;  // exact scalar Ito area
  }
  return rp;
}

double chen_defect(const GridRoughPath& rp, int i, int u, int j) {
  if (!(0 <= i && i <= u && u <= j && j <= rp.intervals())) throw std::invalid_argument("chen_defect: bad triple");
  Mat xij = rp.second_level(i, j);
  Mat xiu = rp.second_level(i, u);
  Mat xuj = rp.second_level(u, j);
  std::vector<double> diu = rp.increment(i, u);
  std::vector<double> duj = rp.increment(u, j);
  double s = 0.0;
  for (int a = 0; a < rp.e(); ++a)
    for (int b = 0; b < rp.e(); ++b) s += sq(xij(a, b) - xiu(a, b) - xuj(a, b) - diu[a] * duj[b]);
  return std::sqrt(s);
}

double chen_defect_dense(const GridRoughPath& rp, const std::vector<std::vector<Mat>>& table, int i, int u, int j) {
  if (!(0 <= i && i <= u && u <= j && j <= rp.intervals())) throw std::invalid_argument("chen_defect: bad triple");
  const Mat& xij = table[i][j];
  const Mat& xiu = table[i][u];
  const Mat& xuj = table[u][j];
  std::vector<double> diu = rp.increment(i, u);
  std::vector<double> duj = rp.increment(u, j);
  double s = 0.0;
  for (int a = 0; a < rp.e(); ++a)
    for (int b = 0; b < rp.e(); ++b) s += sq(xij(a, b) - xiu(a, b) - xuj(a, b) - diu[a] * duj[b]);
  return std::sqrt(s);
}

std::vector<std::vector<Mat>> reconstruct_dense(const GridRoughPath& rp) {
  const int K = rp.intervals();
  const int e = rp.e();
  std::vector<std::vector<Mat>> table(K + 1, std::vector<Mat>(K + 1));
  for (int i = 0; i <= K; ++i) {
    Mat acc(e, e);
    std::vector<double> run(e, 0.0);
    table[i][i] = acc;
    for (int j = i; j < K; ++j) {
      if (j > i) outer_acc(acc, run, rp.dx_step.row(j));
      for (int a = 0; a < e; ++a)
        for (int b = 0; b < e; ++b) acc(a, b) += rp.xx_step[j](a, b);
      for (int c = 0; c < e; ++c) run[c] += rp.dx_step(j, c);
      table[i][j + 1] = acc;
    }
  }
  return table;
}

HolderReport holder_norms(const GridRoughPath& rp, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("holder_norms: alpha must be in (0,1]");
  rp.validate();
  const int K = rp.intervals();
  const int e = rp.e();
  const std::vector<int> idx = sup_index_set(K);

  HolderReport rep;
  // Row sweep keeps the Chen reconstruction incremental: O(K^2 e^2) total.
  for (int ii = 0; ii < static_cast<int>(idx.size()); ++ii) {
    const int i = idx[ii];
    Mat acc(e, e);
    std::vector<double> run(e, 0.0);
    std::size_t next = ii + 1;
    for (int j = i + 1; j <= K; ++j) {
      if (j - 1 > i) outer_acc(acc, run, rp.dx_step.row(j - 1));
      for (int a = 0; a < e; ++a)
        for (int b = 0; b < e; ++b) acc(a, b) += rp.xx_step[j - 1](a, b);
      for (int c = 0; c < e; ++c) run[c] += rp.dx_step(j - 1, c);
      const bool consecutive = (j == i + 1);
      const bool in_set = next < idx.size() && idx[next] == j;
      if (in_set) ++next;
      if (!in_set && !consecutive) continue;
      const double gap = rp.grid.t(j) - rp.grid.t(i);
      rep.dx_alpha = std::max(rep.dx_alpha, norm2(run) / std::pow(gap, alpha));
      rep.xx_2alpha = std::max(rep.xx_2alpha, norm2(acc.a) / std::pow(gap, 2.0 * alpha));
    }
  }
  rep.triple_norm = rep.dx_alpha + std::sqrt(rep.xx_2alpha);
  return rep;
}

double rp_distance(const GridRoughPath& rp, const GridRoughPath& rp_bar, double alpha, double alpha_prime) {
  require_same_grid(rp.grid, rp_bar.grid, "rp_distance");
  if (rp.e() != rp_bar.e()) throw std::invalid_argument("rp_distance: dimension mismatch");
  const int K = rp.intervals();
  const int e = rp.e();
  const std::vector<int> idx = sup_index_set(K);

  double sup_dx = 0.0, sup_xx = 0.0;
  for (int ii = 0; ii < static_cast<int>(idx.size()); ++ii) {
    const int i = idx[ii];
    Mat acc(e, e), acc_bar(e, e);
    std::vector<double> run(e, 0.0), run_bar(e, 0.0);
    std::size_t next = ii + 1;
    for (int j = i + 1; j <= K; ++j) {
      if (j - 1 > i) {
        outer_acc(acc, run, rp.dx_step.row(j - 1));
        outer_acc(acc_bar, run_bar, rp_bar.dx_step.row(j - 1));
      }
      for (int a = 0; a < e; ++a)
        for (int b = 0; b < e; ++b) {
          acc(a, b) += rp.xx_step[j - 1](a, b);
          acc_bar(a, b) += rp_bar.xx_step[j - 1](a, b);
        }
      for (int c = 0; c < e; ++c) {
        run[c] += rp.dx_step(j - 1, c);
        run_bar[c] += rp_bar.dx_step(j - 1, c);
      }
      const bool consecutive = (j == i + 1);
      const bool in_set = next < idx.size() && idx[next] == j;
      if (in_set) ++next;
      if (!in_set && !consecutive) continue;
      const double gap = rp.grid.t(j) - rp.grid.t(i);
      double ddx = 0.0, dxx = 0.0;
      for (int c = 0; c < e; ++c) ddx += sq(run[c] - run_bar[c]);
      for (int a = 0; a < e; ++a)
        for (int b = 0; b < e; ++b) dxx += sq(acc(a, b) - acc_bar(a, b));
      sup_dx = std::max(sup_dx, std::sqrt(ddx) / std::pow(gap, alpha));
      sup_xx = std::max(sup_xx, std::sqrt(dxx) / std::pow(gap, alpha + alpha_prime));
    }
  }
  return sup_dx + sup_xx;
}

GridRoughPath coarsen(const GridRoughPath& rp, std::span<const int> indices) {
  if (indices.size() < 2 || indices.front() != 0 || indices.back() != rp.intervals())
    throw std::invalid_argument("coarsen: indices must start at 0 and end at K");
  for (std::size_t k = 0; k + 1 < indices.size(); ++k) {
    if (!(indices[k] < indices[k + 1])) throw std::invalid_argument("coarsen: indices not strictly increasing");
  }
  GridRoughPath out;
  out.alpha_hint = rp.alpha_hint;
  out.grid.times.resize(indices.size());
  out.x = Mat(static_cast<int>(indices.size()), rp.e());
  out.dx_step = Mat(static_cast<int>(indices.size()) - 1, rp.e());
  out.xx_step.reserve(indices.size() - 1);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out.grid.times[k] = rp.grid.t(indices[k]);
    for (int c = 0; c < rp.e(); ++c) out.x(static_cast<int>(k), c) = rp.x(indices[k], c);
  }
  for (std::size_t k = 0; k + 1 < indices.size(); ++k) {
    const std::vector<double> dx = rp.increment(indices[k], indices[k + 1]);
    for (int c = 0; c < rp.e(); ++c) out.dx_step(static_cast<int>(k), c) = dx[c];
    out.xx_step.push_back(rp.second_level(indices[k], indices[k + 1]));
  }
  return out;
}

void write_text(const GridRoughPath& rp, std::ostream& os) {
  const int K = rp.intervals();
  os << rp.e() << ' ' << K << ' ' << fmt17(rp.alpha_hint) << '\n';
  for (int i = 0; i <= K; ++i) {
    os << fmt17(rp.grid.t(i));
    for (int c = 0; c < rp.e(); ++c) os << ' ' << fmt17(rp.x(i, c));
    os << '\n';
  }
  for (int i = 0; i < K; ++i) {
    os << join17(rp.xx_step[i].a) << '\n';
  }
}

GridRoughPath read_text(std::istream& is) {
  int e = 0, K = 0;
  double alpha = 0.0;
  if (!(is >> e >> K >> alpha)) throw std::runtime_error("rough path text: bad header");
  if (e < 1 || K < 1) throw std::runtime_error("rough path text: bad dimensions");
  GridRoughPath rp;
  rp.alpha_hint = alpha;
  rp.grid.times.resize(K + 1);
  rp.x = Mat(K + 1, e);
  rp.dx_step = Mat(K, e);
  rp.xx_step.assign(K, Mat(e, e));
  for (int i = 0; i <= K; ++i) {
    if (!(is >> rp.grid.times[i])) throw std::runtime_error("rough path text: truncated grid row");
    for (int c = 0; c < e; ++c)
      if (!(is >> rp.x(i, c))) throw std::runtime_error("rough path text: truncated first level");
  }
  // increments re-derived from the stored first level
  for (int i = 0; i < K; ++i)
    for (int c = 0; c < e; ++c) rp.dx_step(i, c) = rp.x(i + 1, c) - rp.x(i, c);
  for (int i = 0; i < K; ++i) {
    for (double& v : rp.xx_step[i].a)
      if (!(is >> v)) throw std::runtime_error("rough path text: truncated second level");
  }
  rp.validate();
  return rp;
}

void save_text(const GridRoughPath& rp, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  write_text(rp, os);
}

GridRoughPath load_text(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for read: " + path);
  return read_text(is);
}

}  // namespace rmkv::rough
