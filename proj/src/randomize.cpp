#include "rmkv/randomize.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rmkv/rng.hpp"
#include "rmkv/sampling.hpp"

namespace rmkv::rnd {

std::vector<double> CommonNoiseTape::at_resolution(int r) const {
  if (r < 1 || r_fine % r != 0) throw std::invalid_argument("tape: resolution must divide r_fine");
  const int K = grid.intervals();
  const int group = r_fine / r;
  std::vector<double> out(static_cast<std::size_t>(K) * r * e, 0.0);
  for (int i = 0; i < K; ++i)
    for (int rr = 0; rr < r; ++rr)
      for (int g = 0; g < group; ++g) {
        const double* src = fine.data() + (static_cast<std::size_t>(i) * r_fine + rr * group + g) * e;
        double* dst = out.data() + (static_cast<std::size_t>(i) * r + rr) * e;
        for (int c = 0; c < e; ++c) dst[c] += src[c];
      }
  return out;
}

CommonNoiseTape sample_common_tape(const TimeGrid& grid, int e, std::uint64_t master_seed, std::uint64_t sample_index,
                                   int r_fine) {
  if (r_fine < 1) throw std::invalid_argument("sample_common_tape: r_fine must be >= 1");
  CommonNoiseTape tape;
  tape.grid = grid;
  tape.e = e;
  tape.r_fine = r_fine;
  const int K = grid.intervals();
  tape.fine.resize(static_cast<std::size_t>(K) * r_fine * e);
  RngStream rng(master_seed, StreamKind::common_noise, sample_index);
  for (int i = 0; i < K; ++i) {
    const double sd = std::sqrt(grid.dt(i) / r_fine);
    for (int r = 0; r < r_fine; ++r)
      for (int c = 0; c < e; ++c) tape.fine[(static_cast<std::size_t>(i) * r_fine + r) * e + c] = rng.normal(sd);
  }
  return tape;
}

rough::GridRoughPath sample_common_lift(const CommonNoiseTape& tape, int sub_resolution, double alpha_hint) {
  const std::vector<double> inc = tape.at_resolution(sub_resolution);
  return rough::ito_lift(inc, tape.grid, tape.e, sub_resolution, alpha_hint);
}

mkv::MkvRun classical_common_noise_solver(const coeffs::CoefficientSet& cs, const Mat& initial,
                                          const std::vector<Mat>& db, const CommonNoiseTape& tape, int sub_resolution,
                                          int threads) {
  const int K = tape.grid.intervals();
  const int e = tape.e;
  const int R = sub_resolution;
  const std::vector<double> inc = tape.at_resolution(R);

  // Per-interval common-noise increment and area correction. Scalar W uses
  // the exact identity A = (dW^2 - dt)/2; otherwise A is the left-point sum
  // over the sub-grid. Same arithmetic order as the Ito lift, so pipelines
  // agree bitwise at equal resolutions.
  rough::GridRoughPath drv;
  drv.grid = tape.grid;
  drv.alpha_hint = 0.5;
  drv.x = Mat(K + 1, e);
  drv.dx_step = Mat(K, e);
  drv.xx_step.assign(K, Mat(e, e));
  std::vector<double> run(e, 0.0);
  for (int i = 0; i < K; ++i) {
    Mat& area = drv.xx_step[i];
    vec_fill(run, 0.0);
    for (int r = 0; r < R; ++r) {
      const double* sub = inc.data() + (static_cast<std::size_t>(i) * R + r) * e;
      if (e > 1) {
        for (int a = 0; a < e; ++a)
          for (int b = 0; b < e; ++b) area(a, b) += run[a] * sub[b];
      }
      for (int c = 0; c < e; ++c) run[c] += sub[c];
    }
    for (int c = 0; c < e; ++c) {
      drv.dx_step(i, c) = run[c];
      drv.x(i + 1, c) = drv.x(i, c) + run[c];
    }
    if (e == 1) area(0, 0) = (run[0] * run[0] - tape.grid.dt(i)) / 2.0;
  }

  mkv::MkvProblem prob;
  prob.cs = cs;
  prob.rp = std::move(drv);
  prob.initial = initial;
  prob.db = db;
  prob.threads = threads;
  return mkv::simulate_direct(prob);
}

TestFunction make_test_function(const std::string& id) {
  if (id == "one") return [](std::span<const double>) { return 1.0; };
  if (id == "tanh_first") return [](std::span<const double> y) { return std::tanh(y[0]); };
  if (id == "cos_sum")
    return [](std::span<const double> y) {
      double s = 0.0;
      for (double v : y) s += v;
      return std::cos(s);
    };
  if (id == "norm_capped") return [](std::span<const double> y) { return std::min(norm2(y), 1.0); };
  throw std::invalid_argument("unknown test function id: " + id);
}

const std::vector<std::string>& test_function_ids() {
  static const std::vector<std::string> ids = {"one", "tanh_first", "cos_sum", "norm_capped"};
  return ids;
}

LawComparison conditional_law_compare(const std::vector<mkv::MkvRun>& rough_runs,
                                      const std::vector<mkv::MkvRun>& classical_runs, const TestFunction& phi,
                                      int time_index) {
  if (rough_runs.size() != classical_runs.size())
    throw std::invalid_argument("conditional_law_compare: sample counts differ");
  if (rough_runs.empty()) throw std::invalid_argument("conditional_law_compare: no samples");

  LawComparison out;
  double sum = 0.0;
  for (std::size_t s = 0; s < rough_runs.size(); ++s) {
    const Mat& ya = rough_runs[s].history.at(time_index);
    const Mat& yb = classical_runs[s].history.at(time_index);
    if (ya.rows != yb.rows) throw std::invalid_argument("conditional_law_compare: particle counts differ");
    double ma = 0.0, mb = 0.0;
    for (int j = 0; j < ya.rows; ++j) {
      ma += phi(ya.row(j));
      mb += phi(yb.row(j));
    }
    ma /= ya.rows;
    mb /= yb.rows;
    SampleComparison sc;
    sc.sample = static_cast<int>(s);
    sc.rough_mean = ma;
    sc.classical_mean = mb;
    sc.delta = std::abs(ma - mb);
    out.max_delta = std::max(out.max_delta, sc.delta);
    sum += sc.delta;
    out.samples.push_back(sc);
  }
  out.mean_delta = sum / rough_runs.size();
  return out;
}

RandomizationRun run_randomization(const coeffs::CoefficientSet& cs, const Mat& initial, const TimeGrid& grid,
                                   const RandomizationConfig& cfg, int threads) {
  if (cfg.samples < 1) throw std::invalid_argument("randomization: need at least one sample");
  int r_fine = cfg.r_fine;
  if (r_fine == 0) r_fine = std::lcm(cfg.rough_resolution, cfg.classical_resolution);
  if (r_fine % cfg.rough_resolution != 0 || r_fine % cfg.classical_resolution != 0)
    throw std::invalid_argument("randomization: r_fine must be divisible by both resolutions");

  RandomizationRun out;
  const int N = initial.rows;
  for (int s = 0; s < cfg.samples; ++s) {
    CommonNoiseTape tape = sample_common_tape(grid, cs.e, cfg.master_seed, static_cast<std::uint64_t>(s), r_fine);
    std::vector<Mat> db = make_brownian_tapes(grid, cs.eb, cfg.master_seed, static_cast<std::uint64_t>(s), N);

    rough::GridRoughPath lift = sample_common_lift(tape, cfg.rough_resolution);
    mkv::MkvProblem prob;
    prob.cs = cs;
    prob.rp = std::move(lift);
    prob.initial = initial;
    prob.db = db;
    prob.threads = threads;
    out.rough_runs.push_back(mkv::simulate_direct(prob));

    out.classical_runs.push_back(classical_common_noise_solver(cs, initial, db, tape, cfg.classical_resolution, threads));
  }
  return out;
}

}  // namespace rmkv::rnd
