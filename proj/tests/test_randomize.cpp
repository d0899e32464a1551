#include <doctest.h>

#include <cmath>
#include <vector>

#include "rmkv/randomize.hpp"
#include "rmkv/rng.hpp"
#include "rmkv/sampling.hpp"
#include "test_helpers.hpp"

using namespace rmkv;

namespace {

coeffs::CoefficientSet mixing_cs(int d, int e, int eb) {
  coeffs::CoefficientSet cs;
  cs.d = d;
  cs.e = e;
  cs.eb = eb;
  cs.b = coeffs::make_kernel("smooth_attract", d, d, 0.5);
  cs.sigma = coeffs::make_kernel("constant", d, d * eb, 1.0, {0.3});
  cs.f = coeffs::make_kernel("smooth_attract", d, d * e, 0.6);
  cs.fprime = coeffs::make_kernel("zero", d, d * e * e);
  return cs;
}

Mat equispaced_atoms(int n, int d, double lo, double hi) {
  Mat m(n, d);
  for (int j = 0; j < n; ++j)
    for (int c = 0; c < d; ++c) m(j, c) = (n == 1) ? 0.5 * (lo + hi) : lo + (hi - lo) * j / (n - 1.0);
  return m;
}

}  // namespace

TEST_CASE("common tape: coarser views aggregate the same path") {
  const TimeGrid grid = uniform_grid(1.0, 4);
  auto tape = rnd::sample_common_tape(grid, 2, 7, 0, 8);
  const auto fine = tape.at_resolution(8);
  const auto coarse = tape.at_resolution(2);
  for (int i = 0; i < 4; ++i)
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) {
        double s = 0.0;
        for (int g = 0; g < 4; ++g) s += fine[((i * 8) + r * 4 + g) * 2 + c];
        CHECK(coarse[((i * 2) + r) * 2 + c] == doctest::Approx(s).epsilon(1e-15));
      }
  CHECK_THROWS_AS(tape.at_resolution(3), std::invalid_argument);
}

TEST_CASE("sample_common_lift: scalar exact area, forced-zero degenerate") {
  const TimeGrid grid = uniform_grid(1.0, 1);
  auto tape = rnd::sample_common_tape(grid, 1, 3, 0, 1);
  auto rp = rnd::sample_common_lift(tape, 1);
  const double dw = tape.fine[0];
  CHECK(rp.xx_step[0](0, 0) == (dw * dw - 1.0) / 2.0);

  tape.fine[0] = 0.0;  // degenerate: forced-zero increment
  auto rp0 = rnd::sample_common_lift(tape, 1);
  CHECK(rp0.xx_step[0](0, 0) == -0.5);
}

TEST_CASE("sample_common_lift: multi-d area equals an independent sub-grid sum") {
  const TimeGrid grid = uniform_grid(1.0, 2);
  const int R = 16, e = 2;
  auto tape = rnd::sample_common_tape(grid, e, 9, 0, R);
  auto rp = rnd::sample_common_lift(tape, R);
  for (int i = 0; i < 2; ++i) {
    double pos[2] = {0, 0}, xx[2][2] = {{0, 0}, {0, 0}};
    for (int r = 0; r < R; ++r) {
      const double* d = tape.fine.data() + ((static_cast<std::size_t>(i) * R) + r) * e;
      for (int a = 0; a < e; ++a)
        for (int b = 0; b < e; ++b) xx[a][b] += pos[a] * d[b];
      pos[0] += d[0];
      pos[1] += d[1];
    }
    for (int a = 0; a < e; ++a)
      for (int b = 0; b < e; ++b) CHECK(rp.xx_step[i](a, b) == doctest::Approx(xx[a][b]).epsilon(1e-13));
  }
}

TEST_CASE("classical solver with f = 0 reduces to Euler-Maruyama") {
  const int K = 8, N = 1;
  const TimeGrid grid = uniform_grid(1.0, K);
  coeffs::CoefficientSet cs = mixing_cs(1, 1, 1);
  cs.f = coeffs::make_kernel("zero", 1, 1);
  Mat initial = equispaced_atoms(N, 1, 0.2, 0.2);
  auto db = make_brownian_tapes(grid, 1, 4, 0, N);
  auto tape = rnd::sample_common_tape(grid, 1, 5, 0, 1);
  auto run = rnd::classical_common_noise_solver(cs, initial, db, tape, 1);

  double y = 0.2;
  for (int i = 0; i < K; ++i) {
    // single-particle self-measure: the attract drift tanh(y-y) vanishes
    y = y + 0.3 * db[0](i, 0);
    CHECK(run.history[i + 1](0, 0) == doctest::Approx(y).epsilon(1e-14));
  }
}

TEST_CASE("scalar W: rough and classical pipelines agree bitwise") {
  const int K = 12, N = 6;
  const TimeGrid grid = uniform_grid(1.0, K);
  coeffs::CoefficientSet cs = mixing_cs(1, 1, 1);
  Mat initial = equispaced_atoms(N, 1, -0.5, 0.5);

  rnd::RandomizationConfig rc;
  rc.samples = 4;
  rc.rough_resolution = 4;
  rc.classical_resolution = 4;  // equal resolutions: identical tapes
  rc.r_fine = 4;
  rc.master_seed = 77;
  auto rr = rnd::run_randomization(cs, initial, grid, rc);
  REQUIRE(rr.rough_runs.size() == 4);
  for (int s = 0; s < 4; ++s)
    for (int i = 0; i <= K; ++i)
      for (int j = 0; j < N; ++j) CHECK(rr.rough_runs[s].history[i](j, 0) == rr.classical_runs[s].history[i](j, 0));

  // and conditional_law_compare sees exact zeros, for every test function
  for (const auto& id : rnd::test_function_ids()) {
    auto lc = rnd::conditional_law_compare(rr.rough_runs, rr.classical_runs, rnd::make_test_function(id), K);
    CHECK(lc.max_delta == 0.0);
    CHECK(lc.mean_delta == 0.0);
  }
}

TEST_CASE("phi = 1 gives zero discrepancy regardless of resolutions") {
  const int K = 6, N = 4;
  const TimeGrid grid = uniform_grid(1.0, K);
  coeffs::CoefficientSet cs = mixing_cs(2, 2, 1);
  Mat initial = equispaced_atoms(N, 2, -0.4, 0.4);
  rnd::RandomizationConfig rc;
  rc.samples = 2;
  rc.rough_resolution = 2;
  rc.classical_resolution = 8;
  rc.r_fine = 8;
  rc.master_seed = 5;
  auto rr = rnd::run_randomization(cs, initial, grid, rc);
  auto lc = rnd::conditional_law_compare(rr.rough_runs, rr.classical_runs, rnd::make_test_function("one"), K);
  CHECK(lc.max_delta == 0.0);

  // unequal area resolutions do produce a gap for a real test function
  auto lc2 = rnd::conditional_law_compare(rr.rough_runs, rr.classical_runs, rnd::make_test_function("tanh_first"), K);
  CHECK(lc2.max_delta > 0.0);
}

TEST_CASE("conditional means are functions of the W tape (soft band)") {
  const int K = 8, N = 64;
  const TimeGrid grid = uniform_grid(1.0, K);
  coeffs::CoefficientSet cs = mixing_cs(1, 1, 1);
  Mat initial = equispaced_atoms(N, 1, -0.5, 0.5);
  const auto phi = rnd::make_test_function("tanh_first");

  // same W tape, two independent B tape families
  auto tape = rnd::sample_common_tape(grid, 1, 11, 0, 1);
  int violations = 0;
  double band = 0.0;
  std::vector<double> means;
  for (std::uint64_t bseed : {100ull, 200ull, 300ull, 400ull}) {
    auto db = make_brownian_tapes(grid, 1, bseed, 0, N);
    auto run = rnd::classical_common_noise_solver(cs, initial, db, tape, 1);
    double mean = 0.0, var = 0.0;
    for (int j = 0; j < N; ++j) mean += phi(run.history[K].row(j));
    mean /= N;
    for (int j = 0; j < N; ++j) var += sq(phi(run.history[K].row(j)) - mean);
    var /= N;
    band = std::max(band, 3.0 * std::sqrt(var / N));
    means.push_back(mean);
  }
  for (std::size_t a = 0; a + 1 < means.size(); ++a)
    if (std::abs(means[a] - means[a + 1]) > 2.0 * band) ++violations;
  CHECK(violations == 0);
}

TEST_CASE("randomization runs are reproducible from the master seed") {
  const int K = 4, N = 3;
  const TimeGrid grid = uniform_grid(1.0, K);
  coeffs::CoefficientSet cs = mixing_cs(1, 1, 1);
  Mat initial = equispaced_atoms(N, 1, -0.3, 0.3);
  rnd::RandomizationConfig rc;
  rc.samples = 3;
  rc.rough_resolution = 2;
  rc.classical_resolution = 2;
  rc.r_fine = 2;
  rc.master_seed = 123;
  auto r1 = rnd::run_randomization(cs, initial, grid, rc);
  auto r2 = rnd::run_randomization(cs, initial, grid, rc);
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i <= K; ++i)
      for (int j = 0; j < N; ++j) {
        CHECK(r1.rough_runs[s].history[i](j, 0) == r2.rough_runs[s].history[i](j, 0));
        CHECK(r1.classical_runs[s].history[i](j, 0) == r2.classical_runs[s].history[i](j, 0));
      }
}

TEST_CASE("test function library") {
  const std::vector<double> y = {0.3, -0.8};
  CHECK(rnd::make_test_function("one")(y) == 1.0);
  CHECK(rnd::make_test_function("tanh_first")(y) == doctest::Approx(std::tanh(0.3)).epsilon(1e-15));
  CHECK(rnd::make_test_function("cos_sum")(y) == doctest::Approx(std::cos(-0.5)).epsilon(1e-15));
  CHECK(rnd::make_test_function("norm_capped")(y) <= 1.0);
  CHECK_THROWS_AS(rnd::make_test_function("nope"), std::invalid_argument);
}
