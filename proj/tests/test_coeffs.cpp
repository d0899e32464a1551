#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "rmkv/coeffs.hpp"
#include "rmkv/rng.hpp"
#include "test_helpers.hpp"

using namespace rmkv;
using coeffs::EmpiricalMeasure;
using coeffs::Kernel;

namespace {

// centered finite difference of eval_field in the measure slot
std::vector<double> fd_measure_derivative(const Kernel& k, double t, std::span<const double> y,
                                          const EmpiricalMeasure& mu, const Mat& dirs, double eps) {
  Mat plus = mu.atoms, minus = mu.atoms;
  for (int j = 0; j < mu.size(); ++j)
    for (int c = 0; c < mu.dim(); ++c) {
      plus(j, c) += eps * dirs(j, c);
      minus(j, c) -= eps * dirs(j, c);
    }
  const std::vector<double> fp = coeffs::eval_field(k, t, y, EmpiricalMeasure(plus));
  const std::vector<double> fm = coeffs::eval_field(k, t, y, EmpiricalMeasure(minus));
  std::vector<double> out(k.value_size);
  for (int c = 0; c < k.value_size; ++c) out[c] = (fp[c] - fm[c]) / (2.0 * eps);
  return out;
}

double rel_err(std::span<const double> got, std::span<const double> want) {
  const double diff = dist2(got, want);
  const double scale = norm2(want);
  if (diff == 0.0) return 0.0;  // covers 0/0
  return diff / std::max(scale, 1e-12);
}

}  // namespace

TEST_CASE("eval_field: empirical mean and constants") {
  Kernel mean = coeffs::make_kernel("mean_shift", 1, 1);
  Mat atoms(2, 1);
  atoms(0, 0) = 1.0;
  atoms(1, 0) = 3.0;
  EmpiricalMeasure mu(atoms);
  const std::vector<double> y = {0.7};
  CHECK(coeffs::eval_field(mean, 0.0, y, mu)[0] == 2.0);

  Kernel c = coeffs::make_kernel("constant", 1, 1, 1.0, {4.25});
  CHECK(coeffs::eval_field(c, 0.0, y, mu)[0] == 4.25);

  // naive loop oracle on a generic smooth kernel, h(y,z) = sin(y+z)
  Kernel sinsum;
  sinsum.id = "sin_sum_test";
  sinsum.dim = 1;
  sinsum.value_size = 1;
  sinsum.h = [](double, std::span<const double> yy, std::span<const double> z, std::span<double> out) {
    out[0] = std::sin(yy[0] + z[0]);
  };
  sinsum.d1h = [](double, std::span<const double> yy, std::span<const double> z, std::span<double> out) {
    out[0] = std::cos(yy[0] + z[0]);
  };
  sinsum.d2h = sinsum.d1h;
  Mat ratoms = testing::random_atoms(5, 1, 11);
  EmpiricalMeasure rmu(ratoms);
  double naive = 0.0;
  for (int j = 0; j < 5; ++j) naive += std::sin(y[0] + ratoms(j, 0));
  naive /= 5.0;
  CHECK(coeffs::eval_field(sinsum, 0.0, y, rmu)[0] == doctest::Approx(naive).epsilon(1e-14));
}

TEST_CASE("eval_field: dimension errors") {
  Kernel mean = coeffs::make_kernel("mean_shift", 2, 2);
  Mat atoms(3, 1);
  EmpiricalMeasure mu(atoms);
  const std::vector<double> y = {0.0, 0.0};
  CHECK_THROWS_AS(coeffs::eval_field(mean, 0.0, y, mu), std::invalid_argument);
}

TEST_CASE("eval_D2: linear functional and z-independence") {
  Kernel mean = coeffs::make_kernel("mean_shift", 1, 1);
  Mat atoms = testing::random_atoms(6, 1, 3);
  EmpiricalMeasure mu(atoms);
  Mat dirs(6, 1);
  for (int j = 0; j < 6; ++j) dirs(j, 0) = -1.75;  // same direction v for all atoms
  const std::vector<double> y = {0.4};
  CHECK(coeffs::eval_D2(mean, 0.0, y, mu, dirs)[0] == doctest::Approx(-1.75).epsilon(1e-15));

  Kernel ystate = coeffs::make_kernel("state_linear", 1, 1);
  CHECK(coeffs::eval_D2(ystate, 0.0, y, mu, dirs)[0] == 0.0);

  Mat bad(5, 1);
  CHECK_THROWS_AS(coeffs::eval_D2(mean, 0.0, y, mu, bad), std::invalid_argument);
}

TEST_CASE("eval_D2: matches centered finite differences") {
  const double eps = 1e-6;
  RngStream rng(17);
  for (const char* id : {"smooth_attract", "product_sin", "mean_tanh"}) {
    Kernel k = coeffs::make_kernel(id, 2, 2 * 2, 0.8);
    for (int trial = 0; trial < 10; ++trial) {
      Mat atoms = testing::random_atoms(7, 2, rng.bits());
      EmpiricalMeasure mu(atoms);
      std::vector<double> y = {rng.normal(), rng.normal()};
      Mat dirs(7, 2);
      for (auto& v : dirs.a) v = rng.normal();
      const std::vector<double> analytic = coeffs::eval_D2(k, 0.0, y, mu, dirs);
      const std::vector<double> fd = fd_measure_derivative(k, 0.0, y, mu, dirs, eps);
      CHECK(rel_err(analytic, fd) <= 1e-4);
    }
  }
  // dense kernel too
  Kernel dense = testing::make_dense_test_kernel(2, 4, 99);
  Mat atoms = testing::random_atoms(5, 2, 1);
  EmpiricalMeasure mu(atoms);
  Mat dirs(5, 2);
  for (auto& v : dirs.a) v = rng.normal();
  const std::vector<double> y = {0.3, -0.2};
  CHECK(rel_err(coeffs::eval_D2(dense, 0.0, y, mu, dirs), fd_measure_derivative(dense, 0.0, y, mu, dirs, eps)) <= 1e-4);
}

TEST_CASE("eval_D2: linear in the direction family") {
  Kernel dense = testing::make_dense_test_kernel(2, 4, 5);
  Mat atoms = testing::random_atoms(6, 2, 8);
  EmpiricalMeasure mu(atoms);
  RngStream rng(2);
  Mat d1(6, 2), d2(6, 2), combo(6, 2);
  for (auto& v : d1.a) v = rng.normal();
  for (auto& v : d2.a) v = rng.normal();
  const double a = 0.6, b = -1.3;
  for (int i = 0; i < 6; ++i)
    for (int c = 0; c < 2; ++c) combo(i, c) = a * d1(i, c) + b * d2(i, c);
  const std::vector<double> y = {0.1, 0.2};
  const std::vector<double> left = coeffs::eval_D2(dense, 0.0, y, mu, combo);
  const std::vector<double> r1 = coeffs::eval_D2(dense, 0.0, y, mu, d1);
  const std::vector<double> r2 = coeffs::eval_D2(dense, 0.0, y, mu, d2);
  for (int c = 0; c < 4; ++c) CHECK(left[c] == doctest::Approx(a * r1[c] + b * r2[c]).epsilon(1e-12));
}

namespace {

// unfactored reference: both double sums evaluated directly at the query
std::vector<double> naive_second_level(const coeffs::CoefficientSet& cs, double t, std::span<const double> y,
                                       const EmpiricalMeasure& mu) {
  const int d = cs.d, e = cs.e, N = mu.size();
  std::vector<double> out(static_cast<std::size_t>(d) * e * e, 0.0);
  std::vector<double> d1(static_cast<std::size_t>(d) * e * d), hv(static_cast<std::size_t>(d) * e);
  std::vector<double> d2(static_cast<std::size_t>(d) * e * d), hz(static_cast<std::size_t>(d) * e);
  for (int i = 0; i < N; ++i) {
    cs.f.d1h(t, y, mu.atom(i), d1);
    cs.f.d2h(t, y, mu.atom(i), d2);
    for (int j = 0; j < N; ++j) {
      cs.f.h(t, y, mu.atom(j), hv);
      cs.f.h(t, mu.atom(i), mu.atom(j), hz);
      for (int ii = 0; ii < d; ++ii)
        for (int u = 0; u < e; ++u)
          for (int v = 0; v < e; ++v) {
            double s = 0.0;
            for (int k = 0; k < d; ++k) {
              s += d1[(static_cast<std::size_t>(ii) * e + v) * d + k] * hv[static_cast<std::size_t>(k) * e + u];
              s += d2[(static_cast<std::size_t>(ii) * e + v) * d + k] * hz[static_cast<std::size_t>(k) * e + u];
            }
            out[(static_cast<std::size_t>(ii) * e + u) * e + v] += s;
          }
    }
  }
  for (auto& v : out) v /= static_cast<double>(N) * N;
  if (!cs.fprime.is_zero()) {
    const std::vector<double> fp = coeffs::eval_field(cs.fprime, t, y, mu);
    for (std::size_t c = 0; c < fp.size(); ++c) out[c] += fp[c];
  }
  return out;
}

coeffs::CoefficientSet dense_cs(int d, int e, std::uint64_t seed, bool with_fprime = false) {
  coeffs::CoefficientSet cs;
  cs.d = d;
  cs.e = e;
  cs.eb = 1;
  cs.b = coeffs::make_kernel("zero", d, d);
  cs.sigma = coeffs::make_kernel("zero", d, d);
  cs.f = testing::make_dense_test_kernel(d, d * e, seed);
  cs.fprime = with_fprime ? testing::make_dense_test_kernel(d, d * e * e, seed + 1)
                          : coeffs::make_kernel("zero", d, d * e * e);
  return cs;
}

}  // namespace

TEST_CASE("second_level_coeff: degenerate closed forms") {
  // constant f-kernel: both derivative terms vanish
  coeffs::CoefficientSet cs;
  cs.d = 1;
  cs.e = 1;
  cs.eb = 1;
  cs.b = coeffs::make_kernel("zero", 1, 1);
  cs.sigma = coeffs::make_kernel("zero", 1, 1);
  cs.f = coeffs::make_kernel("constant", 1, 1, 1.0, {2.0});
  cs.fprime = coeffs::make_kernel("zero", 1, 1);
  Mat atoms = testing::random_atoms(4, 1, 6);
  EmpiricalMeasure mu(atoms);
  const std::vector<double> y = {0.3};
  CHECK(coeffs::second_level_coeff(cs, 0.0, y, mu)[0] == 0.0);

  // h_f(y,z) = y in one dimension: G = D1f . f = 1 * y
  cs.f = coeffs::make_kernel("state_linear", 1, 1);
  CHECK(coeffs::second_level_coeff(cs, 0.0, y, mu)[0] == doctest::Approx(y[0]).epsilon(1e-15));
}

TEST_CASE("second_level_coeff: factored form equals the naive double loop") {
  RngStream rng(31);
  for (int n : {2, 3, 8, 16}) {
    for (int trial = 0; trial < 5; ++trial) {
      coeffs::CoefficientSet cs = dense_cs(2, 2, rng.bits(), trial % 2 == 1);
      Mat atoms = testing::random_atoms(n, 2, rng.bits());
      EmpiricalMeasure mu(atoms);
      const std::vector<double> y = {rng.normal(), rng.normal()};
      const std::vector<double> fast = coeffs::second_level_coeff(cs, 0.0, y, mu);
      const std::vector<double> slow = naive_second_level(cs, 0.0, y, mu);
      for (std::size_t c = 0; c < fast.size(); ++c) CHECK(fast[c] == doctest::Approx(slow[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("permutation invariance is exact under canonical reduction") {
  RngStream rng(12);
  const int n = 12;
  Mat atoms = testing::random_atoms(n, 2, 77);
  EmpiricalMeasure mu(atoms);
  const std::vector<double> y = {0.2, -0.5};

  std::vector<int> reversal(n), identity(n);
  std::iota(identity.begin(), identity.end(), 0);
  for (int j = 0; j < n; ++j) reversal[j] = n - 1 - j;

  for (const char* id : {"mean_shift", "smooth_attract", "product_sin", "mean_tanh"}) {
    Kernel k = coeffs::make_kernel(id, 2, 2);
    CHECK(coeffs::permutation_check(k, 0.0, y, mu, identity) == 0.0);
    CHECK(coeffs::permutation_check(k, 0.0, y, mu, reversal) == 0.0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int> pi = identity;
      for (int j = n - 1; j > 0; --j) std::swap(pi[j], pi[rng.bits() % (j + 1)]);
      CHECK(coeffs::permutation_check(k, 0.0, y, mu, pi) == 0.0);
    }
  }

  // permuting atoms together with their directions leaves eval_D2 unchanged
  Kernel dense = testing::make_dense_test_kernel(2, 4, 3);
  Mat dirs(n, 2);
  for (auto& v : dirs.a) v = rng.normal();
  const std::vector<double> base = coeffs::eval_D2(dense, 0.0, y, mu, dirs);
  std::vector<int> pi = reversal;
  Mat atoms_pi(n, 2), dirs_pi(n, 2);
  for (int j = 0; j < n; ++j)
    for (int c = 0; c < 2; ++c) {
      atoms_pi(j, c) = atoms(pi[j], c);
      dirs_pi(j, c) = dirs(pi[j], c);
    }
  const std::vector<double> permuted = coeffs::eval_D2(dense, 0.0, y, EmpiricalMeasure(atoms_pi), dirs_pi);
  for (int c = 0; c < 4; ++c) CHECK(base[c] == permuted[c]);
}

TEST_CASE("kernel library: values, derivative signs, bounds") {
  Kernel att = coeffs::make_kernel("smooth_attract", 1, 1, 2.0);
  const std::vector<double> y = {0.5};
  const std::vector<double> z = {1.5};
  std::vector<double> out(1), d1(1), d2(1);
  att.h(0.0, y, z, out);
  CHECK(out[0] == doctest::Approx(2.0 * std::tanh(1.0)).epsilon(1e-15));
  att.d1h(0.0, y, z, d1);
  att.d2h(0.0, y, z, d2);
  CHECK(d1[0] < 0.0);
  CHECK(d2[0] > 0.0);
  CHECK(d1[0] == doctest::Approx(-d2[0]).epsilon(1e-15));

  // soft bound check on random probes for the bounded ids
  RngStream rng(4);
  for (const char* id : {"smooth_attract", "product_sin", "mean_tanh"}) {
    Kernel k = coeffs::make_kernel(id, 3, 3, 0.5);
    std::vector<double> vy(3), vz(3), vout(3);
    for (int trial = 0; trial < 50; ++trial) {
      for (auto& v : vy) v = rng.normal(3.0);
      for (auto& v : vz) v = rng.normal(3.0);
      k.h(0.0, vy, vz, vout);
      CHECK(norm2(vout) <= k.bound + 1e-12);
    }
  }

  CHECK_THROWS_AS(coeffs::make_kernel("no_such_kernel", 1, 1), std::invalid_argument);
}

TEST_CASE("empirical measure: validation") {
  Mat empty(0, 1);
  CHECK_THROWS_AS(EmpiricalMeasure{empty}, std::invalid_argument);
  Mat nan_atoms(2, 1);
  nan_atoms(1, 0) = std::nan("");
  CHECK_THROWS_AS(EmpiricalMeasure{nan_atoms}, std::invalid_argument);
}

TEST_CASE("generic hook: wrapping a kernel reproduces the analytic route") {
  const int d = 2, e = 2;
  coeffs::CoefficientSet cs = dense_cs(d, e, 7777, true);
  coeffs::GenericField gf = coeffs::generic_from_kernel(cs.f);
  coeffs::GenericField gfp = coeffs::generic_from_kernel(cs.fprime);
  Mat atoms = testing::random_atoms(6, d, 4242);
  EmpiricalMeasure mu(atoms);
  const std::vector<double> y = {0.2, -0.3};

  CHECK(rel_err(coeffs::eval_generic(gf, 0.0, y, mu), coeffs::eval_field(cs.f, 0.0, y, mu)) == 0.0);

  // FD derivatives against the kernel's analytic ones
  std::vector<double> d1_kernel(static_cast<std::size_t>(d) * e * d, 0.0);
  {
    std::vector<double> buf(d1_kernel.size());
    for (int j : mu.order) {
      cs.f.d1h(0.0, y, mu.atom(j), buf);
      for (std::size_t c = 0; c < buf.size(); ++c) d1_kernel[c] += buf[c];
    }
    for (auto& v : d1_kernel) v /= mu.size();
  }
  CHECK(rel_err(coeffs::eval_generic_D1(gf, 0.0, y, mu), d1_kernel) <= 1e-4);

  Mat dirs(6, d);
  RngStream rng(3);
  for (auto& v : dirs.a) v = rng.normal();
  CHECK(rel_err(coeffs::eval_generic_D2(gf, 0.0, y, mu, dirs), coeffs::eval_D2(cs.f, 0.0, y, mu, dirs)) <= 1e-4);

  CHECK(rel_err(coeffs::second_level_generic(gf, &gfp, e, 0.0, y, mu),
                coeffs::second_level_coeff(cs, 0.0, y, mu)) <= 1e-4);
}

TEST_CASE("generic hook: genuinely nonlinear measure dependence") {
  // f(y, mu) = (mean of mu)^2 is not expressible by an averaging kernel;
  // its directional derivative along eta is 2 * mean(mu) * mean(eta)
  coeffs::GenericField gf;
  gf.dim = 1;
  gf.value_size = 1;
  gf.value = [](double, std::span<const double>, const coeffs::EmpiricalMeasure& mu, std::span<double> out) {
    double mbar = 0.0;
    for (int j : mu.order) mbar += mu.atoms(j, 0);
    mbar /= mu.size();
    out[0] = mbar * mbar;
  };
  Mat atoms = testing::random_atoms(8, 1, 5050);
  EmpiricalMeasure mu(atoms);
  double mbar = 0.0;
  for (int j = 0; j < 8; ++j) mbar += atoms(j, 0);
  mbar /= 8.0;

  const std::vector<double> y = {0.0};
  CHECK(coeffs::eval_generic(gf, 0.0, y, mu)[0] == doctest::Approx(mbar * mbar).epsilon(1e-14));
  CHECK(coeffs::eval_generic_D1(gf, 0.0, y, mu)[0] == doctest::Approx(0.0).epsilon(1e-9));

  RngStream rng(6);
  Mat dirs(8, 1);
  for (auto& v : dirs.a) v = rng.normal();
  double ebar = 0.0;
  for (int j = 0; j < 8; ++j) ebar += dirs(j, 0);
  ebar /= 8.0;
  const double got = coeffs::eval_generic_D2(gf, 0.0, y, mu, dirs)[0];
  CHECK(got == doctest::Approx(2.0 * mbar * ebar).epsilon(1e-6));
}
