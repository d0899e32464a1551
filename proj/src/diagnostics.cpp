#include "rmkv/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "rmkv/util.hpp"

namespace rmkv::diag {

namespace {

constexpr int kExhaustivePairLimit = 4096;

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

// Max of fn(i, j) over the retained grid pairs (strided set plus all
// consecutive pairs).
template <typename Fn>
double sup_over_pairs(int K, Fn&& fn) {
  const std::vector<int> idx = sup_index_set(K);
  double sup = 0.0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) sup = std::max(sup, fn(idx[a], idx[b]));
  }
  if (static_cast<int>(idx.size()) != K + 1) {
    for (int i = 0; i < K; ++i) sup = std::max(sup, fn(i, i + 1));
  }
  return sup;
}

double powm(double base, double q) { return std::pow(base, q); }

// moment norm of a scratch vector of sample magnitudes
double moment_of_magnitudes(std::span<const double> mags, double q) {
  if (mags.empty()) throw std::invalid_argument("moment_norm: empty sample set");
  if (q < 0.0) throw std::invalid_argument("moment_norm: q must be >= 0");
  double acc = 0.0;
  if (q == 0.0) {
    for (double v : mags) acc += std::min(v, 1.0);
    return acc / mags.size();
  }
  for (double v : mags) acc += powm(v, q);
  acc /= mags.size();
  return (q > 1.0) ? powm(acc, 1.0 / q) : acc;
}

}  // namespace

double moment_norm(const Mat& samples, double q) {
  std::vector<double> mags(samples.rows);
  for (int i = 0; i < samples.rows; ++i) mags[i] = norm2(samples.row(i));
  return moment_of_magnitudes(mags, q);
}

double moment_norm(std::span<const double> scalar_samples, double q) {
  std::vector<double> mags(scalar_samples.size());
  for (std::size_t i = 0; i < scalar_samples.size(); ++i) mags[i] = std::abs(scalar_samples[i]);
  return moment_of_magnitudes(mags, q);
}

double holder_seminorm_Lm(const std::vector<Mat>& paths, const TimeGrid& grid, double beta, double m) {
  if (paths.empty()) throw std::invalid_argument("holder_seminorm_Lm: no paths");
  if (!(m >= 1.0)) throw std::invalid_argument("holder_seminorm_Lm: m must be >= 1");
  const int K = grid.intervals();
  const int dim = paths.front().cols;
  for (const Mat& p : paths) {
    if (p.rows != K + 1 || p.cols != dim) throw std::invalid_argument("holder_seminorm_Lm: path shape mismatch");
  }
  std::vector<double> mags(paths.size());
  return sup_over_pairs(K, [&](int i, int j) {
    for (std::size_t s = 0; s < paths.size(); ++s) {
      double acc = 0.0;
      for (int c = 0; c < dim; ++c) acc += sq(paths[s](j, c) - paths[s](i, c));
      mags[s] = std::sqrt(acc);
    }
    return moment_of_magnitudes(mags, m) / std::pow(grid.t(j) - grid.t(i), beta);
  });
}

double conditional_remainder(const std::function<std::vector<double>(int k)>& resolver, int k_cont) {
  if (k_cont < 2) throw std::invalid_argument("conditional_remainder: need at least 2 continuations");
  std::vector<double> mean;
  for (int k = 0; k < k_cont; ++k) {
    std::vector<double> r = resolver(k);
    if (mean.empty()) mean.assign(r.size(), 0.0);
    if (r.size() != mean.size()) throw std::runtime_error("conditional_remainder: resolver dimension changed");
    for (std::size_t c = 0; c < r.size(); ++c) mean[c] += r[c];
  }
  for (double& v : mean) v /= k_cont;
  return norm2(mean);
}

namespace {

// f-kernel process F^j_i = f(t_i, Y^j_i, mu_i), one (d*e)-row per particle
// and time; mu_i is the run's own empirical measure at t_i.
std::vector<Mat> fhat_process(const mkv::MkvRun& run, const coeffs::CoefficientSet& cs) {
  const int K = run.grid.intervals();
  const int N = run.particles();
  std::vector<Mat> out(K + 1, Mat(N, cs.f.value_size));
  for (int i = 0; i <= K; ++i) {
    coeffs::EmpiricalMeasure mu(run.history[i]);
    for (int j = 0; j < N; ++j) coeffs::eval_field(cs.f, run.grid.t(i), run.history[i].row(j), mu, out[i].row(j));
  }
  return out;
}

struct PairNormScratch {
  std::vector<double> mags;
};

}  // namespace

std::map<std::string, double> StabilityReport::as_map() const {
  return {
      {"lhs_sup_diff_m", lhs_sup_diff_m},
      {"lhs_y_norm", lhs_y_norm},
      {"lhs_fy_seminorm", lhs_fy_seminorm},
      {"lhs_remainder", lhs_remainder},
      {"lhs_total", lhs_total},
      {"rhs_xi_p", rhs_xi_p},
      {"rhs_rho", rhs_rho},
      {"rhs_b_sup", rhs_b_sup},
      {"rhs_sigma_sup", rhs_sigma_sup},
      {"rhs_f_dist", rhs_f_dist},
      {"rhs_total", rhs_total},
      {"ratio", ratio},
      {"controlled_distance", controlled_distance},
  };
}

std::string StabilityReport::to_json() const {
  std::ostringstream os;
  os << "{\n";
  const auto m = as_map();
  std::size_t i = 0;
  for (const auto& [key, value] : m) {
    os << "  \"" << key << "\": " << fmt17(value);
    if (++i != m.size()) os << ',';
    os << '\n';
  }
  os << "}\n";
  return os.str();
}

std::string StabilityReport::to_csv_row(bool with_header) const {
  const auto m = as_map();
  std::ostringstream os;
  if (with_header) {
    std::size_t i = 0;
    for (const auto& [key, value] : m) {
      (void)value;
      os << key;
      if (++i != m.size()) os << ',';
    }
    os << '\n';
  }
  std::size_t i = 0;
  for (const auto& [key, value] : m) {
    (void)key;
    os << fmt17(value);
    if (++i != m.size()) os << ',';
  }
  os << '\n';
  return os.str();
}

StabilityReport stability_report(const mkv::MkvRun& run_a, const coeffs::CoefficientSet& cs_a,
                                 const mkv::MkvRun& run_b, const coeffs::CoefficientSet& cs_b,
                                 const StabilityParams& params) {
  require_same_grid(run_a.grid, run_b.grid, "stability_report");
  if (run_a.particles() != run_b.particles()) throw std::invalid_argument("stability_report: particle counts differ");
  const int K = run_a.grid.intervals();
  const int N = run_a.particles();
  const int d = run_a.d();
  const double m = params.m;

  StabilityReport rep;

  // || sup_t |dY_{0,t} - dYbar_{0,t}| ||_m
  {
    std::vector<double> sups(N, 0.0);
    for (int i = 1; i <= K; ++i) {
      for (int j = 0; j < N; ++j) {
        double acc = 0.0;
        for (int c = 0; c < d; ++c) {
          const double da = run_a.history[i](j, c) - run_a.history[0](j, c);
          const double db = run_b.history[i](j, c) - run_b.history[0](j, c);
          acc += sq(da - db);
        }
        sups[j] = std::max(sups[j], std::sqrt(acc));
      }
    }
    rep.lhs_sup_diff_m = moment_of_magnitudes(sups, m);
  }

  std::vector<double> mags(N);
  auto diff_pair_norm = [&](int i, int j, double expo) {
    for (int s = 0; s < N; ++s) {
      double acc = 0.0;
      for (int c = 0; c < d; ++c) {
        const double da = run_a.history[j](s, c) - run_a.history[i](s, c);
        const double db = run_b.history[j](s, c) - run_b.history[i](s, c);
        acc += sq(da - db);
      }
      mags[s] = std::sqrt(acc);
    }
    return moment_of_magnitudes(mags, m) / std::pow(run_a.grid.t(j) - run_a.grid.t(i), expo);
  };

  // sup_t ||Y - Ybar||_m
  double sup_level = 0.0;
  for (int i = 0; i <= K; ++i) {
    for (int s = 0; s < N; ++s) mags[s] = dist2(run_a.history[i].row(s), run_b.history[i].row(s));
    sup_level = std::max(sup_level, moment_of_magnitudes(mags, m));
  }
  const double dy_alpha = sup_over_pairs(K, [&](int i, int j) { return diff_pair_norm(i, j, params.alpha); });
  rep.lhs_y_norm = sup_level + dy_alpha;

  // Gubinelli-derivative process distance and remainder distance.
  const std::vector<Mat> fa = fhat_process(run_a, cs_a);
  const std::vector<Mat> fb = fhat_process(run_b, cs_b);
  const int fsize = cs_a.f.value_size;

  auto f_pair_norm = [&](int i, int j, double expo) {
    for (int s = 0; s < N; ++s) {
      double acc = 0.0;
      for (int c = 0; c < fsize; ++c) {
        const double da = fa[j](s, c) - fa[i](s, c);
        const double db = fb[j](s, c) - fb[i](s, c);
        acc += sq(da - db);
      }
      mags[s] = std::sqrt(acc);
    }
    return moment_of_magnitudes(mags, m) / std::pow(run_a.grid.t(j) - run_a.grid.t(i), expo);
  };
  rep.lhs_fy_seminorm = sup_over_pairs(K, [&](int i, int j) { return f_pair_norm(i, j, params.beta); });

  const int e = run_a.driver.e();
  auto remainder_pair_norm = [&](int i, int j, double expo) {
    const std::vector<double> dxa = run_a.driver.increment(i, j);
    const std::vector<double> dxb = run_b.driver.increment(i, j);
    for (int s = 0; s < N; ++s) {
      double acc = 0.0;
      for (int c = 0; c < d; ++c) {
        double ra = run_a.history[j](s, c) - run_a.history[i](s, c);
        double rb = run_b.history[j](s, c) - run_b.history[i](s, c);
        for (int a = 0; a < e; ++a) {
          ra -= fa[i](s, c * e + a) * dxa[a];
          rb -= fb[i](s, c * e + a) * dxb[a];
        }
        acc += sq(ra - rb);
      }
      mags[s] = std::sqrt(acc);
    }
    return moment_of_magnitudes(mags, m) / std::pow(run_a.grid.t(j) - run_a.grid.t(i), expo);
  };
  rep.lhs_remainder = sup_over_pairs(K, [&](int i, int j) { return remainder_pair_norm(i, j, params.alpha + params.beta); });

  rep.lhs_total = rep.lhs_sup_diff_m + rep.lhs_y_norm + rep.lhs_fy_seminorm + rep.lhs_remainder;

  // Right-hand side. Initial condition distance in the p-metric:
  {
    Mat diff(N, d);
    for (int s = 0; s < N; ++s)
      for (int c = 0; c < d; ++c) diff(s, c) = run_a.history[0](s, c) - run_b.history[0](s, c);
    rep.rhs_xi_p = moment_norm(diff, params.p);
  }
  rep.rhs_rho = rough::rp_distance(run_a.driver, run_b.driver, params.alpha, params.beta);

  // Coefficient sup distances on a probe lattice plus visited states, against
  // the runs' own measures (finite surrogate of the sup over W x P_q).
  {
    const ProbeConfig& pc = params.probes;
    std::vector<std::vector<double>> probes;
    for (int c = 0; c < pc.resolution; ++c) {
      const double v = pc.lo + (pc.hi - pc.lo) * (pc.resolution == 1 ? 0.5 : static_cast<double>(c) / (pc.resolution - 1));
      std::vector<double> y(d, v);
      probes.push_back(std::move(y));
    }
    for (int i = 0; i <= K; i += std::max(1, pc.time_stride)) {
      for (int s = 0; s < N; s += std::max(1, pc.atom_stride)) {
        probes.emplace_back(run_a.history[i].row(s).begin(), run_a.history[i].row(s).end());
      }
    }

    auto slot_sup = [&](const coeffs::Kernel& ka, const coeffs::Kernel& kb) {
      double sup = 0.0;
      std::vector<double> va(ka.value_size), vb(kb.value_size);
      for (int i = 0; i <= K; i += std::max(1, pc.time_stride)) {
        const double t = run_a.grid.t(i);
        coeffs::EmpiricalMeasure mu_a(run_a.history[i]);
        coeffs::EmpiricalMeasure mu_b(run_b.history[i]);
        for (const auto& y : probes) {
          for (const coeffs::EmpiricalMeasure* mu : {&mu_a, &mu_b}) {
            coeffs::eval_field(ka, t, y, *mu, va);
            coeffs::eval_field(kb, t, y, *mu, vb);
            sup = std::max(sup, dist2(va, vb));
          }
        }
      }
      return sup;
    };
    rep.rhs_b_sup = slot_sup(cs_a.b, cs_b.b);
    rep.rhs_sigma_sup = slot_sup(cs_a.sigma, cs_b.sigma);

    // (f, f') distance: field values, first derivatives and the f' slot.
    double fd = slot_sup(cs_a.f, cs_b.f) + slot_sup(cs_a.fprime, cs_b.fprime);
    {
      std::vector<double> da(static_cast<std::size_t>(cs_a.f.value_size) * d);
      std::vector<double> dbv(da.size());
      double sup = 0.0;
      for (const auto& y : probes) {
        coeffs::EmpiricalMeasure mu_a(run_a.history[0]);
        for (int s = 0; s < N; s += std::max(1, pc.atom_stride)) {
          cs_a.f.d1h(run_a.grid.t(0), y, mu_a.atom(s), da);
          cs_b.f.d1h(run_a.grid.t(0), y, mu_a.atom(s), dbv);
          sup = std::max(sup, dist2(da, dbv));
          cs_a.f.d2h(run_a.grid.t(0), y, mu_a.atom(s), da);
          cs_b.f.d2h(run_a.grid.t(0), y, mu_a.atom(s), dbv);
          sup = std::max(sup, dist2(da, dbv));
        }
      }
      fd += sup;
    }
    rep.rhs_f_dist = fd;
  }

  rep.rhs_total = rep.rhs_xi_p + rep.rhs_rho + rep.rhs_b_sup + rep.rhs_sigma_sup + rep.rhs_f_dist;
  rep.ratio = (rep.lhs_total == 0.0 && rep.rhs_total == 0.0) ? 0.0
              : (rep.rhs_total == 0.0 ? std::numeric_limits<double>::infinity() : rep.lhs_total / rep.rhs_total);

  // Controlled-rough-path composite distance at (beta, beta').
  {
    double sup_f_level = 0.0;
    for (int i = 0; i <= K; ++i) {
      for (int s = 0; s < N; ++s) mags[s] = dist2(fa[i].row(s), fb[i].row(s));
      sup_f_level = std::max(sup_f_level, moment_of_magnitudes(mags, m));
    }
    const double dz = sup_level + sup_over_pairs(K, [&](int i, int j) { return diff_pair_norm(i, j, params.beta); });
    const double dzp =
        sup_f_level + sup_over_pairs(K, [&](int i, int j) { return f_pair_norm(i, j, params.beta_prime); });
    const double drem =
        sup_over_pairs(K, [&](int i, int j) { return remainder_pair_norm(i, j, params.beta + params.beta_prime); });
    rep.controlled_distance = dz + dzp + drem;
  }
  return rep;
}

RunDiagnostics diagnose_run(const mkv::MkvRun& run, const coeffs::CoefficientSet& cs, double alpha, double beta,
                            double m, std::span<const double> qs) {
  const int K = run.grid.intervals();
  const int N = run.particles();
  const int d = run.d();
  const int e = run.driver.e();

  RunDiagnostics out;
  out.driver = rough::holder_norms(run.driver, alpha);

  std::vector<Mat> paths(N, Mat(K + 1, d));
  for (int i = 0; i <= K; ++i)
    for (int j = 0; j < N; ++j)
      for (int c = 0; c < d; ++c) paths[j](i, c) = run.history[i](j, c);
  out.holder_Lm = holder_seminorm_Lm(paths, run.grid, beta, m);

  const std::vector<Mat> fv = fhat_process(run, cs);
  out.remainder_norm = sup_over_pairs(K, [&](int i, int j) {
    const std::vector<double> dx = run.driver.increment(i, j);
    std::vector<double> mean(d, 0.0);
    for (int s = 0; s < N; ++s) {
      for (int c = 0; c < d; ++c) {
        double r = run.history[j](s, c) - run.history[i](s, c);
        for (int a = 0; a < e; ++a) r -= fv[i](s, c * e + a) * dx[a];
        mean[c] += r;
      }
    }
    for (double& v : mean) v /= N;
    return norm2(mean) / std::pow(run.grid.t(j) - run.grid.t(i), alpha + beta);
  });

  for (double q : qs) out.moment_norms["q=" + fmt17(q)] = moment_norm(run.history[K], q);
  return out;
}

std::string RunDiagnostics::to_json() const {
  std::ostringstream os;
  os << "{\n";
  os << "  \"driver_dx_alpha\": " << fmt17(driver.dx_alpha) << ",\n";
  os << "  \"driver_xx_2alpha\": " << fmt17(driver.xx_2alpha) << ",\n";
  os << "  \"driver_triple_norm\": " << fmt17(driver.triple_norm) << ",\n";
  os << "  \"holder_Lm\": " << fmt17(holder_Lm) << ",\n";
  os << "  \"remainder_norm\": " << fmt17(remainder_norm);
  for (const auto& [key, value] : moment_norms) os << ",\n  \"moment_" << key << "\": " << fmt17(value);
  os << "\n}\n";
  return os.str();
}

}  // namespace rmkv::diag
