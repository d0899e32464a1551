#include "rmkv/coeffs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rmkv/util.hpp"

namespace rmkv::coeffs {

namespace {

bool lex_less(std::span<const double> a, std::span<const double> b) {
  for (std::size_t c = 0; c < a.size(); ++c) {
    if (a[c] < b[c]) return true;
    if (a[c] > b[c]) return false;
  }
  return false;
}

void require_dim(const Kernel& k, std::span<const double> y, const EmpiricalMeasure& mu) {
  if (static_cast<int>(y.size()) != k.dim || mu.dim() != k.dim)
    throw std::invalid_argument("kernel '" + k.id + "': dimension mismatch");
  if (mu.size() < 1) throw std::invalid_argument("empirical measure must have at least one atom");
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(Mat atoms_in) : atoms(std::move(atoms_in)) {
  if (atoms.rows < 1) throw std::invalid_argument("empirical measure needs N >= 1 atoms");
  if (!all_finite(atoms.a)) throw std::invalid_argument("empirical measure atoms must be finite");
  order.resize(atoms.rows);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return lex_less(atoms.row(i), atoms.row(j)); });
}

void CoefficientSet::validate() const {
  if (d < 1 || e < 1 || eb < 1) throw std::invalid_argument("coefficient set: dimensions must be >= 1");
  auto check = [&](const Kernel& k, int want, const char* slot) {
    if (k.dim != d) throw std::invalid_argument(std::string("coefficient set: ") + slot + " state dim mismatch");
    if (k.value_size != want) throw std::invalid_argument(std::string("coefficient set: ") + slot + " codomain mismatch");
  };
  check(b, d, "b");
  check(sigma, d * eb, "sigma");
  check(f, d * e, "f");
  check(fprime, d * e * e, "fprime");
}

void eval_field(const Kernel& k, double t, std::span<const double> y, const EmpiricalMeasure& mu,
                std::span<double> out) {
  require_dim(k, y, mu);
  if (static_cast<int>(out.size()) != k.value_size) throw std::invalid_argument("eval_field: bad output size");
  vec_fill(out, 0.0);
  std::vector<double> buf(k.value_size);
  for (int j : mu.order) {
    k.h(t, y, mu.atom(j), buf);
    for (int c = 0; c < k.value_size; ++c) out[c] += buf[c];
  }
  vec_scale(out, 1.0 / mu.size());
}

std::vector<double> eval_field(const Kernel& k, double t, std::span<const double> y, const EmpiricalMeasure& mu) {
  std::vector<double> out(k.value_size);
  eval_field(k, t, y, mu, out);
  return out;
}

void eval_D2(const Kernel& k, double t, std::span<const double> y, const EmpiricalMeasure& mu, const Mat& directions,
             std::span<double> out) {
  require_dim(k, y, mu);
  if (directions.rows != mu.size() || directions.cols != k.dim)
    throw std::invalid_argument("eval_D2: one direction per atom required");
  if (static_cast<int>(out.size()) != k.value_size) throw std::invalid_argument("eval_D2: bad output size");
  vec_fill(out, 0.0);
  std::vector<double> dz(static_cast<std::size_t>(k.value_size) * k.dim);
  for (int j : mu.order) {
    k.d2h(t, y, mu.atom(j), dz);
    std::span<const double> eta = directions.row(j);
    for (int c = 0; c < k.value_size; ++c) {
      double s = 0.0;
      for (int kk = 0; kk < k.dim; ++kk) s += dz[static_cast<std::size_t>(c) * k.dim + kk] * eta[kk];
      out[c] += s;
    }
  }
  vec_scale(out, 1.0 / mu.size());
}

std::vector<double> eval_D2(const Kernel& k, double t, std::span<const double> y, const EmpiricalMeasure& mu,
                            const Mat& directions) {
  std::vector<double> out(k.value_size);
  eval_D2(k, t, y, mu, directions, out);
  return out;
}

Mat flow_derivative_at_atoms(const CoefficientSet& cs, double t, const EmpiricalMeasure& mu, int threads) {
  const int N = mu.size();
  Mat m(N, cs.f.value_size);
  parallel_for(N, threads, [&](int i) { eval_field(cs.f, t, mu.atom(i), mu, m.row(i)); });
  return m;
}

void second_level_coeff(const CoefficientSet& cs, double t, std::span<const double> y, const EmpiricalMeasure& mu,
                        const Mat& m_at_atoms, std::span<double> out) {
  const int d = cs.d, e = cs.e;
  if (static_cast<int>(out.size()) != d * e * e) throw std::invalid_argument("second_level_coeff: bad output size");
  if (m_at_atoms.rows != mu.size() || m_at_atoms.cols != d * e)
    throw std::invalid_argument("second_level_coeff: per-atom mean field has wrong shape");
  vec_fill(out, 0.0);

  // fhat = f(y,mu), d1 = mean of D1h_f(y,.), both single O(N) passes.
  std::vector<double> fhat = eval_field(cs.f, t, y, mu);
  std::vector<double> d1(static_cast<std::size_t>(d) * e * d, 0.0);
  {
    std::vector<double> buf(d1.size());
    for (int j : mu.order) {
      cs.f.d1h(t, y, mu.atom(j), buf);
      for (std::size_t c = 0; c < d1.size(); ++c) d1[c] += buf[c];
    }
    vec_scale(d1, 1.0 / mu.size());
  }

  // G^i_{uv} += sum_k d1f^i_{v,k} fhat^k_u
  for (int i = 0; i < d; ++i)
    for (int u = 0; u < e; ++u)
      for (int v = 0; v < e; ++v) {
        double s = 0.0;
        for (int k = 0; k < d; ++k)
          s += d1[(static_cast<std::size_t>(i) * e + v) * d + k] * fhat[static_cast<std::size_t>(k) * e + u];
        out[(static_cast<std::size_t>(i) * e + u) * e + v] += s;
      }

  // G^i_{uv} += (1/N) sum_j sum_k D2h_f(y,z_j)^i_{v,k} m(z_j)^k_u
  {
    std::vector<double> dz(static_cast<std::size_t>(d) * e * d);
    std::vector<double> acc(static_cast<std::size_t>(d) * e * e, 0.0);
    for (int j : mu.order) {
      cs.f.d2h(t, y, mu.atom(j), dz);
      std::span<const double> mj = m_at_atoms.row(j);
      for (int i = 0; i < d; ++i)
        for (int u = 0; u < e; ++u)
          for (int v = 0; v < e; ++v) {
            double s = 0.0;
            for (int k = 0; k < d; ++k)
              s += dz[(static_cast<std::size_t>(i) * e + v) * d + k] * mj[static_cast<std::size_t>(k) * e + u];
            acc[(static_cast<std::size_t>(i) * e + u) * e + v] += s;
          }
    }
    for (std::size_t c = 0; c < acc.size(); ++c) out[c] += acc[c] / mu.size();
  }

  if (!cs.fprime.is_zero()) {
    std::vector<double> fp = eval_field(cs.fprime, t, y, mu);
    for (std::size_t c = 0; c < fp.size(); ++c) out[c] += fp[c];
  }
}

std::vector<double> second_level_coeff(const CoefficientSet& cs, double t, std::span<const double> y,
                                       const EmpiricalMeasure& mu) {
  Mat m = flow_derivative_at_atoms(cs, t, mu);
  std::vector<double> out(static_cast<std::size_t>(cs.d) * cs.e * cs.e);
  second_level_coeff(cs, t, y, mu, m, out);
  return out;
}

double permutation_check(const Kernel& k, double t, std::span<const double> y, const EmpiricalMeasure& mu,
                         std::span<const int> permutation) {
  if (static_cast<int>(permutation.size()) != mu.size())
    throw std::invalid_argument("permutation_check: permutation size mismatch");
  Mat permuted(mu.size(), mu.dim());
  for (int j = 0; j < mu.size(); ++j) {
    std::span<const double> src = mu.atom(permutation[j]);
    for (int c = 0; c < mu.dim(); ++c) permuted(j, c) = src[c];
  }
  EmpiricalMeasure mu_pi(std::move(permuted));
  std::vector<double> a = eval_field(k, t, y, mu);
  std::vector<double> b = eval_field(k, t, y, mu_pi);
  return dist2(a, b);
}

namespace {

using Span = std::span<const double>;
using Out = std::span<double>;

// Vector-style kernels broadcast their per-state-component value across the
// trailing noise indices of matrix/tensor codomains; value_size must be a
// multiple of d for those ids.
int broadcast_width(const std::string& id, int d, int value_size) {
  if (value_size % d != 0)
    throw std::invalid_argument("kernel '" + id + "': codomain size must be a multiple of the state dimension");
  return value_size / d;
}

}  // namespace

Kernel make_kernel(const std::string& id, int d, int value_size, double scale, const std::vector<double>& value) {
  Kernel k;
  k.id = id;
  k.dim = d;
  k.value_size = value_size;

  if (id == "zero") {
    k.bound = 0.0;
    k.h = [](double, Span, Span, Out out) { vec_fill(out, 0.0); };
    k.d1h = [](double, Span, Span, Out out) { vec_fill(out, 0.0); };
    k.d2h = k.d1h;
    return k;
  }

  if (id == "constant") {
    std::vector<double> c(value_size, 0.0);
    if (static_cast<int>(value.size()) == value_size) {
      c = value;
    } else if (value.size() == 1 || value.empty()) {
      // scalar broadcast onto the leading diagonal of the codomain
      const double v = value.empty() ? 1.0 : value[0];
      const int w = value_size / d;
      for (int i = 0; i < d; ++i) {
        const int col = (w > 0) ? std::min(i, w - 1) : 0;
        c[static_cast<std::size_t>(i) * w + col] = v;
      }
    } else {
      throw std::invalid_argument("constant kernel: value must be scalar or full codomain");
    }
    for (double& x : c) x *= scale;
    double bound = norm2(c);
    k.bound = bound;
    k.h = [c](double, Span, Span, Out out) { std::copy(c.begin(), c.end(), out.begin()); };
    k.d1h = [](double, Span, Span, Out out) { vec_fill(out, 0.0); };
    k.d2h = k.d1h;
    return k;
  }

  const int width = broadcast_width(id, d, value_size);

  if (id == "mean_shift") {  // h(y,z) = scale * z, broadcast across columns
    k.bound = std::numeric_limits<double>::infinity();
    k.h = [d, width, scale](double, Span, Span z, Out out) {
      for (int i = 0; i < d; ++i)
        for (int w = 0; w < width; ++w) out[static_cast<std::size_t>(i) * width + w] = scale * z[i];
    };
    k.d1h = [](double, Span, Span, Out out) { vec_fill(out, 0.0); };
    k.d2h = [d, width, scale](double, Span, Span, Out out) {
      vec_fill(out, 0.0);
      for (int i = 0; i < d; ++i)
        for (int w = 0; w < width; ++w) out[(static_cast<std::size_t>(i) * width + w) * d + i] = scale;
    };
    return k;
  }

  if (id == "state_linear") {  // h(y,z) = scale * y, broadcast across columns
    k.bound = std::numeric_limits<double>::infinity();
    k.h = [d, width, scale](double, Span y, Span, Out out) {
      for (int i = 0; i < d; ++i)
        for (int w = 0; w < width; ++w) out[static_cast<std::size_t>(i) * width + w] = scale * y[i];
    };
    k.d1h = [d, width, scale](double, Span, Span, Out out) {
      vec_fill(out, 0.0);
      for (int i = 0; i < d; ++i)
        for (int w = 0; w < width; ++w) out[(static_cast<std::size_t>(i) * width + w) * d + i] = scale;
    };
    k.d2h = [](double, Span, Span, Out out) { vec_fill(out, 0.0); };
    return k;
  }

  if (id == "smooth_attract") {  // h(y,z) = scale * tanh(z - y) componentwise
    k.bound = std::abs(scale) * std::sqrt(static_cast<double>(value_size));
    k.h = [d, width, scale](double, Span y, Span z, Out out) {
      for (int i = 0; i < d; ++i) {
        const double v = scale * std::tanh(z[i] - y[i]);
        for (int w = 0; w < width; ++w) out[static_cast<std::size_t>(i) * width + w] = v;
      }
    };
    k.d1h = [d, width, scale](double, Span y, Span z, Out out) {
      vec_fill(out, 0.0);
      for (int i = 0; i < d; ++i) {
        const double th = std::tanh(z[i] - y[i]);
        const double dv = -scale * (1.0 - th * th);
        for (int w = 0; w < width; ++w) out[(static_cast<std::size_t>(i) * width + w) * d + i] = dv;
      }
    };
    k.d2h = [d, width, scale](double, Span y, Span z, Out out) {
      vec_fill(out, 0.0);
      for (int i = 0; i < d; ++i) {
        const double th = std::tanh(z[i] - y[i]);
        const double dv = scale * (1.0 - th * th);
        for (int w = 0; w < width; ++w) out[(static_cast<std::size_t>(i) * width + w) * d + i] = dv;
      }
    };
    return k;
  }

  if (id == "product_sin") {  // h(y,z) = scale * sin(y_i) sin(z_i) componentwise
    k.bound = std::abs(scale) * std::sqrt(static_cast<double>(value_size));
    k.h = [d, width, scale](double, Span y, Span z, Out out) {
      for (int i = 0; i < d; ++i) {
        const double v = scale * std::sin(y[i]) * std::sin(z[i]);
        for (int w = 0; w < width; ++w) out[static_cast<std::size_t>(i) * width + w] = v;
      }
    };
    k.d1h = [d, width, scale](double, Span y, Span z, Out out) {
      vec_fill(out, 0.0);
      for (int i = 0; i < d; ++i) {
        const double dv = scale * std::cos(y[i]) * std::sin(z[i]);
        for (int w = 0; w < width; ++w) out[(static_cast<std::size_t>(i) * width + w) * d + i] = dv;
      }
    };
    k.d2h = [d, width, scale](double, Span y, Span z, Out out) {
      vec_fill(out, 0.0);
      for (int i = 0; i < d; ++i) {
        const double dv = scale * std::sin(y[i]) * std::cos(z[i]);
        for (int w = 0; w < width; ++w) out[(static_cast<std::size_t>(i) * width + w) * d + i] = dv;
      }
    };
    return k;
  }

  if (id == "mean_tanh") {  // h(y,z) = scale * tanh(z), no y dependence
    k.bound = std::abs(scale) * std::sqrt(static_cast<double>(value_size));
    k.h = [d, width, scale](double, Span, Span z, Out out) {
      for (int i = 0; i < d; ++i) {
        const double v = scale * std::tanh(z[i]);
        for (int w = 0; w < width; ++w) out[static_cast<std::size_t>(i) * width + w] = v;
      }
    };
    k.d1h = [](double, Span, Span, Out out) { vec_fill(out, 0.0); };
    k.d2h = [d, width, scale](double, Span, Span z, Out out) {
      vec_fill(out, 0.0);
      for (int i = 0; i < d; ++i) {
        const double th = std::tanh(z[i]);
        const double dv = scale * (1.0 - th * th);
        for (int w = 0; w < width; ++w) out[(static_cast<std::size_t>(i) * width + w) * d + i] = dv;
      }
    };
    return k;
  }

  throw std::invalid_argument("unknown kernel id: " + id);
}


std::vector<double> eval_generic(const GenericField& f, double t, std::span<const double> y,
                                 const EmpiricalMeasure& mu) {
  if (static_cast<int>(y.size()) != f.dim || mu.dim() != f.dim)
    throw std::invalid_argument("generic field: dimension mismatch");
  std::vector<double> out(f.value_size);
  f.value(t, y, mu, out);
  return out;
}

std::vector<double> eval_generic_D1(const GenericField& f, double t, std::span<const double> y,
                                    const EmpiricalMeasure& mu) {
  std::vector<double> out(static_cast<std::size_t>(f.value_size) * f.dim);
  std::vector<double> yp(y.begin(), y.end()), ym(y.begin(), y.end());
  std::vector<double> vp(f.value_size), vm(f.value_size);
  for (int k = 0; k < f.dim; ++k) {
    yp[k] = y[k] + f.fd_eps;
    ym[k] = y[k] - f.fd_eps;
    f.value(t, yp, mu, vp);
    f.value(t, ym, mu, vm);
    for (int c = 0; c < f.value_size; ++c)
      out[static_cast<std::size_t>(c) * f.dim + k] = (vp[c] - vm[c]) / (2.0 * f.fd_eps);
    yp[k] = y[k];
    ym[k] = y[k];
  }
  return out;
}

std::vector<double> eval_generic_D2(const GenericField& f, double t, std::span<const double> y,
                                    const EmpiricalMeasure& mu, const Mat& directions) {
  if (directions.rows != mu.size() || directions.cols != f.dim)
    throw std::invalid_argument("generic field: one direction per atom required");
  Mat plus = mu.atoms, minus = mu.atoms;
  for (int j = 0; j < mu.size(); ++j)
    for (int c = 0; c < f.dim; ++c) {
      plus(j, c) += f.fd_eps * directions(j, c);
      minus(j, c) -= f.fd_eps * directions(j, c);
    }
  std::vector<double> vp(f.value_size), vm(f.value_size);
  f.value(t, y, EmpiricalMeasure(plus), vp);
  f.value(t, y, EmpiricalMeasure(minus), vm);
  std::vector<double> out(f.value_size);
  for (int c = 0; c < f.value_size; ++c) out[c] = (vp[c] - vm[c]) / (2.0 * f.fd_eps);
  return out;
}

std::vector<double> second_level_generic(const GenericField& f, const GenericField* fprime, int e, double t,
                                         std::span<const double> y, const EmpiricalMeasure& mu) {
  const int d = f.dim;
  if (f.value_size != d * e) throw std::invalid_argument("second_level_generic: f codomain must be d*e");
  std::vector<double> out(static_cast<std::size_t>(d) * e * e, 0.0);

  const std::vector<double> fhat = eval_generic(f, t, y, mu);
  const std::vector<double> d1 = eval_generic_D1(f, t, y, mu);
  for (int i = 0; i < d; ++i)
    for (int u = 0; u < e; ++u)
      for (int v = 0; v < e; ++v) {
        double s = 0.0;
        for (int k = 0; k < d; ++k)
          s += d1[(static_cast<std::size_t>(i) * e + v) * d + k] * fhat[static_cast<std::size_t>(k) * e + u];
        out[(static_cast<std::size_t>(i) * e + u) * e + v] += s;
      }

  // m(z_j) = f(z_j, mu), one FD directional derivative per noise column
  Mat m(mu.size(), d * e);
  for (int j = 0; j < mu.size(); ++j) {
    const std::vector<double> v = eval_generic(f, t, mu.atom(j), mu);
    for (int c = 0; c < d * e; ++c) m(j, c) = v[c];
  }
  Mat dirs(mu.size(), d);
  for (int u = 0; u < e; ++u) {
    for (int j = 0; j < mu.size(); ++j)
      for (int k = 0; k < d; ++k) dirs(j, k) = m(j, static_cast<std::size_t>(k) * e + u);
    const std::vector<double> slice = eval_generic_D2(f, t, y, mu, dirs);  // [i,v] slice
    for (int i = 0; i < d; ++i)
      for (int v = 0; v < e; ++v)
        out[(static_cast<std::size_t>(i) * e + u) * e + v] += slice[static_cast<std::size_t>(i) * e + v];
  }

  if (fprime != nullptr) {
    if (fprime->value_size != d * e * e) throw std::invalid_argument("second_level_generic: fprime codomain");
    const std::vector<double> fp = eval_generic(*fprime, t, y, mu);
    for (std::size_t c = 0; c < fp.size(); ++c) out[c] += fp[c];
  }
  return out;
}

GenericField generic_from_kernel(const Kernel& k) {
  GenericField g;
  g.dim = k.dim;
  g.value_size = k.value_size;
  g.value = [k](double t, std::span<const double> y, const EmpiricalMeasure& mu, std::span<double> out) {
    eval_field(k, t, y, mu, out);
  };
  return g;
}

const std::vector<std::string>& kernel_library_ids() {
  static const std::vector<std::string> ids = {"zero",        "constant",    "mean_shift", "smooth_attract",
                                               "product_sin", "mean_tanh",   "state_linear"};
  return ids;
}

}  // namespace rmkv::coeffs
