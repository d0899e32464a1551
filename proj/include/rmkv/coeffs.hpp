#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rmkv/tensor.hpp"

namespace rmkv::coeffs {

// Kernel-form measure field: the field value at (t, y, mu) is the average of
// h(t, y, .) over the atoms of mu. Codomains are flattened row-major;
// value_size is d for drift, d*eb for sigma, d*e for f and d*e*e for f'.
// Derivative layouts put the differentiation index last:
//   d1h/d2h out[c*d + k] = d h_c / d (y|z)_k.
struct Kernel {
  using Fn = std::function<void(double t, std::span<const double> y, std::span<const double> z, std::span<double> out)>;

  std::string id;
  int dim = 0;         // state dimension d of y and z
  int value_size = 0;  // flattened codomain size
  double bound = std::numeric_limits<double>::infinity();
  Fn h;
  Fn d1h;  // derivative in y
  Fn d2h;  // derivative in z

  bool is_zero() const { return id == "zero"; }
};

// N uniformly weighted atoms in R^d. Construction fixes the canonical
// reduction order (atoms sorted lexicographically); every measure average in
// this module sums in that order, which makes evaluations exactly invariant
// under atom permutations and bitwise reproducible.
struct EmpiricalMeasure {
  Mat atoms;               // N x d
  std::vector<int> order;  // canonical (sorted) traversal of atom indices

  EmpiricalMeasure() = default;
  explicit EmpiricalMeasure(Mat atoms_in);

  int size() const { return atoms.rows; }
  int dim() const { return atoms.cols; }
  std::span<const double> atom(int j) const { return atoms.row(j); }
};

// The four coefficient slots of one equation. Dimensions: state d, rough
// driver e, Brownian driver eb. fprime may be the zero kernel.
struct CoefficientSet {
  int d = 0;
  int e = 0;
  int eb = 0;
  Kernel b;        // value_size d
  Kernel sigma;    // value_size d*eb
  Kernel f;        // value_size d*e
  Kernel fprime;   // value_size d*e*e, flat (i*e+u)*e+v

  void validate() const;
};

// (1/N) sum_j h(t, y, z_j), canonical order.
void eval_field(const Kernel& k, double t, std::span<const double> y, const EmpiricalMeasure& mu,
                std::span<double> out);
std::vector<double> eval_field(const Kernel& k, double t, std::span<const double> y, const EmpiricalMeasure& mu);

// Empirical directional measure derivative (1/N) sum_j D2h(t,y,z_j) eta_j,
// one direction vector per atom (indexed like the atoms).
void eval_D2(const Kernel& k, double t, std::span<const double> y, const EmpiricalMeasure& mu, const Mat& directions,
             std::span<double> out);
std::vector<double> eval_D2(const Kernel& k, double t, std::span<const double> y, const EmpiricalMeasure& mu,
                            const Mat& directions);

// Per-measure precomputation for the second-level coefficient: the mean field
// evaluated at every atom, m(z_i) = (1/N) sum_j h_f(t, z_i, z_j), flat N x
// (d*e) indexed by original atom index. Costs O(N^2) once per measure and is
// shared across all query points.
Mat flow_derivative_at_atoms(const CoefficientSet& cs, double t, const EmpiricalMeasure& mu, int threads = 1);

// Second-level coefficient
//   G(y,mu) = D1f(y,mu) . f(y,mu) + (1/N) sum_i D2h_f(y,z_i) . m(z_i) + f'(y,mu)
// flat d*e*e with G[(i*e+u)*e+v] contracting against XX[u*e+v]; the first
// term has components sum_k d1f^i_{v,k} fhat^k_u.
void second_level_coeff(const CoefficientSet& cs, double t, std::span<const double> y, const EmpiricalMeasure& mu,
                        const Mat& m_at_atoms, std::span<double> out);
// Convenience overload running the precomputation itself (O(N^2) per call).
std::vector<double> second_level_coeff(const CoefficientSet& cs, double t, std::span<const double> y,
                                       const EmpiricalMeasure& mu);

// |eval_field(y,mu) - eval_field(y, pi.mu)|; zero exactly under the canonical
// reduction order, for any permutation pi.
double permutation_check(const Kernel& k, double t, std::span<const double> y, const EmpiricalMeasure& mu,
                         std::span<const int> permutation);

// Built-in kernel library. Ids: zero, constant, mean_shift, smooth_attract,
// product_sin, mean_tanh, state_linear. `scale` multiplies h; `value` supplies
// the constant kernel (scalar broadcast onto the leading diagonal, or a full
// flat list of length value_size).
Kernel make_kernel(const std::string& id, int d, int value_size, double scale = 1.0,
                   const std::vector<double>& value = {});

// Names of ids accepted by make_kernel.
const std::vector<std::string>& kernel_library_ids();

// Generic code-level field hook: the value is a direct function of (t, y, mu)
// and may depend nonlinearly on the measure, which averaging kernels cannot
// express. Derivatives come from centered finite differences (state slot and
// atom-shift measure slot); second measure derivatives are outside its
// contract and are not represented anywhere in this module.
struct GenericField {
  int dim = 0;
  int value_size = 0;
  double fd_eps = 1e-6;
  std::function<void(double t, std::span<const double> y, const EmpiricalMeasure& mu, std::span<double> out)> value;
};

std::vector<double> eval_generic(const GenericField& f, double t, std::span<const double> y,
                                 const EmpiricalMeasure& mu);
// centered FD in y; flat value_size x d, derivative index last
std::vector<double> eval_generic_D1(const GenericField& f, double t, std::span<const double> y,
                                    const EmpiricalMeasure& mu);
// centered FD along the atom direction family (one d-vector per atom)
std::vector<double> eval_generic_D2(const GenericField& f, double t, std::span<const double> y,
                                    const EmpiricalMeasure& mu, const Mat& directions);

// Full second-level coefficient for a generic f-field (value_size d*e):
//   G = D1f . f + D2f[m] + fprime,  m(z_j) = f(z_j, mu),
// with the same flat layout and contraction convention as the kernel path.
// fprime may be null.
std::vector<double> second_level_generic(const GenericField& f, const GenericField* fprime, int e, double t,
                                         std::span<const double> y, const EmpiricalMeasure& mu);

// Wrap a kernel as a generic hook (used to cross-check the two routes).
GenericField generic_from_kernel(const Kernel& k);

}  // namespace rmkv::coeffs
