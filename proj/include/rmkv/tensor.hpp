#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace rmkv {

// Dense row-major matrix. Rows/cols are runtime sizes; state and noise
// dimensions in this library are small (typically 1..4), particle and grid
// dimensions are the large ones.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  std::span<double> row(int r) { return {a.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {a.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline double sq(double x) { return x * x; }

// Euclidean norm of a flat value (vectors and flattened matrices/tensors
// alike; all norms in this library are Euclidean/Frobenius).
inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double dist2(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += sq(u[i] - v[i]);
  return std::sqrt(s);
}

inline void vec_add_scaled(std::span<double> acc, std::span<const double> v, double c) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c * v[i];
}

inline void vec_scale(std::span<double> v, double c) {
  for (double& x : v) x *= c;
}

inline void vec_fill(std::span<double> v, double c) {
  for (double& x : v) x = c;
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// out_i += M_{i,c} * x_c with M given flat row-major (n_rows x n_cols).
inline void matvec_acc(std::span<double> out, std::span<const double> m_flat, std::span<const double> x, int n_rows,
                       int n_cols) {
  for (int i = 0; i < n_rows; ++i) {
    double s = 0.0;
    for (int c = 0; c < n_cols; ++c) s += m_flat[static_cast<std::size_t>(i) * n_cols + c] * x[c];
    out[i] += s;
  }
}

// out_i += sum_{u,v} G_{i,u,v} * A_{u,v}. G flat as (i*e+u)*e+v, A flat u*e+v.
inline void ten3_contract_acc(std::span<double> out, std::span<const double> g_flat, std::span<const double> a_flat,
                              int d, int e) {
  const int ee = e * e;
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    const double* gi = g_flat.data() + static_cast<std::size_t>(i) * ee;
    for (int uv = 0; uv < ee; ++uv) s += gi[uv] * a_flat[uv];
    out[i] += s;
  }
}

}  // namespace rmkv
