#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rmkv {

// Time grid t_0 < t_1 < ... < t_K.
struct TimeGrid {
  std::vector<double> times;

  int intervals() const { return static_cast<int>(times.size()) - 1; }
  int points() const { return static_cast<int>(times.size()); }
  double t(int i) const { return times[i]; }
  double dt(int i) const { return times[i + 1] - times[i]; }
  double horizon() const { return times.back() - times.front(); }

  bool strictly_increasing() const {
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
      if (!(times[i] < times[i + 1])) return false;
    }
    return true;
  }
};

inline TimeGrid uniform_grid(double T, int K, double t0 = 0.0) {
  if (K < 1) throw std::invalid_argument("grid needs K >= 1 intervals");
  if (!(T > t0)) throw std::invalid_argument("grid needs T > t0");
  TimeGrid g;
  g.times.resize(K + 1);
  for (int i = 0; i <= K; ++i) g.times[i] = t0 + (T - t0) * static_cast<double>(i) / K;
  g.times[K] = T;
  return g;
}

inline void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* what) {
  if (a.times != b.times) throw std::invalid_argument(std::string(what) + ": time grids differ");
}

}  // namespace rmkv
