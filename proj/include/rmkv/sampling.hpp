#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "rmkv/grid.hpp"
#include "rmkv/rng.hpp"
#include "rmkv/tensor.hpp"

namespace rmkv {

// Idiosyncratic Brownian tapes, one K x eb matrix of N(0, dt_i) increments
// per particle. Stream identity is (master, particle, sample << 32 | j), so
// particle tapes never move when N, K or the sample count change elsewhere.
inline std::vector<Mat> make_brownian_tapes(const TimeGrid& grid, int eb, std::uint64_t master, std::uint64_t sample,
                                            int n_particles) {
  const int K = grid.intervals();
  std::vector<Mat> tapes;
  tapes.reserve(n_particles);
  for (int j = 0; j < n_particles; ++j) {
    RngStream rng(master, StreamKind::particle, (sample << 32) | static_cast<std::uint64_t>(j));
    Mat tape(K, eb);
    for (int i = 0; i < K; ++i) {
      const double sd = std::sqrt(grid.dt(i));
      for (int c = 0; c < eb; ++c) tape(i, c) = rng.normal(sd);
    }
    tapes.push_back(std::move(tape));
  }
  return tapes;
}

}  // namespace rmkv
