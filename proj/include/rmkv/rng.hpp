#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rmkv {

// Purpose tags for deriving independent substreams from one master seed.
// Stream identity is (master, kind, index); adding particles, samples or
// probes never perturbs existing streams.
enum class StreamKind : std::uint64_t {
  common_noise = 1,  // shared rough driver W
  particle = 2,      // idiosyncratic Brownian tape of one particle
  initial = 3,       // initial-condition sampling
  probe = 4,         // diagnostics probe points
  shuffle = 5,       // permutations in tests/diagnostics
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, StreamKind kind, std::uint64_t index) {
  std::uint64_t s = splitmix64(master);
  s = splitmix64(s ^ static_cast<std::uint64_t>(kind));
  s = splitmix64(s ^ index);
  return s;
}

// Deterministic normal/uniform source. mt19937_64 output is specified by the
// standard, and the mappings below avoid std::*_distribution, whose exact
// sequences vary between standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : eng_(seed) {}
  RngStream(std::uint64_t master, StreamKind kind, std::uint64_t index) : eng_(stream_seed(master, kind, index)) {}

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the pair partner is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0,1], keeps log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double stddev) { return stddev * normal(); }

  std::uint64_t bits() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace rmkv
