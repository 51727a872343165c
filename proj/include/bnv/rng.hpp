#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

namespace bnv {

// Deterministic random source. All sampling goes through explicit bit-to-double
// conversions so that identical seeds give identical streams on every build;
// std::*_distribution is implementation-defined and is deliberately avoided.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(splitmix(seed + 0x9e3779b97f4a7c15ULL)) {}

  std::uint64_t next_u64() {
    // xorshift64* keeps the state small and fork() cheap.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (no cached spare; keeps the stream simple).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  Eigen::Vector3d normal3() { return {normal(), normal(), normal()}; }

  Eigen::Vector3d unit_vector() {
    // Rejection-free: normalize a Gaussian triple, guarding the origin.
    Eigen::Vector3d v = normal3();
    double n = v.norm();
    while (n < 1e-12) {
      v = normal3();
      n = v.norm();
    }
    return v / n;
  }

  // Independent substream; fork(i) != fork(j) for i != j and does not disturb
  // the parent stream. Used to give parallel tasks stable per-index streams.
  Rng fork(std::uint64_t stream) const {
    Rng child(0);
    child.state_ = splitmix(state_ ^ splitmix(stream + 0x632be59bd9b4e019ULL));
    return child;
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    x = x ^ (x >> 31);
    return x ? x : 0x853c49e6748fea9bULL;
  }

  std::uint64_t state_;
};

}  // namespace bnv
