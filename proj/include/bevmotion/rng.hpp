#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace bevmotion {

// Seeded random source with hand-rolled draw helpers. std::mt19937_64 is the
// engine; the distribution helpers are written out because the standard
// distributions are implementation-defined and results here must be
// bit-reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) via rejection.
  std::size_t bounded(std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
  }

  // Box-Muller, two uniform draws per call.
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Eigen::Vector3d gaussian3(double sigma) {
    return {sigma * gaussian(), sigma * gaussian(), sigma * gaussian()};
  }

  // Uniform in the closed ball of the given radius (rejection from the cube).
  Eigen::Vector3d in_ball(double radius) {
    if (radius <= 0.0) return Eigen::Vector3d::Zero();
    while (true) {
      const Eigen::Vector3d v{uniform(-radius, radius), uniform(-radius, radius),
                              uniform(-radius, radius)};
      if (v.squaredNorm() <= radius * radius) return v;
    }
  }

  // First k entries of a random permutation of [0, n), ascending output.
  std::vector<std::uint32_t> sample_indices(std::size_t n, std::size_t k) {
    std::vector<std::uint32_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = static_cast<std::uint32_t>(i);
    if (k > n) k = n;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + bounded(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace bevmotion
