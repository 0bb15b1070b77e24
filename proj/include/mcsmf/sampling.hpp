#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <vector>

#include "mcsmf/ellipsoid.hpp"

namespace mcsmf {

using Rng = std::mt19937_64;

/// Independent stream for (master seed, counters...). Each counter tuple gives
/// its own reproducible sequence, so trial t can be replayed in isolation.
inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> counters = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * counters.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(master);
  for (auto c : counters) push(c);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline Vector standard_normal(Eigen::Index dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(dim);
  for (Eigen::Index i = 0; i < dim; ++i) z(i) = normal(rng);
  return z;
}

inline std::vector<Vector> sample_unit_sphere(int dim, int n, Rng& rng) {
  if (dim < 1 || n < 1) throw Error("sample_unit_sphere needs dim >= 1 and n >= 1");
  std::vector<Vector> out;
  out.reserve(n);
  while (static_cast<int>(out.size()) < n) {
    Vector z = standard_normal(dim, rng);
    const double norm = z.norm();
    if (norm < 1e-300) continue;
    out.push_back(z / norm);
  }
  return out;
}

/// Equal-angle grid on the unit circle, starting at angle 0.
inline std::vector<Vector> circle_grid(int n) {
  if (n < 1) throw Error("circle_grid needs n >= 1");
  std::vector<Vector> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / n;
    Vector u(2);
    u << std::cos(angle), std::sin(angle);
    out.push_back(u);
  }
  return out;
}

/// Points on the unit sphere. With `deterministic` the 2-D equal-angle grid is
/// returned (only defined for dim = 2); otherwise normalized Gaussian draws.
inline std::vector<Vector> sample_unit_sphere(int dim, int n, std::uint64_t seed,
                                              bool deterministic = false) {
  if (deterministic) {
    if (dim != 2) throw Error("deterministic sphere grid is only defined for dim = 2");
    return circle_grid(n);
  }
  Rng rng = make_rng(seed);
  return sample_unit_sphere(dim, n, rng);
}

/// Uniform points in the closed unit ball: Gaussian direction times U^(1/dim).
inline std::vector<Vector> sample_unit_ball(int dim, int n, Rng& rng) {
  std::vector<Vector> dirs = sample_unit_sphere(dim, n, rng);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (auto& d : dirs) {
    const double r = std::pow(unif(rng), 1.0 / dim);
    d *= r;
    // Rounding can push |d| a hair above one when r is close to 1.
    const double norm = d.norm();
    if (norm > 1.0) d /= norm;
  }
  return dirs;
}

inline std::vector<Vector> sample_unit_ball(int dim, int n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return sample_unit_ball(dim, n, rng);
}

/// Rejection sampler for laws restricted to an ellipsoid. Tracks the running
/// acceptance rate and raises RejectionStall once it drops below 1e-4.
class BoundedSampler {
 public:
  static constexpr double kMinAcceptance = 1e-4;
  static constexpr long kWarmupAttempts = 100000;

  /// Gaussian N(mean, covariance) restricted to `bound`.
  Vector truncated_gaussian(const Vector& mean, const Matrix& covariance_lower,
                            const Ellipsoid& bound, Rng& rng) {
    return draw(bound, [&] {
      return Vector(mean + covariance_lower * standard_normal(mean.size(), rng));
    });
  }

  /// Uniform law on `bound`.
  Vector uniform(const Ellipsoid& bound, Rng& rng) {
    return draw(bound, [&] {
      std::vector<Vector> u = sample_unit_ball(static_cast<int>(bound.dim()), 1, rng);
      return bound.point_at(u.front());
    });
  }

  long attempts() const { return attempts_; }
  long accepted() const { return accepted_; }

 private:
  template <class Proposal>
  Vector draw(const Ellipsoid& bound, Proposal&& propose) {
    for (;;) {
      ++attempts_;
      Vector candidate = propose();
      if (bound.quadratic_form(candidate) <= 1.0) {
        ++accepted_;
        return candidate;
      }
      if (attempts_ >= kWarmupAttempts &&
          static_cast<double>(accepted_) < kMinAcceptance * static_cast<double>(attempts_)) {
        throw RejectionStall("rejection sampler acceptance rate below 1e-4 after " +
                             std::to_string(attempts_) + " attempts");
      }
    }
  }

  long attempts_ = 0;
  long accepted_ = 0;
};

}  // namespace mcsmf
