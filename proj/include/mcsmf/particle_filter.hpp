#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcsmf/dynamics.hpp"
#include "mcsmf/ellipsoid.hpp"
#include "mcsmf/errors.hpp"
#include "mcsmf/sampling.hpp"

namespace mcsmf {

struct ParticleCloud {
  std::vector<Vector> particles;
  Vector weights;

  std::size_t size() const { return particles.size(); }
};

/// A noise law supported on an ellipsoid: a Gaussian restricted to it (with
/// the true mean, or with mean zero) or the uniform law on it.
class NoiseHypothesis {
 public:
  enum class Kind { kTruePdf, kZeroMeanGaussian, kUniform };

  static NoiseHypothesis true_pdf(Ellipsoid bound, Vector mean, const Matrix& covariance) {
    return NoiseHypothesis(Kind::kTruePdf, std::move(bound), std::move(mean), covariance);
  }
  static NoiseHypothesis zero_mean_gaussian(Ellipsoid bound, const Matrix& covariance) {
    Vector zero = Vector::Zero(bound.dim());
    return NoiseHypothesis(Kind::kZeroMeanGaussian, std::move(bound), std::move(zero), covariance);
  }
  static NoiseHypothesis uniform(Ellipsoid bound) {
    const Eigen::Index n = bound.dim();
    return NoiseHypothesis(Kind::kUniform, std::move(bound), Vector::Zero(n), Matrix::Identity(n, n));
  }

  Kind kind() const { return kind_; }
  const Ellipsoid& bound() const { return bound_; }
  const Vector& mean() const { return mean_; }

  Vector draw(Rng& rng, BoundedSampler& sampler) const {
    if (kind_ == Kind::kUniform) return sampler.uniform(bound_, rng);
    return sampler.truncated_gaussian(mean_, cov_lower_, bound_, rng);
  }

  /// Log of the unnormalized density; -inf outside the bound.
  double log_density(const Vector& v) const {
    if (!contains(bound_, v)) return -std::numeric_limits<double>::infinity();
    if (kind_ == Kind::kUniform) return 0.0;
    const Vector z = cov_lower_.triangularView<Eigen::Lower>().solve(v - mean_);
    return -0.5 * z.squaredNorm();
  }

 private:
  NoiseHypothesis(Kind kind, Ellipsoid bound, Vector mean, const Matrix& covariance)
      : kind_(kind), bound_(std::move(bound)), mean_(std::move(mean)) {
    if (mean_.size() != bound_.dim() || covariance.rows() != bound_.dim() || covariance.cols() != bound_.dim()) {
      throw DimensionMismatch("noise hypothesis dimensions disagree");
    }
    Eigen::LLT<Matrix> llt(0.5 * (covariance + covariance.transpose()));
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("noise covariance is not positive definite");
    cov_lower_ = llt.matrixL();
  }

  Kind kind_;
  Ellipsoid bound_;
  Vector mean_;
  Matrix cov_lower_;
};

/// Weighted mean and symmetrized weighted covariance.
inline std::pair<Vector, Matrix> pf_estimate(const ParticleCloud& cloud) {
  if (cloud.particles.empty()) throw Error("empty particle cloud");
  const Eigen::Index n = cloud.particles.front().size();
  Vector mean = Vector::Zero(n);
  for (std::size_t i = 0; i < cloud.size(); ++i) mean += cloud.weights(static_cast<Eigen::Index>(i)) * cloud.particles[i];
  Matrix cov = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vector d = cloud.particles[i] - mean;
    cov += cloud.weights(static_cast<Eigen::Index>(i)) * d * d.transpose();
  }
  return {mean, 0.5 * (cov + cov.transpose())};
}

/// Per-coordinate interval mean +- sigmas * std.
inline std::pair<Vector, Vector> confidence_band(const ParticleCloud& cloud, double sigmas) {
  if (!(sigmas > 0.0)) throw Error("confidence band width must be positive");
  const auto [mean, cov] = pf_estimate(cloud);
  const Vector half = sigmas * cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return {mean - half, mean + half};
}

inline double effective_sample_size(const Vector& weights) { return 1.0 / weights.squaredNorm(); }

/// Systematic resampling with a single uniform offset; weights become uniform.
inline ParticleCloud systematic_resample(const ParticleCloud& cloud, Rng& rng) {
  const std::size_t n = cloud.size();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double offset = unif(rng);
  ParticleCloud out;
  out.particles.reserve(n);
  double cumulative = cloud.weights(0);
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = (static_cast<double>(i) + offset) / static_cast<double>(n);
    while (target > cumulative && j + 1 < n) cumulative += cloud.weights(static_cast<Eigen::Index>(++j));
    out.particles.push_back(cloud.particles[j]);
  }
  out.weights = Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
  return out;
}

namespace pf_detail {

/// Multiply weights by the likelihood of y, normalize, and resample when the
/// effective sample size drops below half the particle count.
inline ParticleCloud reweight(ParticleCloud cloud, const Vector& y, const DynamicsModel& model,
                              const NoiseHypothesis& meas, Rng& rng, std::optional<int> step) {
  const auto n = static_cast<Eigen::Index>(cloud.size());
  Vector logw(n);
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    double ll = -std::numeric_limits<double>::infinity();
    try {
      ll = meas.log_density(model.wrap_residual(y - model.h(cloud.particles[static_cast<std::size_t>(i)])));
    } catch (const OnSensorRadial&) {
    }
    logw(i) = cloud.weights(i) > 0.0 ? std::log(cloud.weights(i)) + ll : -std::numeric_limits<double>::infinity();
    best = std::max(best, logw(i));
  }
  if (!std::isfinite(best)) {
    throw WeightCollapse("every particle has zero likelihood for the measurement", step);
  }
  Vector w = (logw.array() - best).exp();
  cloud.weights = w / w.sum();
  if (effective_sample_size(cloud.weights) < 0.5 * static_cast<double>(n)) cloud = systematic_resample(cloud, rng);
  return cloud;
}

}  // namespace pf_detail

/// Particles drawn uniformly in `init`, weighted by y_0 when given.
inline ParticleCloud pf_initialize(const Ellipsoid& init, int count, const std::optional<Vector>& y0,
                                   const DynamicsModel& model, const NoiseHypothesis& meas, Rng& rng) {
  if (count < 1) throw Error("particle count must be positive");
  ParticleCloud cloud;
  for (const auto& u : sample_unit_ball(static_cast<int>(init.dim()), count, rng)) {
    cloud.particles.push_back(init.point_at(u));
  }
  cloud.weights = Vector::Constant(count, 1.0 / count);
  if (y0) cloud = pf_detail::reweight(std::move(cloud), *y0, model, meas, rng, 0);
  return cloud;
}

/// One bootstrap step: propagate through f with process noise, weight by the
/// measurement likelihood, resample if degenerate.
inline ParticleCloud pf_step(const ParticleCloud& cloud, const Vector& y, const DynamicsModel& model,
                             const NoiseHypothesis& process, const NoiseHypothesis& meas, Rng& rng,
                             BoundedSampler& sampler, std::optional<int> step = std::nullopt) {
  ParticleCloud next;
  next.particles.reserve(cloud.size());
  for (const auto& x : cloud.particles) next.particles.push_back(model.f(x) + process.draw(rng, sampler));
  next.weights = cloud.weights;
  return pf_detail::reweight(std::move(next), y, model, meas, rng, step);
}

}  // namespace mcsmf
