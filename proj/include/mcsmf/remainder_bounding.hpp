#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mcsmf/conic_program.hpp"
#include "mcsmf/dynamics.hpp"
#include "mcsmf/ellipsoid.hpp"
#include "mcsmf/sampling.hpp"

namespace mcsmf {

enum class SampleMode { kBoundary, kBall };

struct SamplePlan {
  SampleMode mode = SampleMode::kBoundary;
  int count = 50;
  /// Equal-angle grid instead of random directions (boundary mode, 2-D only).
  bool deterministic = true;
  std::uint64_t seed = 0;
  /// Post-solve scaling of the shape matrix; 1 keeps the sampled optimum.
  double inflation = 1.0;

  static SamplePlan ball(int count = 200, std::uint64_t seed = 0) {
    return {SampleMode::kBall, count, false, seed, 1.0};
  }

  void validate(Eigen::Index dim) const {
    if (count < dim + 1) {
      throw Error("sample plan needs at least " + std::to_string(dim + 1) + " samples in dimension " +
                  std::to_string(dim) + ", got " + std::to_string(count));
    }
    if (!(inflation >= 1.0)) throw Error("sample plan inflation must be >= 1");
  }
};

struct BoundaryApplicability {
  bool holds = false;
  std::string reason;
};

/// Decide whether the position ellipse {c + E u : |u| <= 1} misses the sensor
/// radial {x(0) <= a, x(1) = b}. Only the first two rows of `center` and `e`
/// are used. The horizontal chord at x(1) = b is computed in closed form.
inline BoundaryApplicability check_boundary_applicable(const Vector& center, const Matrix& e, double a,
                                                       double b) {
  if (center.size() < 2 || e.rows() < 2) {
    throw DimensionMismatch("applicability check needs at least two position coordinates");
  }
  const Matrix rows = e.topRows(2);
  const Matrix p = rows * rows.transpose();
  const double pxx = p(0, 0), pxy = p(0, 1), pyy = p(1, 1);
  const double offset = b - center(1);
  if (offset * offset >= pyy) {
    return {true, "ellipse lies strictly on one side of the line x(2) = b"};
  }
  const double mid = center(0) + pxy / pyy * offset;
  const double half = std::sqrt(std::max(0.0, (pxx - pxy * pxy / pyy) * (1.0 - offset * offset / pyy)));
  if (mid - half > a) {
    return {true, "chord of the ellipse on x(2) = b lies at x(1) > a (leftmost point " +
                      std::to_string(mid - half) + ")"};
  }
  return {false, "ellipse meets the sensor radial (chord on x(2) = b starts at x(1) = " +
                     std::to_string(mid - half) + " <= a = " + std::to_string(a) + ")"};
}

/// Coefficients (c, d) such that the range-bearing remainder of the position
/// ellipse vanishes on the line c u(1) + d u(2) = 0.
struct ZeroLine {
  double c = 0.0;
  double d = 0.0;
};

inline ZeroLine remainder_zero_line(const Vector& center, const Matrix& e, double a, double b) {
  const double dx = center(0) - a, dy = center(1) - b;
  return {e(0, 0) * dy - e(1, 0) * dx, e(0, 1) * dy - e(1, 1) * dx};
}

struct RemainderBound {
  Ellipsoid ellipsoid;
  /// All images coincided; `ellipsoid` is the regularized point ellipsoid.
  bool degenerate = false;
  /// Samples of the remainder used for the fit.
  std::vector<Vector> images;
  /// Only meaningful when the SDP was solved.
  SolveReport report;
};

namespace remainder_detail {

inline Ellipsoid point_ellipsoid(const Vector& center) {
  const double eps = 1e-12 * (1.0 + center.squaredNorm());
  return Ellipsoid(center, eps * Matrix::Identity(center.size(), center.size()));
}

/// Lower bound on the normalized shape matrix; keeps flat point clouds from
/// producing a singular fit.
constexpr double kShapeFloor = 1e-9;

}  // namespace remainder_detail

/// Minimum-trace ellipsoid containing `points` via the sampled SDP
///   min tr(P)  s.t.  [[-1, (p_i - e)^T], [p_i - e, -P]] <= 0  for all i.
/// The points are centered and scaled before the solve. The returned shape is
/// enlarged by the worst residual quadratic form when that exceeds one, so
/// every point is contained exactly.
inline RemainderBound fit_enclosing_ellipsoid(const std::vector<Vector>& points, const ConicBackend& backend,
                                              const SolverOptions& options = {}, double inflation = 1.0) {
  if (points.empty()) throw Error("cannot fit an ellipsoid to an empty point set");
  const Eigen::Index dim = points.front().size();
  Vector mean = Vector::Zero(dim);
  for (const auto& p : points) {
    if (p.size() != dim) throw DimensionMismatch("points of differing dimension");
    mean += p;
  }
  mean /= static_cast<double>(points.size());
  double scale = 0.0;
  for (const auto& p : points) scale = std::max(scale, (p - mean).norm());

  RemainderBound out{remainder_detail::point_ellipsoid(mean), true, points, {}};
  const double point_radius = std::sqrt(1e-12 * (1.0 + mean.squaredNorm()));
  if (scale <= 0.5 * point_radius) return out;

  ConicProgram prog;
  MatrixVar shape = prog.add_matrix(static_cast<int>(dim));
  VectorVar center = prog.add_vector(static_cast<int>(dim));
  Matrix corner = Matrix::Zero(dim + 1, dim + 1);
  corner(0, 0) = -1.0;
  Vector pull = Vector::Zero(dim + 1);
  pull(0) = -1.0;
  for (const auto& p : points) {
    LmiBlock blk(dim + 1);
    blk.add_constant(corner)
        .add_constant_offdiag((p - mean) / scale, 1, 0)
        .add_vector_outer(center, 1, pull)
        .add_matrix_var(shape, 1, -1.0);
    prog.add_lmi(std::move(blk));
  }
  LmiBlock floor(dim, LmiSense::kNegativeDefiniteMargin, remainder_detail::kShapeFloor);
  floor.add_matrix_var(shape, 0, -1.0);
  prog.add_lmi(std::move(floor)).minimize_trace(shape);

  out.report = solve(prog, options, backend);
  if (!out.report.optimal()) {
    throw SolverFailure("enclosing-ellipsoid fit failed: " + std::string(to_string(out.report.status)) +
                        " (" + out.report.message + ")");
  }
  Vector c = mean + scale * out.report.value(center);
  Matrix p = scale * scale * out.report.value(shape);
  Ellipsoid fitted(c, p);
  double worst = 0.0;
  for (const auto& q : points) worst = std::max(worst, fitted.quadratic_form(q));
  const double grow = std::max(1.0, worst) * inflation;
  out.ellipsoid = grow == 1.0 ? fitted : Ellipsoid(c, grow * p);
  out.degenerate = false;
  return out;
}

namespace remainder_detail {

/// Number of leading u-coordinates the remainder can depend on. For a
/// measurement map reading only the first k state coordinates, the remainder
/// depends on u only through rows 0..k-1 of E; when those rows vanish beyond
/// column k (lower-triangular E) sampling can stay in k dimensions.
inline Eigen::Index effective_input_dims(const RemainderEval& ev) {
  const Eigen::Index n = ev.e.cols();
  if (ev.kind != MapKind::kMeasurement) return n;
  const Eigen::Index k = ev.model->h_input_dims;
  if (k <= 0 || k >= n) return n;
  if (ev.e.topRightCorner(k, n - k).cwiseAbs().maxCoeff() != 0.0) return n;
  return k;
}

inline std::vector<Vector> draw_inputs(Eigen::Index k, Eigen::Index n, const SamplePlan& plan) {
  std::vector<Vector> low;
  if (plan.mode == SampleMode::kBoundary) {
    low = sample_unit_sphere(static_cast<int>(k), plan.count, plan.seed, plan.deterministic && k == 2);
  } else {
    low = sample_unit_ball(static_cast<int>(k), plan.count, plan.seed);
  }
  if (k == n) return low;
  std::vector<Vector> out;
  out.reserve(low.size());
  for (const auto& u : low) {
    Vector full = Vector::Zero(n);
    full.head(k) = u;
    out.push_back(std::move(full));
  }
  return out;
}

}  // namespace remainder_detail

/// Inputs u the plan evaluates the remainder at (already embedded in R^n).
inline std::vector<Vector> plan_inputs(const RemainderEval& ev, const SamplePlan& plan) {
  const Eigen::Index k = remainder_detail::effective_input_dims(ev);
  plan.validate(k);
  return remainder_detail::draw_inputs(k, ev.e.cols(), plan);
}

/// Bound the remainder set {Delta(u) : |u| <= 1} by an ellipsoid fitted to
/// sampled images. Exactly linear maps give the regularized zero ellipsoid.
inline RemainderBound bound_remainder(const RemainderEval& ev, const SamplePlan& plan,
                                      const ConicBackend& backend, const SolverOptions& options = {}) {
  if (ev.exactly_zero()) {
    return {remainder_detail::point_ellipsoid(Vector::Zero(ev.output_dim())), true, {}, {}};
  }
  std::vector<Vector> images;
  for (const auto& u : plan_inputs(ev, plan)) images.push_back(remainder(ev, u));
  return fit_enclosing_ellipsoid(images, backend, options, plan.inflation);
}

/// Interval-arithmetic alternative: enclose the remainder over the box
/// u in [-1, 1]^n and cover the vertices of the resulting box.
inline RemainderBound bound_remainder_interval(const RemainderEval& ev, const ConicBackend& backend,
                                               const SolverOptions& options = {}) {
  const auto& enclosure =
      ev.kind == MapKind::kProcess ? ev.model->f_enclosure : ev.model->h_enclosure;
  if (!enclosure) throw Error("model provides no interval enclosure for this remainder");
  IntervalBox box = enclosure(ev.base, ev.e);
  for (Eigen::Index i = 0; i < box.dim(); ++i) {
    if (!std::isfinite(box.lower(i)) || !std::isfinite(box.upper(i))) {
      throw IntervalBlowup("interval enclosure is unbounded in coordinate " + std::to_string(i));
    }
  }
  return fit_enclosing_ellipsoid(box_vertices(box), backend, options);
}

}  // namespace mcsmf
