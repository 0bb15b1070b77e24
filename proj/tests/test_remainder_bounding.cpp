#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "mcsmf/interior_point.hpp"
#include "mcsmf/remainder_bounding.hpp"
#include "oracles.hpp"

using namespace mcsmf;
using namespace test_oracles;

namespace {

const InteriorPointBackend kBackend;





}  // namespace

TEST(Applicability, OffsetSensorHolds) {
  const auto res = check_boundary_applicable(vec({80, 130}), offset_sensor_factor(), 50, 100);
  EXPECT_TRUE(res.holds) << res.reason;
  EXPECT_FALSE(radial_meets_ellipse(vec({80, 130}), offset_sensor_factor(), 50, 100));
}

TEST(Applicability, UnitDiskMeetsRadial) {
  const auto res = check_boundary_applicable(vec({0, 0}), Matrix::Identity(2, 2), 5, 0);
  EXPECT_FALSE(res.holds);
  EXPECT_FALSE(res.reason.empty());
}

TEST(Applicability, SeparatedEllipseHolds) {
  EXPECT_TRUE(check_boundary_applicable(vec({10, 0}), Matrix::Identity(2, 2), 5, 0).holds);
  EXPECT_TRUE(check_boundary_applicable(vec({0, 10}), Matrix::Identity(2, 2), 5, 0).holds);
}

TEST(Applicability, AgreesWithDenseRadialOracle) {
  Rng rng = make_rng(31);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 150; ++trial) {
    Vector c = vec({20 * unif(rng), 20 * unif(rng)});
    Matrix e = Matrix::Zero(2, 2);
    e(0, 0) = 2 + 8 * std::abs(unif(rng));
    e(1, 1) = 2 + 8 * std::abs(unif(rng));
    e(1, 0) = 5 * unif(rng);
    const double a = 10 * unif(rng), b = 10 * unif(rng);
    // Skip near-tangent configurations, where a grid oracle cannot decide.
    const Ellipsoid ell(c, e * e.transpose());
    const double gap = std::abs(b - c(1)) - std::sqrt(ell.shape()(1, 1));
    if (std::abs(gap) < 1e-3) continue;
    const bool holds = check_boundary_applicable(c, e, a, b).holds;
    const bool meets_radial = radial_meets_ellipse(c, e, a, b);
    // The oracle only finds intersections; close misses near x(1) = a are ambiguous.
    if (!holds && !meets_radial) {
      const Vector edge = vec({a, b});
      EXPECT_NEAR(ell.quadratic_form(edge), 1.0, 0.05) << "trial " << trial;
      continue;
    }
    EXPECT_EQ(holds, !meets_radial) << "trial " << trial;
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(FitEnclosingEllipsoid, FourAxisPointsGiveUnitDisk) {
  const std::vector<Vector> pts{vec({1, 0}), vec({-1, 0}), vec({0, 1}), vec({0, -1})};
  const RemainderBound rb = fit_enclosing_ellipsoid(pts, kBackend);
  EXPECT_FALSE(rb.degenerate);
  EXPECT_LE(rb.ellipsoid.center().norm(), 1e-6);
  EXPECT_NEAR(rb.ellipsoid.trace(), 2.0, 1e-4);
  const double oracle = grid_search_min_trace(pts);
  EXPECT_NEAR(oracle, 2.0, 0.02);
  EXPECT_LE(rb.ellipsoid.trace(), oracle + 1e-6);
}

TEST(FitEnclosingEllipsoid, AsymmetricPointsMatchGridSearch) {
  const std::vector<Vector> pts{vec({0.9, 0.1}), vec({-0.6, 0.3}), vec({0.1, 0.8}), vec({0.2, -0.7}),
                                vec({-0.3, -0.4})};
  const RemainderBound rb = fit_enclosing_ellipsoid(pts, kBackend);
  const double oracle = grid_search_min_trace(pts);
  EXPECT_LE(rb.ellipsoid.trace(), oracle + 1e-6);
  EXPECT_GE(rb.ellipsoid.trace(), oracle - 0.03);
}

TEST(FitEnclosingEllipsoid, AllPointsContained) {
  Rng rng = make_rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 2 + trial % 3;
    std::vector<Vector> pts;
    Matrix a = Matrix::Random(dim, dim) * 5.0;
    for (int i = 0; i < 30; ++i) pts.push_back(a * standard_normal(dim, rng) + Vector::Constant(dim, 100.0));
    const RemainderBound rb = fit_enclosing_ellipsoid(pts, kBackend);
    for (const auto& p : pts) EXPECT_TRUE(contains(rb.ellipsoid, p, 1e-6));
  }
}

TEST(FitEnclosingEllipsoid, CoincidentPointsGivePointEllipsoid) {
  const std::vector<Vector> pts(5, vec({3, 4}));
  const RemainderBound rb = fit_enclosing_ellipsoid(pts, kBackend);
  EXPECT_TRUE(rb.degenerate);
  EXPECT_NEAR(rb.ellipsoid.shape()(0, 0), 1e-12 * 26.0, 1e-20);
  EXPECT_TRUE(contains(rb.ellipsoid, vec({3, 4})));
}

TEST(FitEnclosingEllipsoid, CollinearPointsStillValid) {
  const std::vector<Vector> pts{vec({-1, 0}), vec({0, 0}), vec({1, 0})};
  const RemainderBound rb = fit_enclosing_ellipsoid(pts, kBackend);
  for (const auto& p : pts) EXPECT_TRUE(contains(rb.ellipsoid, p, 1e-6));
  EXPECT_NEAR(rb.ellipsoid.trace(), 1.0, 1e-4);
}

TEST(BoundRemainder, LinearMapGivesPointEllipsoid) {
  DynamicsModel m = make_cv_tracking_model(0.2);
  RemainderEval ev(m, vec({50, 30, 5, 5}), Matrix::Identity(4, 4), MapKind::kProcess);
  const RemainderBound rb = bound_remainder(ev, SamplePlan::ball(), kBackend);
  EXPECT_TRUE(rb.degenerate);
  EXPECT_EQ(rb.ellipsoid.center(), Vector::Zero(4));
  EXPECT_NEAR(rb.ellipsoid.trace(), 4e-12, 1e-20);
}

TEST(BoundRemainder, PlanNeedsEnoughSamples) {
  DynamicsModel m = offset_sensor_model();
  RemainderEval ev(m, vec({80, 130}), offset_sensor_factor(), MapKind::kMeasurement);
  SamplePlan plan;
  plan.count = 2;
  EXPECT_THROW(bound_remainder(ev, plan, kBackend), Error);
}

TEST(BoundRemainder, OffsetSensorSamplesContained) {
  DynamicsModel m = offset_sensor_model();
  RemainderEval ev(m, vec({80, 130}), offset_sensor_factor(), MapKind::kMeasurement);
  const RemainderBound rb = bound_remainder(ev, SamplePlan{}, kBackend);
  ASSERT_EQ(rb.images.size(), 50u);
  for (const auto& img : rb.images) EXPECT_TRUE(contains(rb.ellipsoid, img, 1e-6));
}

// Interior images never reach further out than the boundary images do, for
// any fixed ellipsoid: the boundary of the remainder set comes from |u| = 1.
TEST(BoundRemainder, InteriorDominatedByBoundary) {
  DynamicsModel m = offset_sensor_model();
  RemainderEval ev(m, vec({80, 130}), offset_sensor_factor(), MapKind::kMeasurement);
  const Ellipsoid fitted = bound_remainder(ev, SamplePlan{}, kBackend).ellipsoid;
  const Ellipsoid round(Vector::Zero(2), Matrix::Identity(2, 2));
  for (const Ellipsoid& ell : {fitted, round}) {
    double boundary = 0.0;
    for (const auto& u : circle_grid(20000)) boundary = std::max(boundary, ell.quadratic_form(remainder(ev, u)));
    double interior = 0.0;
    for (const auto& u : sample_unit_ball(2, 10000, 1234u)) {
      interior = std::max(interior, ell.quadratic_form(remainder(ev, u)));
    }
    EXPECT_LE(interior, boundary * (1 + 1e-9));
  }
}

TEST(BoundRemainder, DenseBoundaryGridContainsBallImages) {
  DynamicsModel m = offset_sensor_model();
  RemainderEval ev(m, vec({80, 130}), offset_sensor_factor(), MapKind::kMeasurement);
  SamplePlan plan;
  plan.count = 400;
  const RemainderBound rb = bound_remainder(ev, plan, kBackend);
  for (const auto& u : sample_unit_ball(2, 10000, 1234u)) {
    EXPECT_TRUE(contains(rb.ellipsoid, remainder(ev, u), 1e-3));
  }
}

TEST(BoundRemainder, MeasurementSamplingStaysInPositionPlane) {
  DynamicsModel m = make_cv_tracking_model(0.2);
  Matrix p = Matrix::Identity(4, 4);
  p.diagonal() << 5, 5, 2, 2;
  RemainderEval ev(m, vec({50, 30, 5, 5}), p.llt().matrixL(), MapKind::kMeasurement);
  const auto inputs = plan_inputs(ev, SamplePlan{});
  ASSERT_EQ(inputs.size(), 50u);
  for (const auto& u : inputs) {
    EXPECT_EQ(u(2), 0.0);
    EXPECT_EQ(u(3), 0.0);
    EXPECT_NEAR(u.norm(), 1.0, 1e-12);
  }
}

TEST(BoundRemainder, RefiningGridNeverLosesContainment) {
  DynamicsModel m = offset_sensor_model();
  RemainderEval ev(m, vec({80, 130}), offset_sensor_factor(), MapKind::kMeasurement);
  std::vector<Vector> validation;
  for (const auto& u : sample_unit_ball(2, 5000, 99u)) validation.push_back(remainder(ev, u));
  int previous = -1;
  double previous_trace = 0.0;
  // Nested grids: each one contains every point of the one before.
  for (int n : {50, 100, 200, 400, 800}) {
    SamplePlan plan;
    plan.count = n;
    const RemainderBound rb = bound_remainder(ev, plan, kBackend);
    int inside = 0;
    for (const auto& v : validation) inside += contains(rb.ellipsoid, v, 1e-6) ? 1 : 0;
    EXPECT_GE(inside, previous) << "N=" << n;
    EXPECT_GE(rb.ellipsoid.trace(), previous_trace * (1 - 1e-7)) << "N=" << n;
    previous = inside;
    previous_trace = rb.ellipsoid.trace();
  }
}

TEST(BoundRemainderInterval, CoversBoxLikeClosedForm) {
  DynamicsModel m = offset_sensor_model();
  RemainderEval ev(m, vec({80, 130}), offset_sensor_factor(), MapKind::kMeasurement);
  const IntervalBox box = m.h_enclosure(ev.base, ev.e);
  const RemainderBound rb = bound_remainder_interval(ev, kBackend);
  // For a box with half-widths w, the minimum-trace enclosing ellipsoid is
  // centered at the box center with axis lengths^2 p_i = w_i * sum_j w_j.
  const Vector w = box.half_width();
  const double trace_oracle = w.sum() * w.sum();
  EXPECT_NEAR(rb.ellipsoid.trace(), trace_oracle, 1e-5 * trace_oracle);
  EXPECT_LE((rb.ellipsoid.center() - box.center()).norm(), 1e-5 * (1 + w.norm()));
  for (const auto& v : box_vertices(box)) EXPECT_TRUE(contains(rb.ellipsoid, v, 1e-6));
}

TEST(BoundRemainderInterval, LooserThanSampledFitOnOffsetSensor) {
  DynamicsModel m = offset_sensor_model();
  RemainderEval ev(m, vec({80, 130}), offset_sensor_factor(), MapKind::kMeasurement);
  const double sdp = bound_remainder(ev, SamplePlan{}, kBackend).ellipsoid.trace();
  const double interval = bound_remainder_interval(ev, kBackend).ellipsoid.trace();
  EXPECT_LE(sdp, interval);
}

TEST(BoundRemainderInterval, ZeroRemainderIsPoint) {
  DynamicsModel m = make_cv_tracking_model(0.2);
  RemainderEval ev(m, vec({50, 30, 5, 5}), Matrix::Identity(4, 4), MapKind::kProcess);
  const RemainderBound rb = bound_remainder_interval(ev, kBackend);
  EXPECT_TRUE(rb.degenerate);
  EXPECT_LE(rb.ellipsoid.trace(), 1e-11);
}

TEST(BoundRemainderInterval, BlowupPropagates) {
  DynamicsModel m = make_linear_range_bearing_model(Matrix::Identity(2, 2), {0, 0});
  RemainderEval ev(m, vec({0.5, 10}), Matrix::Identity(2, 2), MapKind::kMeasurement);
  EXPECT_THROW(bound_remainder_interval(ev, kBackend), IntervalBlowup);
}

TEST(ZeroLine, CoefficientsMatchDefinition) {
  const auto zl = remainder_zero_line(vec({80, 130}), offset_sensor_factor(), 50, 100);
  EXPECT_NEAR(zl.c, std::sqrt(500.0) * 30, 1e-12);
  EXPECT_NEAR(zl.d, -std::sqrt(1000.0) * 30, 1e-12);
}
