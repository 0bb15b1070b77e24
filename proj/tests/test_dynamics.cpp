#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mcsmf/dynamics.hpp"
#include "mcsmf/sampling.hpp"
#include "oracles.hpp"

using namespace mcsmf;
using namespace test_oracles;

namespace {


Matrix central_difference(const DynamicsModel::Map& map, const Vector& x, double step) {
  const Vector y0 = map(x);
  Matrix j(y0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp(i) += step;
    xm(i) -= step;
    j.col(i) = (map(xp) - map(xm)) / (2 * step);
  }
  return j;
}

double relative_error(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1e-12, b.norm()); }


}  // namespace

TEST(WrapAngle, Range) {
  EXPECT_DOUBLE_EQ(wrap_angle(0.0), 0.0);
  EXPECT_DOUBLE_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_DOUBLE_EQ(wrap_angle(-std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(wrap_angle(3 * std::numbers::pi / 2), -std::numbers::pi / 2, 1e-15);
  EXPECT_NEAR(wrap_angle(-7.0), -7.0 + 2 * std::numbers::pi, 1e-15);
}

TEST(CvTrackingModel, TransitionEntries) {
  DynamicsModel m = make_cv_tracking_model(0.2);
  const Matrix f = m.jf(Vector::Zero(4));
  EXPECT_DOUBLE_EQ(f(0, 2), 0.2);
  EXPECT_DOUBLE_EQ(f(1, 3), 0.2);
  EXPECT_DOUBLE_EQ(f(2, 3), 0.0);
  EXPECT_EQ(m.n, 4);
  EXPECT_EQ(m.n1, 2);
  EXPECT_THROW(make_cv_tracking_model(0.0), Error);
}

TEST(CvTrackingModel, RangeBearingValues) {
  DynamicsModel m = make_cv_tracking_model(0.2);
  const Vector x = vec({50, 30, 5, 5});
  const Vector y = m.h(x);
  EXPECT_NEAR(y(0), std::sqrt(50.0 * 50.0 + 30.0 * 30.0), 1e-12);
  EXPECT_NEAR(y(0), 58.3095, 1e-4);
  EXPECT_NEAR(y(1), 0.5404, 1e-4);
  const Matrix j = m.jh(x);
  const double r = std::sqrt(3400.0);
  EXPECT_NEAR(j(0, 0), 50 / r, 1e-14);
  EXPECT_NEAR(j(0, 1), 30 / r, 1e-14);
  EXPECT_EQ(j(0, 2), 0.0);
  EXPECT_EQ(j(0, 3), 0.0);
}

TEST(OffsetRangeBearing, Values) {
  auto h0 = make_offset_range_bearing(0, 0);
  Vector y = h0(vec({1, 0}));
  EXPECT_DOUBLE_EQ(y(0), 1.0);
  EXPECT_DOUBLE_EQ(y(1), 0.0);

  auto h = make_offset_range_bearing(50, 100);
  y = h(vec({80, 130}));
  EXPECT_NEAR(y(0), std::sqrt(1800.0), 1e-12);
  EXPECT_NEAR(y(0), 42.4264, 1e-4);
  EXPECT_NEAR(y(1), std::numbers::pi / 4, 1e-15);
  EXPECT_THROW(h(vec({49, 100})), OnSensorRadial);
  EXPECT_THROW(h(vec({50, 100})), OnSensorRadial);
  EXPECT_NO_THROW(h(vec({51, 100})));
}

TEST(Jacobians, MatchFiniteDifferences) {
  Rng rng = make_rng(5);
  DynamicsModel cv = make_cv_tracking_model(0.2);
  DynamicsModel offset = make_linear_range_bearing_model(Matrix::Identity(2, 2), {50, 100});
  std::uniform_real_distribution<double> unif(-200.0, 200.0);
  for (int i = 0; i < 100; ++i) {
    Vector x = vec({unif(rng), unif(rng), unif(rng) / 20, unif(rng) / 20});
    if (std::abs(x(1)) < 1.0) x(1) += 5.0;  // keep away from the bearing cut
    EXPECT_LE(relative_error(cv.jf(x), central_difference(cv.f, x, 1e-5)), 1e-5);
    EXPECT_LE(relative_error(cv.jh(x), central_difference(cv.h, x, 1e-5)), 1e-5);

    Vector p = x.head(2);
    if (std::abs(p(1) - 100.0) < 1.0) p(1) += 5.0;
    EXPECT_LE(relative_error(offset.jh(p), central_difference(offset.h, p, 1e-5)), 1e-5);
  }
}

TEST(LinearModel, Shapes) {
  Matrix f = Matrix::Identity(3, 3);
  Matrix h = Matrix::Zero(1, 3);
  h(0, 0) = 1;
  DynamicsModel m = make_linear_model(f, h);
  EXPECT_EQ(m.n1, 1);
  EXPECT_THROW(make_linear_model(f, Matrix::Zero(1, 2)), DimensionMismatch);
}

TEST(Remainder, ZeroAtBasePoint) {
  DynamicsModel m = make_cv_tracking_model(0.2);
  const Matrix e = Vector::Constant(4, 3.0).asDiagonal();
  RemainderEval ev(m, vec({50, 30, 5, 5}), e, MapKind::kMeasurement);
  EXPECT_EQ(remainder(ev, Vector::Zero(4)), Vector::Zero(2));
  RemainderEval evf(m, vec({50, 30, 5, 5}), e, MapKind::kProcess);
  EXPECT_EQ(remainder(evf, Vector::Zero(4)), Vector::Zero(4));
}

TEST(Remainder, LinearMapIsZero) {
  Rng rng = make_rng(6);
  DynamicsModel m = make_cv_tracking_model(0.2);
  Matrix e = Matrix::Identity(4, 4) * 2.0;
  e(3, 0) = 0.7;
  RemainderEval ev(m, vec({1, 2, 3, 4}), e, MapKind::kProcess);
  EXPECT_TRUE(ev.exactly_zero());
  for (const auto& u : sample_unit_ball(4, 100, rng)) EXPECT_LE(remainder(ev, u).norm(), 1e-12);
}

TEST(Remainder, DefinitionIdentity) {
  Rng rng = make_rng(7);
  DynamicsModel m = make_cv_tracking_model(0.2);
  Matrix e = Matrix::Identity(4, 4);
  e.diagonal() << 5, 4, 2, 2;
  e(1, 0) = 1.5;
  const Vector base = vec({50, 30, 5, 5});
  RemainderEval ev(m, base, e, MapKind::kMeasurement);
  for (const auto& u : sample_unit_ball(4, 200, rng)) {
    const Vector lhs = remainder(ev, u) + m.jh(base) * e * u + m.h(base);
    const Vector rhs = m.h(base + e * u);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Remainder, OutOfBallRejected) {
  DynamicsModel m = make_cv_tracking_model(0.2);
  RemainderEval ev(m, vec({50, 30, 5, 5}), Matrix::Identity(4, 4), MapKind::kMeasurement);
  Vector u = Vector::Zero(4);
  u(0) = 1.0 + 1e-13;
  EXPECT_NO_THROW(remainder(ev, u));
  u(0) = 1.0 + 1e-9;
  EXPECT_THROW(remainder(ev, u), OutOfBall);
}

TEST(Remainder, DependsOnlyOnPositionInputsForTriangularFactor) {
  Rng rng = make_rng(8);
  DynamicsModel m = make_cv_tracking_model(0.2);
  Matrix p = Matrix::Identity(4, 4);
  p.diagonal() << 5, 5, 2, 2;
  p(0, 2) = p(2, 0) = 0.8;
  const Matrix e = p.llt().matrixL();
  RemainderEval ev(m, vec({50, 30, 5, 5}), e, MapKind::kMeasurement);
  for (const auto& u : sample_unit_ball(4, 100, rng)) {
    Vector head = Vector::Zero(4);
    head.head(2) = u.head(2);
    EXPECT_LE((remainder(ev, u) - remainder(ev, head)).norm(), 1e-12);
  }
}

TEST(RemainderSign, OffsetSensorZeroLine) {
  DynamicsModel m = make_linear_range_bearing_model(Matrix::Identity(2, 2), {50, 100});
  Matrix e = Matrix::Zero(2, 2);
  e.diagonal() << std::sqrt(500.0), std::sqrt(1000.0);
  const Vector base = vec({80, 130});
  RemainderEval ev(m, base, e, MapKind::kMeasurement);
  // Points on the line c u1 + d u2 = 0 map to the ray from the sensor through
  // the base point; c, d evaluated here from their definition.
  const double c = e(0, 0) * (base(1) - 100) - e(1, 0) * (base(0) - 50);
  const double d = e(0, 1) * (base(1) - 100) - e(1, 1) * (base(0) - 50);
  Vector dir = vec({d, -c});
  dir.normalize();
  for (int i = 0; i <= 100; ++i) {
    const double t = -1.0 + 2.0 * i / 100;
    EXPECT_LE(remainder(ev, t * dir).norm(), 1e-10);
  }
}

TEST(RemainderSign, JacobianDeterminantNonNegative) {
  Rng rng = make_rng(9);
  for (int cfg = 0; cfg < 5; ++cfg) {
    PositionCase pc = random_admissible_case(rng);
    DynamicsModel m = make_linear_range_bearing_model(Matrix::Identity(2, 2), {pc.a, pc.b});
    RemainderEval ev(m, pc.center, pc.e, MapKind::kMeasurement);
    for (const auto& u : sample_unit_ball(2, 2000, rng)) {
      const Matrix jg = remainder_jacobian(ev, u);
      EXPECT_GE(jg.determinant(), -1e-10);
    }
  }
}

TEST(RemainderJacobian, MatchesFiniteDifferences) {
  DynamicsModel m = make_linear_range_bearing_model(Matrix::Identity(2, 2), {50, 100});
  Matrix e = Matrix::Zero(2, 2);
  e.diagonal() << std::sqrt(500.0), std::sqrt(1000.0);
  RemainderEval ev(m, vec({80, 130}), e, MapKind::kMeasurement);
  const Vector u = vec({0.3, -0.2});
  Matrix fd(2, 2);
  for (int i = 0; i < 2; ++i) {
    Vector up = u, um = u;
    up(i) += 1e-6;
    um(i) -= 1e-6;
    fd.col(i) = (remainder(ev, up) - remainder(ev, um)) / 2e-6;
  }
  EXPECT_LE((remainder_jacobian(ev, u) - fd).norm(), 1e-6 * (1 + fd.norm()));
}

TEST(IntervalEnclosure, ContainsSampledRemainders) {
  Rng rng = make_rng(10);
  for (int cfg = 0; cfg < 10; ++cfg) {
    PositionCase pc = random_admissible_case(rng);
    auto rb = make_offset_range_bearing(pc.a, pc.b);
    DynamicsModel m = make_linear_range_bearing_model(Matrix::Identity(2, 2), {pc.a, pc.b});
    RemainderEval ev(m, pc.center, pc.e, MapKind::kMeasurement);
    IntervalBox box;
    try {
      box = rb.remainder_enclosure(pc.center, pc.e);
    } catch (const IntervalBlowup&) {
      continue;
    }
    for (const auto& u : sample_unit_ball(2, 2000, rng)) {
      const Vector r = remainder(ev, u);
      for (int i = 0; i < 2; ++i) {
        EXPECT_GE(r(i), box.lower(i) - 1e-12);
        EXPECT_LE(r(i), box.upper(i) + 1e-12);
      }
    }
  }
}

TEST(IntervalEnclosure, BlowupWhenHorizontalOffsetStraddlesZero) {
  auto rb = make_offset_range_bearing(0, 0);
  EXPECT_THROW(rb.remainder_enclosure(vec({0.5, 10}), Matrix::Identity(2, 2)), IntervalBlowup);
}

TEST(IntervalEnclosure, LinearModelIsZeroBox) {
  DynamicsModel m = make_cv_tracking_model(0.2);
  IntervalBox box = m.f_enclosure(Vector::Zero(4), Matrix::Identity(4, 4));
  EXPECT_EQ(box.lower, Vector::Zero(4));
  EXPECT_EQ(box.upper, Vector::Zero(4));
}
