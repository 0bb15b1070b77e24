#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "mcsmf/ellipsoid.hpp"
#include "mcsmf/errors.hpp"
#include "mcsmf/interval.hpp"

namespace mcsmf {

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::remainder(a, two_pi);  // in [-pi, pi]
  if (r <= -std::numbers::pi) r += two_pi;
  return r;
}

/// Sensor placed at (a, b) in the plane of the first two state coordinates.
struct SensorPosition {
  double a = 0.0;
  double b = 0.0;
};

/// Range and bearing from the sensor to the point (x(0), x(1)). The bearing is
/// atan2 and is discontinuous on the radial {x(0) <= a, x(1) = b}.
class RangeBearing {
 public:
  explicit RangeBearing(SensorPosition s = {}) : sensor_(s) {}

  const SensorPosition& sensor() const { return sensor_; }

  bool on_radial(const Vector& x) const { return x(1) == sensor_.b && x(0) <= sensor_.a; }

  Vector operator()(const Vector& x) const {
    check(x);
    const double dx = x(0) - sensor_.a, dy = x(1) - sensor_.b;
    Vector out(2);
    out << std::hypot(dx, dy), std::atan2(dy, dx);
    return out;
  }

  /// 2 x dim Jacobian; only the first two columns are nonzero.
  Matrix jacobian(const Vector& x) const {
    check(x);
    const double dx = x(0) - sensor_.a, dy = x(1) - sensor_.b;
    const double r2 = dx * dx + dy * dy;
    const double r = std::sqrt(r2);
    Matrix j = Matrix::Zero(2, x.size());
    j(0, 0) = dx / r;
    j(0, 1) = dy / r;
    j(1, 0) = -dy / r2;
    j(1, 1) = dx / r2;
    return j;
  }

  /// Natural interval extension of the measurement remainder
  /// h(x + E u) - h(x) - J_h(x) E u over the box u in [-1, 1]^dim.
  IntervalBox remainder_enclosure(const Vector& base, const Matrix& e) const {
    const auto dim = static_cast<std::size_t>(e.cols());
    IntervalVector u(dim, Interval(-1.0, 1.0));
    IntervalVector eu = multiply(e, u);
    const Interval dx = base(0) + eu[0] - sensor_.a;
    const Interval dy = base(1) + eu[1] - sensor_.b;
    if (boost::numeric::zero_in(dx)) {
      throw IntervalBlowup("bearing enclosure divides by an interval containing zero: x(1) - a in [" +
                           std::to_string(dx.lower()) + ", " + std::to_string(dx.upper()) + "]");
    }
    const Interval range = sqrt(square(dx) + square(dy));
    Interval bearing = atan(dy / dx);
    if (dx.upper() < 0.0) {
      if (dy.lower() > 0.0) {
        bearing += std::numbers::pi;
      } else if (dy.upper() < 0.0) {
        bearing -= std::numbers::pi;
      } else {
        throw IntervalBlowup("bearing enclosure straddles the sensor radial");
      }
    }
    const Vector h0 = (*this)(base);
    IntervalVector lin = multiply(jacobian(base) * e, u);
    return to_box({range - h0(0) - lin[0], bearing - h0(1) - lin[1]});
  }

 private:
  void check(const Vector& x) const {
    if (x.size() < 2) throw DimensionMismatch("range-bearing map needs at least two state coordinates");
    if (on_radial(x)) {
      throw OnSensorRadial("point (" + std::to_string(x(0)) + ", " + std::to_string(x(1)) +
                           ") lies on the sensor radial x(1) <= " + std::to_string(sensor_.a) +
                           ", x(2) = " + std::to_string(sensor_.b));
    }
  }

  SensorPosition sensor_;
};

/// Offset range-bearing measurement map for a sensor at (a, b).
inline RangeBearing make_offset_range_bearing(double a, double b) { return RangeBearing({a, b}); }

/// Process map f, measurement map h, and their analytic Jacobians.
struct DynamicsModel {
  using Map = std::function<Vector(const Vector&)>;
  using JacobianMap = std::function<Matrix(const Vector&)>;
  using Enclosure = std::function<IntervalBox(const Vector& base, const Matrix& e)>;

  int n = 0;
  int n1 = 0;
  Map f;
  Map h;
  JacobianMap jf;
  JacobianMap jh;
  /// Measurement coordinates holding angles; their residuals are wrapped.
  std::vector<bool> angular;
  /// Set when h is a range-bearing map on the first two state coordinates.
  std::optional<SensorPosition> sensor;
  bool f_linear = false;
  bool h_linear = false;
  /// Number of leading state coordinates h depends on (n when unknown).
  int h_input_dims = 0;
  /// Interval enclosures of the remainders over u in [-1, 1]^n; may be empty.
  Enclosure f_enclosure;
  Enclosure h_enclosure;

  /// Wrap the angular components of a measurement-space difference.
  Vector wrap_residual(Vector r) const {
    for (int i = 0; i < n1; ++i) {
      if (angular[static_cast<std::size_t>(i)]) r(i) = wrap_angle(r(i));
    }
    return r;
  }
};

namespace dynamics_detail {

inline DynamicsModel::Enclosure zero_enclosure(int out_dim) {
  return [out_dim](const Vector&, const Matrix&) {
    return IntervalBox{Vector::Zero(out_dim), Vector::Zero(out_dim)};
  };
}

inline void set_linear_process(DynamicsModel& m, const Matrix& f) {
  m.n = static_cast<int>(f.rows());
  m.f = [f](const Vector& x) -> Vector { return f * x; };
  m.jf = [f](const Vector&) -> Matrix { return f; };
  m.f_linear = true;
  m.f_enclosure = zero_enclosure(m.n);
}

}  // namespace dynamics_detail

/// Linear process x' = F x with range-bearing measurements from `sensor`.
inline DynamicsModel make_linear_range_bearing_model(const Matrix& f, SensorPosition sensor = {}) {
  if (f.rows() != f.cols() || f.rows() < 2) {
    throw DimensionMismatch("process matrix must be square with at least two rows");
  }
  DynamicsModel m;
  dynamics_detail::set_linear_process(m, f);
  RangeBearing rb(sensor);
  m.n1 = 2;
  m.h = [rb](const Vector& x) { return rb(x); };
  m.jh = [rb](const Vector& x) { return rb.jacobian(x); };
  m.angular = {false, true};
  m.sensor = sensor;
  m.h_input_dims = 2;
  m.h_enclosure = [rb](const Vector& base, const Matrix& e) { return rb.remainder_enclosure(base, e); };
  return m;
}

/// Constant-velocity transition for state (px, py, vx, vy) and period t.
inline Matrix cv_transition(double t) {
  if (!(t > 0.0)) throw Error("sampling period must be positive, got " + std::to_string(t));
  Matrix f = Matrix::Identity(4, 4);
  f(0, 2) = t;
  f(1, 3) = t;
  return f;
}

/// Constant-velocity target observed in range and bearing from the origin.
inline DynamicsModel make_cv_tracking_model(double t) {
  return make_linear_range_bearing_model(cv_transition(t));
}

/// Fully linear model x' = F x, y = H x.
inline DynamicsModel make_linear_model(const Matrix& f, const Matrix& h) {
  if (f.rows() != f.cols()) throw DimensionMismatch("process matrix must be square");
  if (h.cols() != f.rows()) throw DimensionMismatch("measurement matrix column count must equal state dimension");
  DynamicsModel m;
  dynamics_detail::set_linear_process(m, f);
  m.n1 = static_cast<int>(h.rows());
  m.h = [h](const Vector& x) -> Vector { return h * x; };
  m.jh = [h](const Vector&) -> Matrix { return h; };
  m.angular.assign(static_cast<std::size_t>(m.n1), false);
  m.h_linear = true;
  m.h_input_dims = m.n;
  m.h_enclosure = dynamics_detail::zero_enclosure(m.n1);
  return m;
}

enum class MapKind { kProcess, kMeasurement };

/// Remainder of the first-order expansion of f or h around `base` along the
/// ellipsoid parametrization base + E u.
struct RemainderEval {
  const DynamicsModel* model = nullptr;
  Vector base;
  Matrix e;
  MapKind kind = MapKind::kProcess;

  RemainderEval(const DynamicsModel& m, Vector base_point, Matrix factor, MapKind k)
      : model(&m), base(std::move(base_point)), e(std::move(factor)), kind(k) {
    if (base.size() != m.n || e.rows() != m.n || e.cols() != m.n) {
      throw DimensionMismatch("remainder evaluator needs an n-vector and an n x n factor");
    }
    value0_ = map()(base);
    linear_ = jacobian()(base) * e;
  }

  int output_dim() const { return kind == MapKind::kProcess ? model->n : model->n1; }
  bool exactly_zero() const { return kind == MapKind::kProcess ? model->f_linear : model->h_linear; }
  const Vector& value_at_base() const { return value0_; }
  /// J(base) * E.
  const Matrix& linear_part() const { return linear_; }

  const DynamicsModel::Map& map() const { return kind == MapKind::kProcess ? model->f : model->h; }
  const DynamicsModel::JacobianMap& jacobian() const {
    return kind == MapKind::kProcess ? model->jf : model->jh;
  }

 private:
  Vector value0_;
  Matrix linear_;
};

/// Delta(u) = map(base + E u) - map(base) - J(base) E u, with angular
/// measurement components of the difference wrapped to (-pi, pi].
inline Vector remainder(const RemainderEval& ev, const Vector& u) {
  if (u.size() != ev.e.cols()) throw DimensionMismatch("remainder argument has wrong dimension");
  if (u.norm() > 1.0 + 1e-12) {
    throw OutOfBall("remainder argument has norm " + std::to_string(u.norm()) + " > 1");
  }
  Vector diff = ev.map()(ev.base + ev.e * u) - ev.value_at_base();
  if (ev.kind == MapKind::kMeasurement) diff = ev.model->wrap_residual(std::move(diff));
  return diff - ev.linear_part() * u;
}

/// Derivative of the remainder with respect to u: (J(base + E u) - J(base)) E.
inline Matrix remainder_jacobian(const RemainderEval& ev, const Vector& u) {
  if (u.size() != ev.e.cols()) throw DimensionMismatch("remainder argument has wrong dimension");
  return ev.jacobian()(ev.base + ev.e * u) * ev.e - ev.linear_part();
}

}  // namespace mcsmf
