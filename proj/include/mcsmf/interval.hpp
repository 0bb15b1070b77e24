#pragma once

#include <boost/numeric/interval.hpp>

#include <vector>

#include "mcsmf/ellipsoid.hpp"

namespace mcsmf {

namespace interval_detail {
using namespace boost::numeric::interval_lib;
using Policies = policies<save_state<rounded_transc_std<double>>, checking_base<double>>;
}  // namespace interval_detail

using Interval = boost::numeric::interval<double, interval_detail::Policies>;
using IntervalVector = std::vector<Interval>;

/// Axis-aligned box [lower, upper].
struct IntervalBox {
  Vector lower;
  Vector upper;

  Eigen::Index dim() const { return lower.size(); }
  Vector center() const { return 0.5 * (lower + upper); }
  Vector half_width() const { return 0.5 * (upper - lower); }
};

inline IntervalBox to_box(const IntervalVector& v) {
  IntervalBox box{Vector(static_cast<Eigen::Index>(v.size())), Vector(static_cast<Eigen::Index>(v.size()))};
  for (std::size_t i = 0; i < v.size(); ++i) {
    box.lower(static_cast<Eigen::Index>(i)) = v[i].lower();
    box.upper(static_cast<Eigen::Index>(i)) = v[i].upper();
  }
  return box;
}

/// Interval image of A·U for a point matrix A and interval vector U.
inline IntervalVector multiply(const Matrix& a, const IntervalVector& u) {
  if (a.cols() != static_cast<Eigen::Index>(u.size())) {
    throw DimensionMismatch("interval product: matrix has " + std::to_string(a.cols()) +
                            " columns, vector has " + std::to_string(u.size()) + " entries");
  }
  IntervalVector out(static_cast<std::size_t>(a.rows()), Interval(0.0));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) out[i] += a(i, j) * u[static_cast<std::size_t>(j)];
  }
  return out;
}

/// Vertices of a box. Zero-width coordinates do not double the count.
inline std::vector<Vector> box_vertices(const IntervalBox& box) {
  std::vector<Vector> out{box.lower};
  for (Eigen::Index i = 0; i < box.dim(); ++i) {
    if (box.upper(i) == box.lower(i)) continue;
    const std::size_t count = out.size();
    for (std::size_t k = 0; k < count; ++k) {
      Vector v = out[k];
      v(i) = box.upper(i);
      out.push_back(std::move(v));
    }
  }
  return out;
}

}  // namespace mcsmf
