#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcsmf/conic_program.hpp"
#include "mcsmf/dynamics.hpp"
#include "mcsmf/ellipsoid.hpp"
#include "mcsmf/errors.hpp"
#include "mcsmf/remainder_bounding.hpp"

namespace mcsmf {

/// Shape matrices of the zero-centered process (Q) and measurement (R) noise
/// bound ellipsoids.
struct NoiseBounds {
  Matrix q;
  Matrix r;
};

struct StepDiagnostics {
  std::optional<Ellipsoid> predicted;
  /// Remainder bounds used in the prediction (around x_k) and in the update
  /// (measurement remainder around the predicted center).
  std::optional<Ellipsoid> process_remainder;
  std::optional<Ellipsoid> measurement_remainder;
  std::optional<Ellipsoid> update_remainder;
  /// True when every measurement-remainder bound used boundary-only samples.
  bool boundary_sampling = false;
  /// Why boundary sampling was not used, when it was not.
  std::string fallback_reason;
  std::optional<SolveReport> predict_report;
  std::optional<SolveReport> update_report;
  double wall_time = 0.0;
};

struct FilterState {
  Ellipsoid estimate;
  int step = 0;
  StepDiagnostics diagnostics;
};

/// Data of the block LMI
///   [[-P, Phi Psi_perp], [(Phi Psi_perp)^T, -Psi_perp^T Xi(tau) Psi_perp]] <= 0.
/// The new center is parametrized as anchor + delta, so the first column of
/// Phi is -delta; `phi` holds the remaining columns with a zero first column.
/// Xi(tau) = xi_constant + sum_i tau_i * xi_terms[i].
struct LmiAssembly {
  Matrix phi;
  Matrix psi;
  Matrix psi_perp;
  Matrix xi_constant;
  std::vector<Matrix> xi_terms;
  /// Sizes of the partition of xi, starting with the leading 1.
  std::vector<Eigen::Index> partition;
  Vector anchor;
  /// Scale of the strict-positivity margin on P.
  double scale = 1.0;

  Eigen::Index state_dim() const { return phi.rows(); }
  Eigen::Index xi_dim() const { return phi.cols(); }

  Matrix xi(const Vector& tau) const {
    Matrix out = xi_constant;
    for (std::size_t i = 0; i < xi_terms.size(); ++i) out += tau(static_cast<Eigen::Index>(i)) * xi_terms[i];
    return out;
  }
};

/// Orthonormal basis of the null space of `psi` (columns), from a full SVD
/// with rank tolerance 1e-10 * sigma_max.
inline Matrix null_space_basis(const Matrix& psi) {
  const Eigen::Index cols = psi.cols();
  if (psi.rows() == 0) return Matrix::Identity(cols, cols);
  Eigen::JacobiSVD<Matrix> svd(psi, Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double tol = 1e-10 * (s.size() > 0 ? s(0) : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > tol ? 1 : 0;
  return svd.matrixV().rightCols(cols - rank);
}

namespace smf_detail {

inline Matrix inverse_spd(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(0.5 * (m + m.transpose()));
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(std::string(what) + " is not positive definite");
  return llt.solve(Matrix::Identity(m.rows(), m.cols()));
}

/// Xi = diag(1 - sum tau, tau_1 W_1, ..., tau_k W_k) split into constant and
/// per-multiplier parts. `weights[i]` is the block for multiplier i.
inline void set_multiplier_blocks(LmiAssembly& a, const std::vector<Matrix>& weights) {
  const Eigen::Index dim = a.xi_dim();
  a.xi_constant = Matrix::Zero(dim, dim);
  a.xi_constant(0, 0) = 1.0;
  a.partition = {1};
  Eigen::Index offset = 1;
  for (const auto& w : weights) {
    Matrix t = Matrix::Zero(dim, dim);
    t(0, 0) = -1.0;
    t.block(offset, offset, w.rows(), w.cols()) = w;
    a.xi_terms.push_back(std::move(t));
    a.partition.push_back(w.rows());
    offset += w.rows();
  }
}

inline double margin_scale(const Ellipsoid& e) {
  return std::max(1.0, e.trace() / static_cast<double>(e.dim()));
}

}  // namespace smf_detail

/// Prediction LMI data with xi = [1, u, w, v, Delta_f, Delta_h]. Without a
/// measurement the Psi row is dropped and Psi_perp is the identity.
inline LmiAssembly assemble_prediction(const Ellipsoid& estimate, const std::optional<Vector>& y,
                                       const DynamicsModel& model, const NoiseBounds& noise,
                                       const Ellipsoid& process_remainder, const Ellipsoid& measurement_remainder) {
  const Eigen::Index n = model.n, n1 = model.n1;
  if (estimate.dim() != n || noise.q.rows() != n || noise.r.rows() != n1 || process_remainder.dim() != n ||
      measurement_remainder.dim() != n1) {
    throw DimensionMismatch("prediction inputs do not match the model dimensions");
  }
  const Vector& x = estimate.center();
  const Matrix& e = estimate.factor().lower;
  const Eigen::Index dim = 1 + 3 * n + 2 * n1;

  LmiAssembly a;
  a.anchor = model.f(x) + process_remainder.center();
  a.scale = smf_detail::margin_scale(estimate);
  a.phi = Matrix::Zero(n, dim);
  a.phi.block(0, 1, n, n) = model.jf(x) * e;
  a.phi.block(0, 1 + n, n, n) = Matrix::Identity(n, n);
  a.phi.block(0, 1 + 2 * n + n1, n, n) = process_remainder.factor().lower;

  if (y) {
    if (y->size() != n1) throw DimensionMismatch("measurement has wrong dimension");
    a.psi = Matrix::Zero(n1, dim);
    a.psi.col(0) = model.wrap_residual(model.h(x) + measurement_remainder.center() - *y);
    a.psi.block(0, 1, n1, n) = model.jh(x) * e;
    a.psi.block(0, 1 + 2 * n, n1, n1) = Matrix::Identity(n1, n1);
    a.psi.block(0, 1 + 3 * n + n1, n1, n1) = measurement_remainder.factor().lower;
    a.psi_perp = null_space_basis(a.psi);
  } else {
    a.psi = Matrix::Zero(0, dim);
    a.psi_perp = Matrix::Identity(dim, dim);
  }
  smf_detail::set_multiplier_blocks(
      a, {Matrix::Identity(n, n), smf_detail::inverse_spd(noise.q, "process noise bound Q"),
          smf_detail::inverse_spd(noise.r, "measurement noise bound R"), Matrix::Identity(n, n),
          Matrix::Identity(n1, n1)});
  return a;
}

/// Update LMI data with xi = [1, u, v, Delta_h].
inline LmiAssembly assemble_update(const Ellipsoid& predicted, const Vector& y, const DynamicsModel& model,
                                   const NoiseBounds& noise, const Ellipsoid& measurement_remainder) {
  const Eigen::Index n = model.n, n1 = model.n1;
  if (predicted.dim() != n || noise.r.rows() != n1 || measurement_remainder.dim() != n1 || y.size() != n1) {
    throw DimensionMismatch("update inputs do not match the model dimensions");
  }
  const Vector& x = predicted.center();
  const Matrix& e = predicted.factor().lower;
  const Eigen::Index dim = 1 + n + 2 * n1;

  LmiAssembly a;
  a.anchor = x;
  a.scale = smf_detail::margin_scale(predicted);
  a.phi = Matrix::Zero(n, dim);
  a.phi.block(0, 1, n, n) = e;
  a.psi = Matrix::Zero(n1, dim);
  a.psi.col(0) = model.wrap_residual(model.h(x) + measurement_remainder.center() - y);
  a.psi.block(0, 1, n1, n) = model.jh(x) * e;
  a.psi.block(0, 1 + n, n1, n1) = Matrix::Identity(n1, n1);
  a.psi.block(0, 1 + n + n1, n1, n1) = measurement_remainder.factor().lower;
  a.psi_perp = null_space_basis(a.psi);
  smf_detail::set_multiplier_blocks(
      a, {Matrix::Identity(n, n), smf_detail::inverse_spd(noise.r, "measurement noise bound R"),
          Matrix::Identity(n1, n1)});
  return a;
}

/// The SDP built from an assembly, with handles to its variables.
struct StepProgram {
  ConicProgram program;
  MatrixVar shape;
  VectorVar offset;
  VectorVar tau;
};

/// Relative margin in -P <= -eps I.
constexpr double kShapeMargin = 1e-9;

inline StepProgram build_step_program(const LmiAssembly& a) {
  const Eigen::Index n = a.state_dim();
  const Eigen::Index r = a.psi_perp.cols();
  StepProgram sp;
  sp.shape = sp.program.add_matrix(static_cast<int>(n));
  sp.offset = sp.program.add_vector(static_cast<int>(n));
  sp.tau = sp.program.add_vector(static_cast<int>(a.xi_terms.size()));

  LmiBlock main(n + r);
  main.add_matrix_var(sp.shape, 0, -1.0);
  main.add_constant_offdiag(a.phi * a.psi_perp, 0, n);
  Vector w = Vector::Zero(n + r);
  w.tail(r) = -a.psi_perp.row(0).transpose();
  main.add_vector_outer(sp.offset, 0, w);
  Matrix pad = Matrix::Zero(n + r, n + r);
  pad.bottomRightCorner(r, r) = -a.psi_perp.transpose() * a.xi_constant * a.psi_perp;
  main.add_constant(pad);
  for (std::size_t i = 0; i < a.xi_terms.size(); ++i) {
    pad.setZero();
    pad.bottomRightCorner(r, r) = -a.psi_perp.transpose() * a.xi_terms[i] * a.psi_perp;
    main.add_term(sp.tau[static_cast<Eigen::Index>(i)], pad);
  }
  sp.program.add_lmi(std::move(main));

  const auto k = static_cast<Eigen::Index>(a.xi_terms.size());
  LmiBlock nonneg(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    Matrix c = Matrix::Zero(k, k);
    c(i, i) = -1.0;
    nonneg.add_term(sp.tau[i], c);
  }
  sp.program.add_lmi(std::move(nonneg));

  LmiBlock positive(n, LmiSense::kNegativeDefiniteMargin, kShapeMargin * a.scale);
  positive.add_matrix_var(sp.shape, 0, -1.0);
  sp.program.add_lmi(std::move(positive)).minimize_trace(sp.shape);
  return sp;
}

struct StepSolution {
  Ellipsoid ellipsoid;
  SolveReport report;
  Vector tau;
};

/// Solve the step SDP. Infeasibility raises `Infeasible`; any other failure
/// raises SolverFailure. Both carry `step`.
template <class Infeasible>
StepSolution solve_step(const LmiAssembly& a, const ConicBackend& backend, const SolverOptions& options,
                        int step, const char* what) {
  StepProgram sp = build_step_program(a);
  SolveReport report = solve(sp.program, options, backend);
  if (report.status == SolveStatus::kInfeasible) {
    throw Infeasible(std::string(what) + " SDP is infeasible: " + report.message, step);
  }
  if (!report.optimal()) {
    throw SolverFailure(std::string(what) + " SDP failed: " + to_string(report.status) + " (" +
                            report.message + ")",
                        step);
  }
  // With the margin on P an empty consistent set does not make the SDP
  // infeasible; the S-procedure certifies emptiness and P collapses onto
  // the margin instead.
  const Matrix shape = report.value(sp.shape);
  if (shape.trace() <= 10.0 * kShapeMargin * a.scale * static_cast<double>(shape.rows())) {
    throw Infeasible(std::string(what) + " SDP collapsed onto its margin: the consistent set is empty", step);
  }
  try {
    Ellipsoid ell(a.anchor + report.value(sp.offset), shape);
    Vector tau = report.value(sp.tau);
    return {std::move(ell), std::move(report), std::move(tau)};
  } catch (const NotPositiveDefinite& err) {
    throw SolverFailure(std::string(what) + " SDP returned an invalid shape: " + err.what(), step);
  }
}

/// Prediction: bounding ellipsoid of x_{k+1} given E_k and y_k.
inline FilterState predict_step(const FilterState& state, const std::optional<Vector>& y, const DynamicsModel& model,
                                const NoiseBounds& noise, const Ellipsoid& process_remainder,
                                const Ellipsoid& measurement_remainder, const ConicBackend& backend,
                                const SolverOptions& options = {}) {
  const LmiAssembly a =
      assemble_prediction(state.estimate, y, model, noise, process_remainder, measurement_remainder);
  StepSolution sol = solve_step<InfeasiblePrediction>(a, backend, options, state.step, "prediction");
  FilterState out{sol.ellipsoid, state.step + 1, {}};
  out.diagnostics.predicted = sol.ellipsoid;
  out.diagnostics.process_remainder = process_remainder;
  out.diagnostics.measurement_remainder = measurement_remainder;
  out.diagnostics.predict_report = std::move(sol.report);
  return out;
}

/// Measurement update of a predicted state with y_{k+1}.
inline FilterState update_step(const FilterState& predicted, const Vector& y, const DynamicsModel& model,
                               const NoiseBounds& noise, const Ellipsoid& measurement_remainder,
                               const ConicBackend& backend, const SolverOptions& options = {}) {
  const LmiAssembly a = assemble_update(predicted.estimate, y, model, noise, measurement_remainder);
  StepSolution sol = solve_step<InfeasibleUpdate>(a, backend, options, predicted.step, "update");
  FilterState out = predicted;
  out.estimate = sol.ellipsoid;
  out.diagnostics.update_remainder = measurement_remainder;
  out.diagnostics.update_report = std::move(sol.report);
  return out;
}

struct FilterOptions {
  /// Plan for measurement remainders when boundary sampling applies.
  SamplePlan boundary_plan{};
  /// Plan for every other remainder (nonlinear process maps, measurement
  /// maps without the boundary property, or when applicability fails).
  SamplePlan ball_plan = SamplePlan::ball();
  /// Skip boundary-only sampling even where it applies.
  bool force_ball = false;
  /// Use the interval-arithmetic bounder instead of sampling.
  bool interval_remainders = false;
  SolverOptions solver{};
};

namespace smf_detail {

inline SamplePlan reseeded(SamplePlan plan, int step, int slot) {
  plan.seed = plan.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(step) * 4 +
              static_cast<std::uint64_t>(slot);
  return plan;
}

/// Bound one remainder per the options; records how it was sampled.
inline Ellipsoid bound_for_step(const RemainderEval& ev, const FilterOptions& opts, const ConicBackend& backend,
                                int step, int slot, StepDiagnostics& diag) {
  try {
    if (opts.interval_remainders) {
      if (ev.kind == MapKind::kMeasurement) {
        diag.boundary_sampling = false;
        diag.fallback_reason = "interval remainder bounds";
      }
      return bound_remainder_interval(ev, backend, opts.solver).ellipsoid;
    }
    if (ev.kind == MapKind::kMeasurement) {
      const DynamicsModel& m = *ev.model;
      std::string reason;
      if (opts.force_ball) {
        reason = "boundary sampling disabled";
      } else if (!m.sensor) {
        reason = "measurement map has no boundary-sampling guarantee";
      } else {
        const auto app = check_boundary_applicable(ev.base, ev.e, m.sensor->a, m.sensor->b);
        if (app.holds) return bound_remainder(ev, opts.boundary_plan, backend, opts.solver).ellipsoid;
        reason = app.reason;
      }
      diag.boundary_sampling = false;
      if (diag.fallback_reason.empty()) diag.fallback_reason = reason;
    }
    return bound_remainder(ev, reseeded(opts.ball_plan, step, slot), backend, opts.solver).ellipsoid;
  } catch (SolverFailure& err) {
    throw SolverFailure("remainder bound: " + err.message(), step);
  }
}

}  // namespace smf_detail

/// One full cycle (bound, predict, re-bound, update) from E_k with y_k and y_{k+1}.
inline FilterState filter_cycle(const FilterState& state, const std::optional<Vector>& y_now, const Vector& y_next,
                                const DynamicsModel& model, const NoiseBounds& noise, const ConicBackend& backend,
                                const FilterOptions& opts = {}) {
  const auto start = std::chrono::steady_clock::now();
  const int k = state.step;
  StepDiagnostics diag;
  diag.boundary_sampling = true;
  const Matrix& e = state.estimate.factor().lower;
  const Vector& x = state.estimate.center();
  const Ellipsoid ef = smf_detail::bound_for_step(RemainderEval(model, x, e, MapKind::kProcess), opts, backend, k, 0, diag);
  const Ellipsoid eh = smf_detail::bound_for_step(RemainderEval(model, x, e, MapKind::kMeasurement), opts, backend, k, 1, diag);
  FilterState pred = predict_step(state, y_now, model, noise, ef, eh, backend, opts.solver);

  const Ellipsoid& p = pred.estimate;
  const Ellipsoid eh_next = smf_detail::bound_for_step(
      RemainderEval(model, p.center(), p.factor().lower, MapKind::kMeasurement), opts, backend, k, 2, diag);
  FilterState out = update_step(pred, y_next, model, noise, eh_next, backend, opts.solver);
  const bool boundary = diag.boundary_sampling;
  const std::string reason = diag.fallback_reason;
  out.diagnostics.boundary_sampling = boundary;
  out.diagnostics.fallback_reason = reason;
  out.diagnostics.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Run the filter from E_0 over measurements y_0..y_K; returns E_0..E_K.
/// Prediction from step k uses y_k, the update uses y_{k+1}. Errors carry the
/// step index; an infeasible update aborts the run.
inline std::vector<FilterState> run_filter(const Ellipsoid& init, const std::vector<Vector>& measurements,
                                           const DynamicsModel& model, const NoiseBounds& noise,
                                           const ConicBackend& backend, const FilterOptions& opts = {}) {
  std::vector<FilterState> states{FilterState{init, 0, {}}};
  for (std::size_t k = 0; k + 1 < measurements.size(); ++k) {
    states.push_back(filter_cycle(states.back(), measurements[k], measurements[k + 1], model, noise, backend, opts));
  }
  return states;
}

}  // namespace mcsmf
