#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcsmf/ellipsoid.hpp"
#include "mcsmf/errors.hpp"

namespace mcsmf {

// Decision variables are stored as scalar slots of one vector y. Vector and
// symmetric-matrix variables are views onto consecutive slots. Every variable
// remembers the program it was created in, so handles from another program
// (or default-constructed ones) are rejected with UnknownVariable.

struct ScalarVar {
  std::uint64_t program = 0;
  int id = -1;
};

struct VectorVar {
  std::uint64_t program = 0;
  std::vector<int> ids;

  Eigen::Index size() const { return static_cast<Eigen::Index>(ids.size()); }
  ScalarVar operator[](Eigen::Index i) const { return {program, ids.at(i)}; }
};

/// Symmetric n x n matrix variable; slot for (i, j) with i <= j is packed row-wise.
struct MatrixVar {
  std::uint64_t program = 0;
  int dim = 0;
  std::vector<int> ids;

  int slot(int i, int j) const {
    if (i > j) std::swap(i, j);
    // Row i of the upper triangle starts after sum_{r<i} (dim - r) entries.
    return ids.at(static_cast<std::size_t>(i * dim - i * (i - 1) / 2 + (j - i)));
  }
  ScalarVar operator()(int i, int j) const { return {program, slot(i, j)}; }
};

enum class LmiSense {
  /// F(y) <= 0.
  kNegativeSemidefinite,
  /// Strict F(y) < 0 relaxed to F(y) <= -margin * I.
  kNegativeDefiniteMargin,
};

/// Affine symmetric matrix constraint F(y) = F0 + sum_i y_i F_i, F(y) <= 0.
class LmiBlock {
 public:
  explicit LmiBlock(Eigen::Index dim, LmiSense sense = LmiSense::kNegativeSemidefinite,
                    double margin = 0.0)
      : constant_(Matrix::Zero(dim, dim)), sense_(sense), margin_(margin) {
    if (dim <= 0) throw DimensionMismatch("LMI block must have positive dimension");
    if (sense == LmiSense::kNegativeDefiniteMargin && !(margin >= 0.0)) {
      throw Error("LMI margin must be non-negative");
    }
  }

  Eigen::Index dim() const { return constant_.rows(); }
  const Matrix& constant() const { return constant_; }
  const std::map<int, Matrix>& terms() const { return terms_; }
  LmiSense sense() const { return sense_; }
  double margin() const { return sense_ == LmiSense::kNegativeDefiniteMargin ? margin_ : 0.0; }
  std::uint64_t program() const { return program_; }

  /// Adds M at rows/cols [offset, offset + M.rows()).
  LmiBlock& add_constant(const Matrix& m, Eigen::Index offset = 0) {
    check_square_fits(m, offset);
    constant_.block(offset, offset, m.rows(), m.cols()) += symmetrized(m);
    return *this;
  }

  /// Adds the symmetric off-diagonal pair (rows r.., cols c..) = M and its transpose.
  LmiBlock& add_constant_offdiag(const Matrix& m, Eigen::Index row, Eigen::Index col) {
    check_offdiag_fits(m, row, col);
    constant_.block(row, col, m.rows(), m.cols()) += m;
    constant_.block(col, row, m.cols(), m.rows()) += m.transpose();
    return *this;
  }

  /// y_v * coeff, where coeff is a full dim x dim symmetric matrix.
  LmiBlock& add_term(ScalarVar v, const Matrix& coeff) {
    if (coeff.rows() != dim() || coeff.cols() != dim()) {
      throw DimensionMismatch("LMI term coefficient must be " + std::to_string(dim()) + "x" +
                              std::to_string(dim()));
    }
    bind(v.program, v.id);
    auto [it, inserted] = terms_.try_emplace(v.id, Matrix::Zero(dim(), dim()));
    it->second += symmetrized(coeff);
    return *this;
  }

  /// scale * M placed on the diagonal block starting at `offset`.
  LmiBlock& add_matrix_var(const MatrixVar& m, Eigen::Index offset, double scale = 1.0) {
    if (offset < 0 || offset + m.dim > dim()) {
      throw DimensionMismatch("matrix variable does not fit in LMI block");
    }
    for (int i = 0; i < m.dim; ++i) {
      for (int j = i; j < m.dim; ++j) {
        Matrix c = Matrix::Zero(dim(), dim());
        c(offset + i, offset + j) = scale;
        c(offset + j, offset + i) = scale;
        add_term(m(i, j), c);
      }
    }
    return *this;
  }

  /// sum_i v_i (e_{row+i} w^T + w e_{row+i}^T): the vector variable times the
  /// fixed vector w occupies the off-diagonal slots it touches.
  LmiBlock& add_vector_outer(const VectorVar& v, Eigen::Index row, const Vector& w) {
    if (w.size() != dim() || row < 0 || row + v.size() > dim()) {
      throw DimensionMismatch("vector variable term does not fit in LMI block");
    }
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      Matrix c = Matrix::Zero(dim(), dim());
      c.row(row + i) += w.transpose();
      c.col(row + i) += w;
      add_term(v[i], c);
    }
    return *this;
  }

  /// F(y) at a full assignment.
  Matrix evaluate(const Vector& y) const {
    Matrix f = constant_;
    for (const auto& [id, coeff] : terms_) {
      if (id >= y.size()) throw UnknownVariable("assignment is missing variable " + std::to_string(id));
      f += y(id) * coeff;
    }
    return f;
  }

  /// lambda_max(F(y) + margin I); <= 0 means the constraint holds exactly.
  double residual(const Vector& y) const {
    Matrix f = evaluate(y);
    f.diagonal().array() += margin();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(f, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().maxCoeff();
  }

 private:
  static Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

  void check_square_fits(const Matrix& m, Eigen::Index offset) const {
    if (m.rows() != m.cols() || offset < 0 || offset + m.rows() > dim()) {
      throw DimensionMismatch("constant does not fit in LMI block");
    }
  }
  void check_offdiag_fits(const Matrix& m, Eigen::Index row, Eigen::Index col) const {
    if (row < 0 || col < 0 || row + m.rows() > dim() || col + m.cols() > dim()) {
      throw DimensionMismatch("off-diagonal constant does not fit in LMI block");
    }
    const bool overlap = row < col + m.cols() && col < row + m.rows();
    if (overlap) throw DimensionMismatch("off-diagonal constant overlaps the diagonal");
  }
  void bind(std::uint64_t program, int id) {
    if (program == 0 || id < 0) throw UnknownVariable("LMI term uses an unregistered variable");
    if (program_ != 0 && program_ != program) {
      throw UnknownVariable("LMI block mixes variables from different programs");
    }
    program_ = program;
  }

  Matrix constant_;
  std::map<int, Matrix> terms_;
  LmiSense sense_;
  double margin_;
  std::uint64_t program_ = 0;
};

struct SolverOptions {
  double feasibility_tolerance = 1e-7;
  double gap_tolerance = 1e-9;
  int max_iterations = 100;
  int verbosity = 0;
};

enum class SolveStatus { kOptimal, kInfeasible, kNumericalFailure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kNumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

struct SolveReport {
  SolveStatus status = SolveStatus::kNumericalFailure;
  double objective = 0.0;
  /// Present iff status == kOptimal.
  std::optional<Vector> assignments;
  double wall_time = 0.0;
  int iterations = 0;
  /// max over blocks of lambda_max(F(y) + margin I) at the returned point.
  double max_residual = 0.0;
  std::string message;

  bool optimal() const { return status == SolveStatus::kOptimal; }

  double value(ScalarVar v) const { return y()(v.id); }

  Vector value(const VectorVar& v) const {
    Vector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = y()(v.ids[i]);
    return out;
  }

  Matrix value(const MatrixVar& m) const {
    Matrix out(m.dim, m.dim);
    for (int i = 0; i < m.dim; ++i)
      for (int j = i; j < m.dim; ++j) out(i, j) = out(j, i) = y()(m.slot(i, j));
    return out;
  }

 private:
  const Vector& y() const {
    if (!assignments) throw Error(std::string("no assignment: solve status ") + to_string(status));
    return *assignments;
  }
};

/// A semidefinite program: minimize c^T y subject to affine LMI blocks.
class ConicProgram {
 public:
  ConicProgram() : serial_(next_serial()) {}

  ScalarVar add_scalar() { return {serial_, allocate()}; }

  VectorVar add_vector(int n) {
    VectorVar v{serial_, {}};
    for (int i = 0; i < n; ++i) v.ids.push_back(allocate());
    return v;
  }

  MatrixVar add_matrix(int n) {
    if (n <= 0) throw DimensionMismatch("matrix variable needs positive dimension");
    MatrixVar m{serial_, n, {}};
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) m.ids.push_back(allocate());
    matrices_.push_back(m.ids.front());
    return m;
  }

  ConicProgram& add_lmi(LmiBlock block) {
    if (block.dim() <= 0) throw DimensionMismatch("empty LMI block");
    if (block.program() != 0 && block.program() != serial_) {
      throw UnknownVariable("LMI block references variables of another program");
    }
    for (const auto& [id, coeff] : block.terms()) {
      if (id >= num_variables()) throw UnknownVariable("LMI references unknown variable");
      (void)coeff;
    }
    blocks_.push_back(std::move(block));
    return *this;
  }

  /// Objective tr(m).
  ConicProgram& minimize_trace(const MatrixVar& m) {
    if (m.program != serial_ || m.ids.empty() ||
        std::find(matrices_.begin(), matrices_.end(), m.ids.front()) == matrices_.end()) {
      throw UnknownVariable("trace objective on a matrix variable not registered here");
    }
    objective_ = Vector::Zero(num_variables());
    for (int i = 0; i < m.dim; ++i) objective_(m.slot(i, i)) = 1.0;
    has_objective_ = true;
    return *this;
  }

  /// General linear objective sum_k w_k y_{v_k}.
  ConicProgram& minimize(const std::vector<std::pair<ScalarVar, double>>& weights) {
    objective_ = Vector::Zero(num_variables());
    for (const auto& [v, w] : weights) {
      if (v.program != serial_ || v.id < 0 || v.id >= num_variables()) {
        throw UnknownVariable("objective references an unregistered variable");
      }
      objective_(v.id) += w;
    }
    has_objective_ = true;
    return *this;
  }

  int num_variables() const { return next_id_; }
  const std::vector<LmiBlock>& blocks() const { return blocks_; }
  bool has_objective() const { return has_objective_; }
  /// Objective vector padded to the current variable count.
  Vector objective() const {
    Vector c = Vector::Zero(num_variables());
    c.head(objective_.size()) = objective_;
    return c;
  }

  double max_residual(const Vector& y) const {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& b : blocks_) worst = std::max(worst, b.residual(y));
    return worst;
  }

 private:
  static std::uint64_t next_serial() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
  }
  int allocate() { return next_id_++; }

  std::uint64_t serial_;
  int next_id_ = 0;
  std::vector<int> matrices_;
  std::vector<LmiBlock> blocks_;
  Vector objective_;
  bool has_objective_ = false;
};

/// Solver backend contract. Implementations must be safe to call concurrently
/// on distinct programs and deterministic for identical inputs.
class ConicBackend {
 public:
  virtual ~ConicBackend() = default;
  virtual std::string name() const = 0;
  virtual SolveReport solve(const ConicProgram& program, const SolverOptions& options) const = 0;
};

/// Front door for every solve: checks the objective, times the call, and
/// demotes an "optimal" answer whose LMI residual exceeds the tolerance.
inline SolveReport solve(const ConicProgram& program, const SolverOptions& options,
                         const ConicBackend& backend) {
  if (!program.has_objective()) throw Error("conic program has no objective");
  const auto start = std::chrono::steady_clock::now();
  SolveReport report = backend.solve(program, options);
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (report.optimal()) {
    report.max_residual = program.max_residual(*report.assignments);
    if (report.max_residual > options.feasibility_tolerance) {
      report.status = SolveStatus::kNumericalFailure;
      report.message = "LMI residual " + std::to_string(report.max_residual) +
                       " exceeds feasibility tolerance";
      report.assignments.reset();
    }
  } else {
    report.assignments.reset();
  }
  return report;
}

}  // namespace mcsmf
