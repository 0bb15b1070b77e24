#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mcsmf/conic_program.hpp"

namespace mcsmf {

/// Dense primal-dual interior-point method for block-diagonal SDPs.
///
/// A ConicProgram "minimize c^T y s.t. F_b(y) + m_b I <= 0" is the dual
/// standard form
///
///   max b^T y   s.t.   Z_b = C_b - sum_i y_i A_ib >= 0,
///
/// with b = -c, C_b = -(F0_b + m_b I), A_ib = F_ib. Its primal is
/// min <C, X> s.t. <A_i, X> = b_i, X >= 0. Iterates follow the HKM search
/// direction with a Mehrotra predictor-corrector and start from scaled
/// identities (infeasible start). Infeasibility is detected from the
/// Farkas-type rays X (A(X) ~ 0, <C, X> < 0) and y (A*(y) <= 0, b^T y > 0).
class InteriorPointBackend final : public ConicBackend {
 public:
  std::string name() const override { return "hkm-ipm"; }

  SolveReport solve(const ConicProgram& program, const SolverOptions& options) const override {
    Problem p = lower(program);
    return run(p, options);
  }

 private:
  struct Block {
    Eigen::Index dim = 0;
    Matrix c;
    std::vector<int> vars;
    std::vector<Matrix> coeffs;
  };

  struct Problem {
    int m = 0;
    Vector b;
    std::vector<Block> blocks;
    std::vector<bool> used;
  };

  struct Iterate {
    std::vector<Matrix> x, z;
    Vector y;
  };

  static Problem lower(const ConicProgram& program) {
    Problem p;
    p.m = program.num_variables();
    p.b = -program.objective();
    p.used.assign(p.m, false);
    for (const auto& lmi : program.blocks()) {
      Block blk;
      blk.dim = lmi.dim();
      blk.c = -lmi.constant();
      blk.c.diagonal().array() -= lmi.margin();
      for (const auto& [id, coeff] : lmi.terms()) {
        if (coeff.cwiseAbs().maxCoeff() == 0.0) continue;
        blk.vars.push_back(id);
        blk.coeffs.push_back(coeff);
        p.used[id] = true;
      }
      p.blocks.push_back(std::move(blk));
    }
    return p;
  }

  static double inner(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

  // A(M)_i = sum_b <A_ib, M_b>; M_b need not be symmetric since A_ib is.
  static Vector apply_a(const Problem& p, const std::vector<Matrix>& mats) {
    Vector out = Vector::Zero(p.m);
    for (std::size_t k = 0; k < p.blocks.size(); ++k) {
      const auto& blk = p.blocks[k];
      for (std::size_t t = 0; t < blk.vars.size(); ++t) out(blk.vars[t]) += inner(blk.coeffs[t], mats[k]);
    }
    return out;
  }

  static Matrix apply_at(const Block& blk, const Vector& y) {
    Matrix out = Matrix::Zero(blk.dim, blk.dim);
    for (std::size_t t = 0; t < blk.vars.size(); ++t) out += y(blk.vars[t]) * blk.coeffs[t];
    return out;
  }

  // Largest alpha with M + alpha dM >= 0, given the Cholesky factor of M.
  static double max_step(const Matrix& lower, const Matrix& dm) {
    const auto l = lower.triangularView<Eigen::Lower>();
    Matrix s = l.solve(dm);
    s = l.solve(s.transpose()).transpose();
    s = 0.5 * (s + s.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    return lmin >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
  }

  static SolveReport run(const Problem& p, const SolverOptions& opts) {
    SolveReport report;
    const int m = p.m;
    for (int i = 0; i < m; ++i) {
      if (!p.used[i] && p.b(i) != 0.0) {
        report.status = SolveStatus::kNumericalFailure;
        report.message = "objective variable " + std::to_string(i) +
                         " appears in no constraint (unbounded)";
        return report;
      }
    }
    if (p.blocks.empty()) {
      report.status = SolveStatus::kOptimal;
      report.assignments = Vector::Zero(m);
      report.message = "no constraints";
      return report;
    }

    double norm_b = p.b.norm();
    double norm_c = 0.0;
    Eigen::Index n_total = 0;
    for (const auto& blk : p.blocks) {
      norm_c += blk.c.squaredNorm();
      n_total += blk.dim;
    }
    norm_c = std::sqrt(norm_c);

    Iterate it;
    it.y = Vector::Zero(m);
    for (const auto& blk : p.blocks) {
      const double n = static_cast<double>(blk.dim);
      double xi = std::max(10.0, std::sqrt(n));
      double eta = std::max({10.0, std::sqrt(n), blk.c.norm()});
      for (std::size_t t = 0; t < blk.vars.size(); ++t) {
        const double an = blk.coeffs[t].norm();
        xi = std::max(xi, n * (1.0 + std::abs(p.b(blk.vars[t]))) / (1.0 + an));
        eta = std::max(eta, an);
      }
      it.x.push_back(xi * Matrix::Identity(blk.dim, blk.dim));
      it.z.push_back(eta * Matrix::Identity(blk.dim, blk.dim));
    }

    const std::size_t nb = p.blocks.size();
    std::vector<Matrix> lx(nb), lz(nb), zinv(nb), rd(nb);
    double best_gap = std::numeric_limits<double>::infinity();
    // Last iterate accurate enough to return if later iterations break down.
    std::optional<Vector> fallback_y;
    double fallback_obj = 0.0;
    auto reduced_accuracy = [&](const std::string& why) {
      report.status = SolveStatus::kOptimal;
      report.objective = fallback_obj;
      report.assignments = *fallback_y;
      report.message = "reduced accuracy (" + why + ")";
      return report;
    };

    for (int iter = 0; iter <= opts.max_iterations; ++iter) {
      report.iterations = iter;
      bool factor_ok = true;
      for (std::size_t k = 0; k < nb; ++k) {
        Eigen::LLT<Matrix> cx(it.x[k]), cz(it.z[k]);
        if (cx.info() != Eigen::Success || cz.info() != Eigen::Success) {
          factor_ok = false;
          break;
        }
        lx[k] = cx.matrixL();
        lz[k] = cz.matrixL();
        zinv[k] = cz.solve(Matrix::Identity(p.blocks[k].dim, p.blocks[k].dim));
        zinv[k] = 0.5 * (zinv[k] + zinv[k].transpose());
        rd[k] = p.blocks[k].c - apply_at(p.blocks[k], it.y) - it.z[k];
      }
      if (!factor_ok) {
        if (fallback_y) return reduced_accuracy("iterate lost positive definiteness");
        report.status = SolveStatus::kNumericalFailure;
        report.message = "iterate lost positive definiteness";
        return report;
      }

      const Vector ax = apply_a(p, it.x);
      const Vector rp = p.b - ax;
      double pobj = 0.0, xz = 0.0, rd_norm = 0.0;
      for (std::size_t k = 0; k < nb; ++k) {
        pobj += inner(p.blocks[k].c, it.x[k]);
        xz += inner(it.x[k], it.z[k]);
        rd_norm += rd[k].squaredNorm();
      }
      rd_norm = std::sqrt(rd_norm);
      const double dobj = p.b.dot(it.y);
      const double mu = xz / static_cast<double>(n_total);
      const double pinf = rp.norm() / (1.0 + norm_b);
      const double dinf = rd_norm / (1.0 + norm_c);
      const double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
      const double compl_gap = xz / (1.0 + std::abs(pobj) + std::abs(dobj));

      if (opts.verbosity > 1) {
        std::fprintf(stderr, "ipm %3d  pobj %+.10e  dobj %+.10e  pinf %.2e  dinf %.2e  gap %.2e\n",
                     iter, pobj, dobj, pinf, dinf, gap);
      }

      const double feas_tol = std::min(opts.feasibility_tolerance, 1e-3);
      const double gap_tol = std::min(opts.gap_tolerance, 1e-3);
      if (pinf < feas_tol && dinf < feas_tol && gap < gap_tol && compl_gap < gap_tol) {
        report.status = SolveStatus::kOptimal;
        report.objective = -dobj;
        report.assignments = it.y;
        report.message = "converged";
        return report;
      }

      // Ray tests. The ratios compare the ray's defect to its objective value.
      if (pobj < 0.0 && ax.norm() <= 1e-8 * (-pobj) && -pobj > 1e6 * (1.0 + norm_b)) {
        report.status = SolveStatus::kInfeasible;
        report.message = "primal ray certifies infeasible constraints";
        return report;
      }
      if (dobj > 0.0) {
        double worst = -std::numeric_limits<double>::infinity();
        for (const auto& blk : p.blocks) {
          Eigen::SelfAdjointEigenSolver<Matrix> eig(apply_at(blk, it.y), Eigen::EigenvaluesOnly);
          worst = std::max(worst, eig.eigenvalues().maxCoeff());
        }
        if (worst <= 1e-8 * dobj && dobj > 1e8 * (1.0 + norm_c)) {
          report.status = SolveStatus::kNumericalFailure;
          report.message = "objective is unbounded below";
          return report;
        }
      }

      if (pinf < std::sqrt(feas_tol) && dinf < feas_tol && gap < 1e-6 && compl_gap < 1e-6) {
        fallback_y = it.y;
        fallback_obj = -dobj;
      }

      if (iter == opts.max_iterations) {
        best_gap = std::min(best_gap, gap);
        break;
      }

      // Schur complement M_ij = sum_b tr(A_i X A_j Z^{-1}).
      Matrix schur = Matrix::Zero(m, m);
      for (std::size_t k = 0; k < nb; ++k) {
        const auto& blk = p.blocks[k];
        for (std::size_t tj = 0; tj < blk.vars.size(); ++tj) {
          const Matrix w = it.x[k] * blk.coeffs[tj] * zinv[k];
          for (std::size_t ti = 0; ti < blk.vars.size(); ++ti) {
            schur(blk.vars[ti], blk.vars[tj]) += blk.coeffs[ti].cwiseProduct(w.transpose()).sum();
          }
        }
      }
      schur = 0.5 * (schur + schur.transpose());
      for (int i = 0; i < m; ++i) {
        if (!p.used[i]) schur(i, i) = 1.0;
      }
      Eigen::LLT<Matrix> schur_llt(schur);
      Eigen::LDLT<Matrix> schur_ldlt;
      const bool use_llt = schur_llt.info() == Eigen::Success;
      if (!use_llt) {
        Matrix reg = schur;
        reg.diagonal().array() += 1e-14 * std::max(1.0, schur.diagonal().cwiseAbs().maxCoeff());
        schur_ldlt.compute(reg);
        if (schur_ldlt.info() != Eigen::Success) {
          if (fallback_y) return reduced_accuracy("Schur complement factorization failed");
          report.status = SolveStatus::kNumericalFailure;
          report.message = "Schur complement factorization failed";
          return report;
        }
      }
      auto schur_solve = [&](const Vector& rhs) -> Vector {
        Vector s = use_llt ? Vector(schur_llt.solve(rhs)) : Vector(schur_ldlt.solve(rhs));
        for (int i = 0; i < m; ++i) {
          if (!p.used[i]) s(i) = -it.y(i);
        }
        return s;
      };

      std::vector<Matrix> x_rd_zinv(nb);
      for (std::size_t k = 0; k < nb; ++k) x_rd_zinv[k] = it.x[k] * rd[k] * zinv[k];
      const Vector a_x_rd_zinv = apply_a(p, x_rd_zinv);
      const Vector a_zinv = apply_a(p, zinv);

      // dX for given (dy, extra) where extra is the non-Newton right-hand side.
      auto directions = [&](const Vector& dy, double sigma_mu, const std::vector<Matrix>* second,
                            std::vector<Matrix>& dx, std::vector<Matrix>& dz) {
        dx.resize(nb);
        dz.resize(nb);
        for (std::size_t k = 0; k < nb; ++k) {
          dz[k] = rd[k] - apply_at(p.blocks[k], dy);
          Matrix d = sigma_mu * zinv[k] - it.x[k] - it.x[k] * dz[k] * zinv[k];
          if (second) d -= (*second)[k];
          dx[k] = 0.5 * (d + d.transpose());
        }
      };
      auto step_lengths = [&](const std::vector<Matrix>& dx, const std::vector<Matrix>& dz) {
        double ap = std::numeric_limits<double>::infinity();
        double ad = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < nb; ++k) {
          ap = std::min(ap, max_step(lx[k], dx[k]));
          ad = std::min(ad, max_step(lz[k], dz[k]));
        }
        return std::pair<double, double>{ap, ad};
      };

      // Predictor (affine scaling).
      const Vector dy_aff = schur_solve(p.b + a_x_rd_zinv);
      std::vector<Matrix> dx_aff, dz_aff;
      directions(dy_aff, 0.0, nullptr, dx_aff, dz_aff);
      auto [ap_aff, ad_aff] = step_lengths(dx_aff, dz_aff);
      ap_aff = std::min(1.0, ap_aff);
      ad_aff = std::min(1.0, ad_aff);
      double xz_aff = 0.0;
      for (std::size_t k = 0; k < nb; ++k) {
        xz_aff += inner(it.x[k] + ap_aff * dx_aff[k], it.z[k] + ad_aff * dz_aff[k]);
      }
      const double mu_aff = xz_aff / static_cast<double>(n_total);
      double sigma = std::pow(std::max(0.0, mu_aff) / mu, 3.0);
      sigma = std::clamp(sigma, 0.0, 1.0);

      // Corrector with the second-order term dX_aff dZ_aff Z^{-1}.
      std::vector<Matrix> second(nb);
      for (std::size_t k = 0; k < nb; ++k) second[k] = dx_aff[k] * dz_aff[k] * zinv[k];
      const Vector rhs = p.b - sigma * mu * a_zinv + a_x_rd_zinv + apply_a(p, second);
      const Vector dy = schur_solve(rhs);
      std::vector<Matrix> dx, dz;
      directions(dy, sigma * mu, &second, dx, dz);
      auto [ap, ad] = step_lengths(dx, dz);
      const double gamma = 0.9 + 0.09 * std::min({1.0, ap_aff, ad_aff});
      ap = std::min(1.0, gamma * ap);
      ad = std::min(1.0, gamma * ad);

      for (std::size_t k = 0; k < nb; ++k) {
        it.x[k] += ap * dx[k];
        it.z[k] += ad * dz[k];
        it.x[k] = 0.5 * (it.x[k] + it.x[k].transpose());
        it.z[k] = 0.5 * (it.z[k] + it.z[k].transpose());
      }
      it.y += ad * dy;
      best_gap = std::min(best_gap, gap);
    }

    // Out of iterations: accept a point that is feasible to tolerance with a
    // small duality gap, otherwise report failure.
    report.objective = -p.b.dot(it.y);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < nb; ++k) {
      Matrix f = -(p.blocks[k].c - apply_at(p.blocks[k], it.y));
      Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (f + f.transpose()), Eigen::EigenvaluesOnly);
      worst = std::max(worst, eig.eigenvalues().maxCoeff());
    }
    if (worst <= opts.feasibility_tolerance && best_gap < 1e-6) {
      report.status = SolveStatus::kOptimal;
      report.assignments = it.y;
      report.message = "iteration limit reached at reduced accuracy";
    } else if (fallback_y) {
      return reduced_accuracy("iteration limit reached");
    } else {
      report.status = SolveStatus::kNumericalFailure;
      report.message = "iteration limit reached (residual " + std::to_string(worst) + ")";
    }
    return report;
  }
};

}  // namespace mcsmf
