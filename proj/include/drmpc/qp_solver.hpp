#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

#include "drmpc/errors.hpp"

namespace drmpc {

/// Convex QP in standard form:
///   min 1/2 x'Px + q'x + constant
///   s.t. Aeq x = beq, G x <= h.
/// P must be symmetric PSD; the make_* builders symmetrize it.
struct QpStandardForm {
  Eigen::SparseMatrix<double> P;
  Eigen::VectorXd q;
  Eigen::SparseMatrix<double> Aeq;
  Eigen::VectorXd beq;
  Eigen::SparseMatrix<double> G;
  Eigen::VectorXd h;
  double constant = 0.0;

  int d() const { return static_cast<int>(q.size()); }
  int p() const { return static_cast<int>(beq.size()); }
  int g() const { return static_cast<int>(h.size()); }

  static QpStandardForm make_dense(const Eigen::MatrixXd& P,
                                   const Eigen::VectorXd& q,
                                   const Eigen::MatrixXd& Aeq,
                                   const Eigen::VectorXd& beq,
                                   const Eigen::MatrixXd& G,
                                   const Eigen::VectorXd& h,
                                   double constant = 0.0);

  static QpStandardForm make_sparse(Eigen::SparseMatrix<double> P,
                                    Eigen::VectorXd q,
                                    Eigen::SparseMatrix<double> Aeq,
                                    Eigen::VectorXd beq,
                                    Eigen::SparseMatrix<double> G,
                                    Eigen::VectorXd h, double constant = 0.0);

  /// Shape and finiteness checks; throws on violation.
  void validate() const;

  double objective(const Eigen::VectorXd& x) const;
};

enum class QpStatus { Optimal, PrimalInfeasible, MaxIter, NumericalFailure };

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y_eq;    // equality multipliers
  Eigen::VectorXd z_ineq;  // inequality multipliers, >= 0
  QpStatus status = QpStatus::NumericalFailure;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  int iterations = 0;
  double solve_time_ms = 0.0;
  double objective = 0.0;
  std::vector<double> gap_history;  // complementarity after each iteration
};

struct SolverOptions {
  /// Feasibility and stationarity are enforced to tol in the infinity
  /// norm; the complementarity gap to tol * (1 + max(|x'Px|, |q'x|)).
  double tol = 1e-8;
  int max_iter = 100;
  /// Skip the equality rank presolve. Only safe when the caller knows
  /// Aeq has independent rows.
  bool assume_full_row_rank = false;
};

/// Mehrotra-style predictor-corrector primal-dual interior-point method.
/// Each Newton step factors the statically regularized quasidefinite
/// system [P + G'DG + dI, Aeq'; Aeq, -dI] (d = 1e-9) with a sparse LDL'
/// and removes the regularization bias by iterative refinement. Identical
/// inputs produce bit-identical iterates.
QpSolution solve_qp(const QpStandardForm& qp, const SolverOptions& opts = {});

struct KktResiduals {
  double primal = 0.0;  // max of equality residual and inequality violation
  double dual = 0.0;    // stationarity residual, max-norm
  double gap = 0.0;     // |z'(h - Gx)|
};

/// Residuals recomputed from scratch at the returned point.
KktResiduals kkt_residuals(const QpStandardForm& qp, const QpSolution& sol);

struct FeasibilityResult {
  bool feasible = false;
  Eigen::VectorXd x;
  double max_violation = 0.0;
};

/// Decide feasibility of the constraint system by minimizing a tiny ridge
/// objective (1e-8 ||x||^2, which leaves the feasible set unchanged) and
/// checking the returned point against `tol`.
FeasibilityResult check_feasibility(const QpStandardForm& qp,
                                    double tol = 1e-8, int max_iter = 200);

}  // namespace drmpc
