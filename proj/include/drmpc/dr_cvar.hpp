#pragma once

#include <Eigen/Dense>
#include <vector>

#include "drmpc/errors.hpp"

namespace drmpc {

/// Transport norm of the ambiguity ball.
enum class QNorm { One, Two, Inf };

/// Dual-norm value ||v||_p with 1/p + 1/q = 1 (q=1 -> max-norm, q=2 ->
/// 2-norm, q=inf -> 1-norm).
double dual_norm(const Eigen::VectorXd& v, QNorm q);

/// Wasserstein ball description: radius, transport norm, and the
/// confidence level the radius was calibrated at (bookkeeping only).
struct AmbiguityConfig {
  double epsilon = 0.0;
  QNorm q_norm = QNorm::One;
  double beta = 0.05;

  AmbiguityConfig() = default;
  AmbiguityConfig(double epsilon_, QNorm q_norm_, double beta_ = 0.05)
      : epsilon(epsilon_), q_norm(q_norm_), beta(beta_) {
    if (!(epsilon >= 0) || !std::isfinite(epsilon)) {
      throw ValueError("epsilon must be finite and >= 0");
    }
    if (!(beta > 0 && beta < 1)) throw ValueError("beta must be in (0,1)");
  }
};

/// Chance constraint P(h' x <= b) >= p_level, handled at CVaR level
/// alpha = 1 - p_level.
struct HalfspaceChanceConstraint {
  Eigen::VectorXd h;
  double b = 0.0;
  double p_level = 0.0;
  double alpha = 0.0;

  HalfspaceChanceConstraint() = default;
  static HalfspaceChanceConstraint from_alpha(Eigen::VectorXd h_, double b_,
                                              double alpha_);
  static HalfspaceChanceConstraint from_p_level(Eigen::VectorXd h_, double b_,
                                                double p_level_);
};

/// Linear-programming rows enforcing the distributionally robust CVaR
/// constraint for one halfspace at one prediction time. Local column
/// order is [z (n) | tau | s_1..s_Ns | theta (soft only)]; rows are
///   -alpha tau + (1/Ns) sum_j s_j - theta <= -epsilon lambda
///   h' z + tau - s_j <= b - h' e_hat_j          (one per sample)
///   -s_j <= 0                                   (one per sample)
/// with lambda = ||h||_p folded in as a constant (the dual-norm bound on
/// the loss gradient is tight for affine losses, so the lambda variable
/// is eliminated).
struct CvarLpBlock {
  Eigen::VectorXd h;
  double b = 0.0;
  double alpha = 0.0;
  double epsilon = 0.0;
  double lambda = 0.0;
  bool soft = false;
  int n_samples = 0;

  Eigen::MatrixXd G;    // rows x local_cols
  Eigen::VectorXd rhs;  // rows

  int n() const { return static_cast<int>(h.size()); }
  int rows() const { return 1 + 2 * n_samples; }
  int local_cols() const { return n() + 1 + n_samples + (soft ? 1 : 0); }
  int tau_col() const { return n(); }
  int s_col(int j) const { return n() + 1 + j; }
  int theta_col() const { return n() + 1 + n_samples; }
  int budget_row() const { return 0; }
  int sample_row(int j) const { return 1 + j; }
  int nonneg_row(int j) const { return 1 + n_samples + j; }
};

/// Assemble the CVaR block for constraint `c` given the per-sample error
/// offsets at one time (errors_at_t is [Ns x n]).
CvarLpBlock build_cvar_block(const HalfspaceChanceConstraint& c,
                             const AmbiguityConfig& amb,
                             const Eigen::MatrixXd& errors_at_t, bool soft);

/// Empirical CVaR at level alpha of equally weighted loss atoms:
///   inf_tau { tau + mean((losses - tau)_+) / alpha },
/// evaluated exactly through the sorted-atom formula.
double evaluate_empirical_cvar(const Eigen::VectorXd& losses, double alpha);

/// Analytic feasibility margin of the hard block at nominal state z:
///   CVaR_alpha(h'(z + e_hat_j) - b) + epsilon ||h||_p / alpha.
/// The hard rows admit a feasible (tau, s) iff this is <= 0.
double evaluate_dr_cvar_margin(const HalfspaceChanceConstraint& c,
                               const AmbiguityConfig& amb,
                               const Eigen::MatrixXd& errors_at_t,
                               const Eigen::VectorXd& z);

/// Worst-case expectation of the affine loss a' xi + b0 over the
/// Wasserstein ball of radius epsilon around the empirical distribution
/// of `samples` ([N x d]): sample mean plus epsilon ||a||_{q,*}.
double worst_case_expectation_affine(const Eigen::VectorXd& a, double b0,
                                     const Eigen::MatrixXd& samples,
                                     double epsilon, QNorm q);

}  // namespace drmpc
