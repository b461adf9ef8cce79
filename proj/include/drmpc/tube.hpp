#pragma once

#include <Eigen/Dense>
#include <vector>

#include "drmpc/box.hpp"
#include "drmpc/disturbance.hpp"
#include "drmpc/errors.hpp"

namespace drmpc {

/// Discrete-time LTI pair x(k+1) = A x(k) + B u(k) + w(k).
/// Construction enforces the controllability rank test.
struct LtiSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;

  LtiSystem(Eigen::MatrixXd A_, Eigen::MatrixXd B_);

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
};

/// Error-feedback policy pi(e). Linear: K e. Saturated: K e clamped
/// componentwise to [-limit, limit].
struct TubeController {
  enum class Kind { Linear, Saturated };

  Kind kind = Kind::Linear;
  Eigen::MatrixXd K;
  Eigen::VectorXd limit;  // per-component, Saturated only

  static TubeController linear(Eigen::MatrixXd K_);
  static TubeController saturated(Eigen::MatrixXd K_, double limit_);
  static TubeController saturated(Eigen::MatrixXd K_, Eigen::VectorXd limit_);

  int m() const { return static_cast<int>(K.rows()); }
  int n() const { return static_cast<int>(K.cols()); }

  /// The range box of a saturated policy, [-limit, limit]^m.
  Box output_box() const;
};

/// Value of the tube policy at error e.
Eigen::VectorXd apply_controller(const TubeController& ctrl,
                                 const Eigen::VectorXd& e);

struct DareResult {
  Eigen::MatrixXd P;  // fixed-point cost-to-go, symmetric PSD
  Eigen::MatrixXd K;  // u = K x, makes A + B K Schur stable
  int iterations = 0;
  double residual = 0.0;
};

/// Discrete algebraic Riccati equation solved by fixed-point iteration
/// from P = Q. Q must be symmetric PSD and R symmetric PD. Throws
/// ConvergenceError when the update norm stays above tol for max_iter
/// sweeps.
DareResult solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                      const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                      double tol = 1e-10, int max_iter = 100000);

/// Largest eigenvalue magnitude.
double spectral_radius(const Eigen::MatrixXd& M);

/// Scenario error trajectories under the tube policy. errors[j] holds
/// e_hat(0..N) stacked as rows ((N+1) x n); input_errors[j] holds
/// pi(e_hat(0..N-1)) as rows (N x m).
struct ErrorScenarios {
  int n_samples = 0;
  int horizon = 0;  // N
  std::vector<Eigen::MatrixXd> errors;
  std::vector<Eigen::MatrixXd> input_errors;
};

/// Roll e(t+1) = A e(t) + B pi(e(t)) + w_hat(t) from the shared initial
/// error over each scenario window.
ErrorScenarios propagate_error_scenarios(const LtiSystem& sys,
                                         const TubeController& ctrl,
                                         const Eigen::VectorXd& e0,
                                         const ScenarioDisturbances& scen);

/// Closed-form linear-policy propagation:
///   e_hat(t) = A_K^t e0 + sum_i A_K^(t-1-i) w_hat(i),  A_K = A + B K,
/// with input errors K e_hat(t). Equals propagate_error_scenarios with a
/// linear controller; exists so the recursion can be cross-checked.
ErrorScenarios explicit_error_affine(const LtiSystem& sys,
                                     const Eigen::MatrixXd& K,
                                     const Eigen::VectorXd& e0,
                                     const ScenarioDisturbances& scen);

/// Minkowski-difference tightening V = U - range(pi) for a saturated
/// policy: [lb + limit, ub - limit]. Throws TighteningError when empty.
Box tighten_input_box(const Box& u_box, const TubeController& ctrl);

/// One nominal step z(k+1) = A z + B v + w_bar.
Eigen::VectorXd nominal_step(const LtiSystem& sys, const Eigen::VectorXd& z,
                             const Eigen::VectorXd& v,
                             const Eigen::VectorXd& wbar);

}  // namespace drmpc
