#pragma once

#include <Eigen/Dense>
#include <vector>

#include "drmpc/box.hpp"
#include "drmpc/dr_cvar.hpp"
#include "drmpc/qp_solver.hpp"
#include "drmpc/tube.hpp"

namespace drmpc {

/// Sample-average stage and terminal costs. State deviation is measured
/// from the setpoint x_ref; inputs are penalized absolutely.
struct CostConfig {
  enum class StateKind { Quadratic, WeightedL1 };
  enum class InputKind { L1, Quadratic };
  enum class TerminalKind { Zero, Quadratic };

  StateKind state_kind = StateKind::Quadratic;
  Eigen::MatrixXd Q;          // StateKind::Quadratic, symmetric PSD
  Eigen::VectorXd q_weights;  // StateKind::WeightedL1, nonnegative

  InputKind input_kind = InputKind::L1;
  double r_scale = 1.0;  // InputKind::L1, nonnegative
  Eigen::MatrixXd R;     // InputKind::Quadratic, symmetric PSD

  TerminalKind terminal_kind = TerminalKind::Zero;
  Eigen::MatrixXd Pf;  // TerminalKind::Quadratic, symmetric PSD

  Eigen::VectorXd x_ref;
};

struct TerminalSet {
  enum class Kind { None, Singleton };
  Kind kind = Kind::Singleton;
  Eigen::VectorXd x_f;

  static TerminalSet singleton(Eigen::VectorXd x_f_) {
    return {Kind::Singleton, std::move(x_f_)};
  }
  static TerminalSet none() { return {Kind::None, {}}; }
};

struct MpcConfig {
  int N = 1;
  double penalty_c = 1e3;
  CostConfig cost;
  std::vector<HalfspaceChanceConstraint> constraints;
  AmbiguityConfig ambiguity;
  TerminalSet terminal;
  Box input_box_v;  // tightened box for the nominal input v
  double solver_tol = 1e-8;
};

/// Column layout of the assembled decision vector:
/// [ z(0..N) | v(0..N-1) | tau(i,t) | s(i,t,j) | theta(t) | eta
///   | rho(t,j,c) input-L1 aux | sigma(t,j,c) state-L1 aux ].
/// tau/s/theta/eta exist only when the constraint list is nonempty.
struct IndexMap {
  int n = 0, m = 0, r = 0, N = 0, Ns = 0;
  bool has_cvar = false;
  bool has_input_l1 = false;
  bool has_state_l1 = false;
  int z0 = 0, v0 = 0, tau0 = 0, s0 = 0, theta0 = 0, eta0 = 0, rho0 = 0,
      sigma0 = 0;
  int total = 0;

  int z_index(int t, int i) const { return z0 + t * n + i; }
  int v_index(int t, int c) const { return v0 + t * m + c; }
  int tau_index(int ci, int t) const { return tau0 + ci * N + t; }
  int s_index(int ci, int t, int j) const {
    return s0 + (ci * N + t) * Ns + j;
  }
  int theta_index(int t) const { return theta0 + t; }
  int eta_index() const { return eta0; }
  int rho_index(int t, int j, int c) const {
    return rho0 + (t * Ns + j) * m + c;
  }
  int sigma_index(int t, int j, int c) const {
    return sigma0 + (t * Ns + j) * n + c;
  }
};

struct AssembledMpc {
  QpStandardForm qp;
  IndexMap map;
  // Equality row spans for residual localization.
  int init_rows_begin = 0, dyn_rows_begin = 0, term_rows_begin = 0,
      eq_rows_end = 0;
  // Problem data retained for diagnosis and unpacking.
  Eigen::MatrixXd A, B;
  Eigen::MatrixXd wbar;  // N x n
  Eigen::VectorXd z_k;
  Eigen::VectorXd x_f;  // empty when the terminal set is None
  Box input_box_v;
};

/// Build the soft-constrained scenario QP for one MPC step. `scen` holds
/// error trajectories propagated from the measured error e_k (validated),
/// `wbar_window` the known-disturbance rows for [k, k+N-1]. The CVaR
/// block for constraint i at time t couples z(t) with the scenario
/// offsets e_hat_j(t); the t = 0 block is degenerate (all offsets equal
/// e_k) and kept in softened form.
AssembledMpc assemble_mpc_qp(const LtiSystem& sys, const MpcConfig& cfg,
                             const Eigen::VectorXd& z_k,
                             const Eigen::VectorXd& e_k,
                             const ErrorScenarios& scen,
                             const Eigen::MatrixXd& wbar_window);

struct MpcSolution {
  Eigen::MatrixXd v;      // N x m nominal inputs, projected onto the box
  Eigen::MatrixXd z;      // (N+1) x n nominal states
  Eigen::VectorXd theta;  // per-time slack, empty when no constraints
  double eta = 0.0;       // max slack epigraph value
  Eigen::MatrixXd tau;    // r x N, diagnostic
  Eigen::MatrixXd s;      // (r*N) x Ns, diagnostic
  double objective = 0.0;
  QpStatus status = QpStatus::NumericalFailure;
  bool hard_terminal_infeasible = false;
  int iterations = 0;
  double solve_time_ms = 0.0;
  Eigen::VectorXd raw_x;
};

/// Solve the assembled QP and unpack through the index map. The nominal
/// inputs are clamped onto the input box (a projection bounded by the
/// solver tolerance) so the applied input respects the original hard
/// bound exactly once the tube term is added. A PrimalInfeasible status
/// with a singleton terminal is attributed to the terminal rows when the
/// forward-simulated trajectory under the returned inputs misses x_f
/// while every other row group is structurally feasible.
MpcSolution solve_mpc(const AssembledMpc& assembled,
                      const SolverOptions& opts = {});

/// Applied input u(k) = v*(0|k) + pi(e(k)). Throws NotSolvedError unless
/// the solve returned Optimal.
Eigen::VectorXd control_input(const MpcSolution& sol,
                              const TubeController& ctrl,
                              const Eigen::VectorXd& e_k);

struct CandidatePlan {
  Eigen::MatrixXd v;      // N x m
  Eigen::MatrixXd z;      // (N+1) x n
  Eigen::VectorXd theta;  // N
  Eigen::VectorXd terminal_input;
};

/// One-step shift of the previous optimizer: drop the first stage, append
/// the steady input holding the singleton terminal point under wbar_next,
/// and shift the slacks with a zero appended.
CandidatePlan candidate_shift(const MpcSolution& prev, const LtiSystem& sys,
                              const MpcConfig& cfg,
                              const Eigen::VectorXd& wbar_next);

/// Worst constraint-row violation of a candidate plan: nominal dynamics
/// defects under wbar_window, input-box excess, negative slacks, terminal
/// defect, and per-block CVaR excess alpha*margin(z_bar(t)) - theta(t)
/// with the margins evaluated on scen rows t+1 (the one-step shift of the
/// scenario set the plan was derived from). Nonpositive when the shifted
/// plan remains feasible.
double candidate_violation(const CandidatePlan& cand, const LtiSystem& sys,
                           const MpcConfig& cfg, const ErrorScenarios& scen,
                           const Eigen::MatrixXd& wbar_window);

}  // namespace drmpc
