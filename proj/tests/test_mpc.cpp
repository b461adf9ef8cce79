#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "drmpc/errors.hpp"
#include "drmpc/mpc.hpp"
#include "drmpc/tube.hpp"
#include "support/test_util.hpp"

using namespace drmpc;

namespace {

Eigen::MatrixXd scalar(double v) {
  return Eigen::MatrixXd::Constant(1, 1, v);
}

/// Scalar plant with one wide band constraint; quadratic costs unless a
/// case overrides them.
struct ScalarRig {
  LtiSystem sys{scalar(0.8), scalar(1.0)};
  TubeController ctrl = TubeController::linear(scalar(0.0));
  MpcConfig cfg;

  explicit ScalarRig(int N, double b = 1.0) {
    cfg.N = N;
    cfg.penalty_c = 1e3;
    cfg.cost.state_kind = CostConfig::StateKind::Quadratic;
    cfg.cost.Q = scalar(1.0);
    cfg.cost.input_kind = CostConfig::InputKind::Quadratic;
    cfg.cost.R = scalar(0.5);
    cfg.cost.terminal_kind = CostConfig::TerminalKind::Zero;
    cfg.cost.x_ref = Eigen::VectorXd::Zero(1);
    cfg.constraints = {HalfspaceChanceConstraint::from_alpha(
        Eigen::VectorXd::Ones(1), b, 0.3)};
    cfg.ambiguity = AmbiguityConfig(0.01, QNorm::One);
    cfg.terminal = TerminalSet::singleton(Eigen::VectorXd::Constant(1, 0.2));
    cfg.input_box_v = Box::symmetric(1, 10.0);
  }

  ErrorScenarios scenarios(std::mt19937_64& gen, int n_samples,
                           const Eigen::VectorXd& e_k,
                           double span = 0.05) const {
    const ScenarioDisturbances w =
        test::random_scenarios(gen, 1, n_samples, cfg.N, span);
    return propagate_error_scenarios(sys, ctrl, e_k, w);
  }
};

}  // namespace

TEST_SUITE("mpc") {

TEST_CASE("decision vector layout for the counting instance") {
  ScalarRig rig(2);
  std::mt19937_64 gen(1);
  const Eigen::VectorXd e0 = Eigen::VectorXd::Zero(1);
  const ErrorScenarios scen = rig.scenarios(gen, 2, e0, 0.0);
  const AssembledMpc mpc =
      assemble_mpc_qp(rig.sys, rig.cfg, Eigen::VectorXd::Zero(1), e0, scen,
                      Eigen::MatrixXd::Zero(2, 1));

  // z(0..2) + v(0..1) + tau(2) + s(4) + theta(2) + eta = 14 columns.
  CHECK(mpc.map.total == 14);
  CHECK(mpc.qp.d() == 14);
  CHECK(mpc.map.z_index(0, 0) == 0);
  CHECK(mpc.map.v_index(0, 0) == 3);
  CHECK(mpc.map.tau_index(0, 0) == 5);
  CHECK(mpc.map.s_index(0, 0, 0) == 7);
  CHECK(mpc.map.theta_index(0) == 11);
  CHECK(mpc.map.eta_index() == 13);
  CHECK_FALSE(mpc.map.has_input_l1);
  CHECK_FALSE(mpc.map.has_state_l1);
}

TEST_CASE("origin instance solves to zero") {
  ScalarRig rig(2);
  rig.cfg.terminal = TerminalSet::singleton(Eigen::VectorXd::Zero(1));
  std::mt19937_64 gen(2);
  const Eigen::VectorXd e0 = Eigen::VectorXd::Zero(1);
  const ErrorScenarios scen = rig.scenarios(gen, 2, e0, 0.0);
  const AssembledMpc mpc =
      assemble_mpc_qp(rig.sys, rig.cfg, Eigen::VectorXd::Zero(1), e0, scen,
                      Eigen::MatrixXd::Zero(2, 1));
  const MpcSolution sol = solve_mpc(mpc);
  REQUIRE(sol.status == QpStatus::Optimal);
  CHECK(sol.v.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(sol.z.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(sol.theta.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(std::abs(sol.objective) < 1e-6);
  CHECK_FALSE(sol.hard_terminal_infeasible);
}

TEST_CASE("assembled objective equals the scenario cost") {
  std::mt19937_64 gen(33);
  const LtiSystem sys = test::random_stable_system(gen, 2, 1);
  const DareResult lqr =
      solve_dare(sys.A, sys.B, Eigen::MatrixXd::Identity(2, 2),
                 Eigen::MatrixXd::Identity(1, 1));
  const TubeController ctrl = TubeController::linear(lqr.K);
  const int N = 3, Ns = 2;

  MpcConfig cfg;
  cfg.N = N;
  const Eigen::MatrixXd Mq = test::random_matrix(gen, 2, 2);
  cfg.cost.Q = Mq.transpose() * Mq + 0.2 * Eigen::MatrixXd::Identity(2, 2);
  cfg.cost.state_kind = CostConfig::StateKind::Quadratic;
  cfg.cost.input_kind = CostConfig::InputKind::Quadratic;
  cfg.cost.R = scalar(0.7);
  cfg.cost.terminal_kind = CostConfig::TerminalKind::Quadratic;
  cfg.cost.Pf = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  cfg.cost.x_ref = test::random_vector(gen, 2);
  cfg.terminal = TerminalSet::none();
  cfg.input_box_v = Box::symmetric(1, 5.0);

  const Eigen::VectorXd e_k = test::random_vector(gen, 2, 0.2);
  const ScenarioDisturbances w = test::random_scenarios(gen, 2, Ns, N, 0.3);
  const ErrorScenarios scen = propagate_error_scenarios(sys, ctrl, e_k, w);
  const Eigen::VectorXd z_k = test::random_vector(gen, 2);
  const Eigen::MatrixXd wbar = test::random_matrix(gen, N, 2, 0.1);
  const AssembledMpc mpc = assemble_mpc_qp(sys, cfg, z_k, e_k, scen, wbar);

  for (int probe = 0; probe < 8; ++probe) {
    const Eigen::VectorXd x = test::random_vector(gen, mpc.map.total, 2.0);
    double direct = 0.0;
    for (int j = 0; j < Ns; ++j) {
      for (int t = 0; t < N; ++t) {
        Eigen::VectorXd zt(2), vt(1);
        for (int i = 0; i < 2; ++i) zt(i) = x(mpc.map.z_index(t, i));
        vt(0) = x(mpc.map.v_index(t, 0));
        const Eigen::VectorXd xs =
            zt + scen.errors[j].row(t).transpose() - cfg.cost.x_ref;
        const Eigen::VectorXd us = vt + scen.input_errors[j].row(t).transpose();
        direct += xs.dot(cfg.cost.Q * xs) + us.dot(cfg.cost.R * us);
      }
      Eigen::VectorXd zN(2);
      for (int i = 0; i < 2; ++i) zN(i) = x(mpc.map.z_index(N, i));
      const Eigen::VectorXd xN =
          zN + scen.errors[j].row(N).transpose() - cfg.cost.x_ref;
      direct += xN.dot(cfg.cost.Pf * xN);
    }
    direct /= Ns;
    CHECK(mpc.qp.objective(x) ==
          doctest::Approx(direct).epsilon(1e-10));
  }
}

TEST_CASE("l1 costs price their epigraph variables") {
  std::mt19937_64 gen(44);
  ScalarRig rig(2);
  rig.cfg.constraints.clear();
  rig.cfg.terminal = TerminalSet::none();
  rig.cfg.cost.state_kind = CostConfig::StateKind::WeightedL1;
  rig.cfg.cost.q_weights = Eigen::VectorXd::Constant(1, 0.4);
  rig.cfg.cost.input_kind = CostConfig::InputKind::L1;
  rig.cfg.cost.r_scale = 1.3;

  const Eigen::VectorXd e_k = Eigen::VectorXd::Constant(1, 0.1);
  const ErrorScenarios scen = rig.scenarios(gen, 2, e_k, 0.2);
  const Eigen::VectorXd z_k = Eigen::VectorXd::Constant(1, 0.5);
  const Eigen::MatrixXd wbar = Eigen::MatrixXd::Constant(2, 1, 0.05);
  const AssembledMpc mpc =
      assemble_mpc_qp(rig.sys, rig.cfg, z_k, e_k, scen, wbar);
  REQUIRE(mpc.map.has_input_l1);
  REQUIRE(mpc.map.has_state_l1);

  // At the tight point rho = |v + eu| and sigma = |z + e - ref| the QP
  // objective equals the sample-average L1 cost.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(mpc.map.total);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t <= 2; ++t) x(mpc.map.z_index(t, 0)) = u(gen);
  for (int t = 0; t < 2; ++t) x(mpc.map.v_index(t, 0)) = u(gen);
  double direct = 0.0;
  for (int j = 0; j < 2; ++j) {
    for (int t = 0; t < 2; ++t) {
      const double xs = x(mpc.map.z_index(t, 0)) + scen.errors[j](t, 0) -
                        rig.cfg.cost.x_ref(0);
      const double us = x(mpc.map.v_index(t, 0)) + scen.input_errors[j](t, 0);
      x(mpc.map.sigma_index(t, j, 0)) = std::abs(xs);
      x(mpc.map.rho_index(t, j, 0)) = std::abs(us);
      direct += 0.4 * std::abs(xs) + 1.3 * std::abs(us);
    }
  }
  direct /= 2.0;
  CHECK(mpc.qp.objective(x) == doctest::Approx(direct).epsilon(1e-12));

  // The epigraph rows hold with equality at the tight point.
  CHECK((mpc.qp.G * x - mpc.qp.h).maxCoeff() <= 1e-12);
}

TEST_CASE("equality rows reproduce the nominal dynamics") {
  std::mt19937_64 gen(55);
  ScalarRig rig(3);
  rig.cfg.terminal = TerminalSet::none();
  const Eigen::VectorXd e_k = Eigen::VectorXd::Zero(1);
  const ErrorScenarios scen = rig.scenarios(gen, 2, e_k);
  const Eigen::VectorXd z_k = Eigen::VectorXd::Constant(1, 0.3);
  const Eigen::MatrixXd wbar =
      (Eigen::MatrixXd(3, 1) << 0.1, -0.05, 0.02).finished();
  const AssembledMpc mpc =
      assemble_mpc_qp(rig.sys, rig.cfg, z_k, e_k, scen, wbar);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(mpc.map.total);
  Eigen::VectorXd z = z_k;
  x(mpc.map.z_index(0, 0)) = z(0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 3; ++t) {
    const Eigen::VectorXd v = Eigen::VectorXd::Constant(1, u(gen));
    x(mpc.map.v_index(t, 0)) = v(0);
    z = nominal_step(rig.sys, z, v, wbar.row(t).transpose());
    x(mpc.map.z_index(t + 1, 0)) = z(0);
  }
  CHECK((mpc.qp.Aeq * x - mpc.qp.beq).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("unreachable singleton terminal is diagnosed") {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 0.0, 0.0, 1.0, 0.0;
  B << 1.0, 0.0;
  const LtiSystem sys(A, B);
  const TubeController ctrl = TubeController::linear(Eigen::MatrixXd::Zero(1, 2));

  MpcConfig cfg;
  cfg.cost.state_kind = CostConfig::StateKind::Quadratic;
  cfg.cost.Q = Eigen::MatrixXd::Identity(2, 2);
  cfg.cost.input_kind = CostConfig::InputKind::Quadratic;
  cfg.cost.R = scalar(1.0);
  cfg.cost.x_ref = Eigen::VectorXd::Zero(2);
  cfg.terminal =
      TerminalSet::singleton((Eigen::VectorXd(2) << 0.0, 1.0).finished());
  cfg.input_box_v = Box::symmetric(1, 10.0);

  ScenarioDisturbances w;
  w.n_samples = 1;
  w.base_time = 0;

  SUBCASE("one step is too short to reach the target") {
    cfg.N = 1;
    w.length = 1;
    w.values = {Eigen::MatrixXd::Zero(1, 2)};
    const ErrorScenarios scen =
        propagate_error_scenarios(sys, ctrl, Eigen::VectorXd::Zero(2), w);
    const AssembledMpc mpc =
        assemble_mpc_qp(sys, cfg, Eigen::VectorXd::Zero(2),
                        Eigen::VectorXd::Zero(2), scen,
                        Eigen::MatrixXd::Zero(1, 2));
    const MpcSolution sol = solve_mpc(mpc);
    CHECK(sol.status == QpStatus::PrimalInfeasible);
    CHECK(sol.hard_terminal_infeasible);
  }

  SUBCASE("two steps suffice") {
    cfg.N = 2;
    w.length = 2;
    w.values = {Eigen::MatrixXd::Zero(2, 2)};
    const ErrorScenarios scen =
        propagate_error_scenarios(sys, ctrl, Eigen::VectorXd::Zero(2), w);
    const AssembledMpc mpc =
        assemble_mpc_qp(sys, cfg, Eigen::VectorXd::Zero(2),
                        Eigen::VectorXd::Zero(2), scen,
                        Eigen::MatrixXd::Zero(2, 2));
    const MpcSolution sol = solve_mpc(mpc);
    REQUIRE(sol.status == QpStatus::Optimal);
    CHECK(std::abs(sol.z(2, 1) - 1.0) < 1e-7);
    CHECK_FALSE(sol.hard_terminal_infeasible);
  }
}

TEST_CASE("penalty is exact on feasible instances") {
  std::mt19937_64 gen(66);
  ScalarRig rig(3);
  const Eigen::VectorXd e_k = Eigen::VectorXd::Zero(1);
  const ErrorScenarios scen = rig.scenarios(gen, 4, e_k, 0.05);
  const AssembledMpc mpc =
      assemble_mpc_qp(rig.sys, rig.cfg, Eigen::VectorXd::Constant(1, 0.3), e_k,
                      scen, Eigen::MatrixXd::Zero(3, 1));
  const MpcSolution sol = solve_mpc(mpc);
  REQUIRE(sol.status == QpStatus::Optimal);
  CHECK(sol.theta.maxCoeff() <= 1e-6);
  CHECK(sol.theta.minCoeff() >= -1e-9);
  CHECK(sol.eta <= 1e-6);
}

TEST_CASE("optimal slack grows with the radius") {
  std::mt19937_64 gen(77);
  ScalarRig rig(3);
  const Eigen::VectorXd e_k = Eigen::VectorXd::Zero(1);
  const ErrorScenarios scen = rig.scenarios(gen, 4, e_k, 0.02);
  // z(0) already violates the band, so the first block pins eta > 0.
  const Eigen::VectorXd z_k = Eigen::VectorXd::Constant(1, 1.05);

  double prev = -1.0;
  for (double eps : {0.0, 1e-3, 1e-2, 3e-2}) {
    rig.cfg.ambiguity = AmbiguityConfig(eps, QNorm::One);
    const AssembledMpc mpc = assemble_mpc_qp(rig.sys, rig.cfg, z_k, e_k, scen,
                                             Eigen::MatrixXd::Zero(3, 1));
    const MpcSolution sol = solve_mpc(mpc);
    REQUIRE(sol.status == QpStatus::Optimal);
    CHECK(sol.eta >= prev - 1e-10);
    prev = sol.eta;
  }
  CHECK(prev > 1e-3);
}

TEST_CASE("control law adds the tube action") {
  MpcSolution sol;
  sol.status = QpStatus::Optimal;
  sol.v = Eigen::MatrixXd::Constant(2, 1, 3.5);
  const TubeController ctrl = TubeController::saturated(scalar(1.0), 1.0);

  CHECK(control_input(sol, ctrl, Eigen::VectorXd::Zero(1))(0) == 3.5);
  // Boundary nominal input plus saturated tube action stays at 4.5.
  CHECK(control_input(sol, ctrl, Eigen::VectorXd::Constant(1, 9.0))(0) == 4.5);

  sol.status = QpStatus::MaxIter;
  CHECK_THROWS_AS(control_input(sol, ctrl, Eigen::VectorXd::Zero(1)),
                  NotSolvedError);
}

TEST_CASE("nominal inputs respect the tightened box") {
  std::mt19937_64 gen(88);
  ScalarRig rig(3);
  rig.cfg.constraints.clear();
  rig.cfg.terminal = TerminalSet::none();
  rig.cfg.input_box_v = Box::symmetric(1, 0.1);
  rig.cfg.cost.Q = scalar(50.0);
  rig.cfg.cost.x_ref = Eigen::VectorXd::Constant(1, 10.0);
  const Eigen::VectorXd e_k = Eigen::VectorXd::Zero(1);
  const ErrorScenarios scen = rig.scenarios(gen, 2, e_k, 0.0);
  const AssembledMpc mpc =
      assemble_mpc_qp(rig.sys, rig.cfg, Eigen::VectorXd::Zero(1), e_k, scen,
                      Eigen::MatrixXd::Zero(3, 1));
  const MpcSolution sol = solve_mpc(mpc);
  REQUIRE(sol.status == QpStatus::Optimal);
  for (int t = 0; t < 3; ++t) {
    CHECK(sol.v(t, 0) <= 0.1);
    CHECK(sol.v(t, 0) >= -0.1);
  }
  // The cost drives the first input onto the upper bound.
  CHECK(sol.v(0, 0) == doctest::Approx(0.1).epsilon(1e-5));
}

TEST_CASE("candidate shift drops the first stage and appends the hold input") {
  std::mt19937_64 gen(99);
  ScalarRig rig(3);
  const Eigen::VectorXd e_k = Eigen::VectorXd::Zero(1);
  const ErrorScenarios scen = rig.scenarios(gen, 3, e_k, 0.03);
  const Eigen::MatrixXd wbar = Eigen::MatrixXd::Constant(3, 1, 0.05);
  const AssembledMpc mpc = assemble_mpc_qp(
      rig.sys, rig.cfg, Eigen::VectorXd::Constant(1, 0.5), e_k, scen, wbar);
  const MpcSolution sol = solve_mpc(mpc);
  REQUIRE(sol.status == QpStatus::Optimal);

  const Eigen::VectorXd wbar_next = Eigen::VectorXd::Constant(1, 0.05);
  const CandidatePlan cand = candidate_shift(sol, rig.sys, rig.cfg, wbar_next);
  REQUIRE(cand.v.rows() == 3);
  REQUIRE(cand.z.rows() == 4);
  for (int t = 0; t < 2; ++t) {
    CHECK(cand.v(t, 0) == sol.v(t + 1, 0));
    CHECK(cand.theta(t) == sol.theta(t + 1));
  }
  CHECK(cand.theta(2) == 0.0);
  for (int t = 0; t < 3; ++t) {
    CHECK(cand.z(t, 0) == sol.z(t + 1, 0));
  }
  // Steady input holds the singleton fixed point under constant wbar.
  const double x_f = 0.2;
  CHECK(cand.terminal_input(0) ==
        doctest::Approx(x_f - 0.8 * x_f - 0.05).epsilon(1e-9));
  CHECK(cand.z(3, 0) == doctest::Approx(x_f).epsilon(1e-6));

  CHECK(candidate_violation(cand, rig.sys, rig.cfg, scen, wbar) <= 1e-7);
}

TEST_CASE("candidate shift needs a terminal policy") {
  std::mt19937_64 gen(101);
  ScalarRig rig(2);
  rig.cfg.terminal = TerminalSet::none();
  const Eigen::VectorXd e_k = Eigen::VectorXd::Zero(1);
  const ErrorScenarios scen = rig.scenarios(gen, 2, e_k, 0.0);
  const AssembledMpc mpc =
      assemble_mpc_qp(rig.sys, rig.cfg, Eigen::VectorXd::Zero(1), e_k, scen,
                      Eigen::MatrixXd::Zero(2, 1));
  const MpcSolution sol = solve_mpc(mpc);
  REQUIRE(sol.status == QpStatus::Optimal);
  CHECK_THROWS_AS(
      candidate_shift(sol, rig.sys, rig.cfg, Eigen::VectorXd::Zero(1)),
      TerminalPolicyError);
}

TEST_CASE("scenario set must start at the measured error") {
  ScalarRig rig(2);
  std::mt19937_64 gen(7);
  const ErrorScenarios scen =
      rig.scenarios(gen, 2, Eigen::VectorXd::Constant(1, 0.4));
  CHECK_THROWS_AS(
      assemble_mpc_qp(rig.sys, rig.cfg, Eigen::VectorXd::Zero(1),
                      Eigen::VectorXd::Zero(1), scen,
                      Eigen::MatrixXd::Zero(2, 1)),
      ValueError);
}

}  // TEST_SUITE
