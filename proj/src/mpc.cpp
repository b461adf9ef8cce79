#include "drmpc/mpc.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "drmpc/errors.hpp"

namespace drmpc {

namespace {

void validate_cost(const CostConfig& cost, int n, int m) {
  if (cost.x_ref.size() != n) {
    throw DimensionError("cost.x_ref must have the state dimension");
  }
  switch (cost.state_kind) {
    case CostConfig::StateKind::Quadratic:
      if (cost.Q.rows() != n || cost.Q.cols() != n) {
        throw DimensionError("cost.Q must be n x n");
      }
      break;
    case CostConfig::StateKind::WeightedL1:
      if (cost.q_weights.size() != n) {
        throw DimensionError("cost.q_weights must have the state dimension");
      }
      if ((cost.q_weights.array() < 0.0).any()) {
        throw ValueError("state L1 weights must be nonnegative");
      }
      break;
  }
  switch (cost.input_kind) {
    case CostConfig::InputKind::L1:
      if (!(cost.r_scale >= 0.0)) {
        throw ValueError("input L1 scale must be nonnegative");
      }
      break;
    case CostConfig::InputKind::Quadratic:
      if (cost.R.rows() != m || cost.R.cols() != m) {
        throw DimensionError("cost.R must be m x m");
      }
      break;
  }
  if (cost.terminal_kind == CostConfig::TerminalKind::Quadratic &&
      (cost.Pf.rows() != n || cost.Pf.cols() != n)) {
    throw DimensionError("cost.Pf must be n x n");
  }
}

IndexMap build_index_map(const LtiSystem& sys, const MpcConfig& cfg, int Ns) {
  IndexMap map;
  map.n = sys.n();
  map.m = sys.m();
  map.r = static_cast<int>(cfg.constraints.size());
  map.N = cfg.N;
  map.Ns = Ns;
  map.has_cvar = map.r > 0;
  map.has_input_l1 = cfg.cost.input_kind == CostConfig::InputKind::L1;
  map.has_state_l1 = cfg.cost.state_kind == CostConfig::StateKind::WeightedL1;

  int at = 0;
  map.z0 = at;
  at += (map.N + 1) * map.n;
  map.v0 = at;
  at += map.N * map.m;
  if (map.has_cvar) {
    map.tau0 = at;
    at += map.r * map.N;
    map.s0 = at;
    at += map.r * map.N * map.Ns;
    map.theta0 = at;
    at += map.N;
    map.eta0 = at;
    at += 1;
  }
  if (map.has_input_l1) {
    map.rho0 = at;
    at += map.N * map.Ns * map.m;
  }
  if (map.has_state_l1) {
    map.sigma0 = at;
    at += map.N * map.Ns * map.n;
  }
  map.total = at;
  return map;
}

Eigen::MatrixXd errors_at(const ErrorScenarios& scen, int t) {
  const int n = static_cast<int>(scen.errors.front().cols());
  Eigen::MatrixXd out(scen.n_samples, n);
  for (int j = 0; j < scen.n_samples; ++j) out.row(j) = scen.errors[j].row(t);
  return out;
}

using Triplet = Eigen::Triplet<double>;

void add_dense_block(std::vector<Triplet>& trips, const Eigen::MatrixXd& M,
                     int row0, int col0, double sign = 1.0) {
  for (int c = 0; c < M.cols(); ++c) {
    for (int r = 0; r < M.rows(); ++r) {
      const double v = sign * M(r, c);
      if (v != 0.0) trips.emplace_back(row0 + r, col0 + c, v);
    }
  }
}

}  // namespace

AssembledMpc assemble_mpc_qp(const LtiSystem& sys, const MpcConfig& cfg,
                             const Eigen::VectorXd& z_k,
                             const Eigen::VectorXd& e_k,
                             const ErrorScenarios& scen,
                             const Eigen::MatrixXd& wbar_window) {
  const int n = sys.n();
  const int m = sys.m();
  const int N = cfg.N;
  if (N < 1) throw ValueError("prediction horizon must be >= 1");
  if (!(cfg.penalty_c > 0.0)) throw ValueError("penalty_c must be positive");
  if (z_k.size() != n) throw DimensionError("z_k must have dimension n");
  if (e_k.size() != n) throw DimensionError("e_k must have dimension n");
  if (scen.horizon != N) {
    throw DimensionError("scenario horizon must equal the MPC horizon");
  }
  if (scen.n_samples < 1 ||
      static_cast<int>(scen.errors.size()) != scen.n_samples) {
    throw ValueError("at least one error scenario is required");
  }
  for (const auto& e : scen.errors) {
    if (e.rows() != N + 1 || e.cols() != n) {
      throw DimensionError("error scenarios must be (N+1) x n");
    }
    if ((e.row(0).transpose() - e_k).lpNorm<Eigen::Infinity>() > 1e-9) {
      throw ValueError("error scenarios must start at the measured error");
    }
  }
  if (wbar_window.rows() != N || wbar_window.cols() != n) {
    throw DimensionError("wbar_window must be N x n");
  }
  if (cfg.input_box_v.dim() != m) {
    throw DimensionError("input box must have the input dimension");
  }
  const bool singleton = cfg.terminal.kind == TerminalSet::Kind::Singleton;
  if (singleton && cfg.terminal.x_f.size() != n) {
    throw DimensionError("terminal point must have the state dimension");
  }
  for (const auto& c : cfg.constraints) {
    if (c.h.size() != n) {
      throw DimensionError("constraint normal must have the state dimension");
    }
  }
  validate_cost(cfg.cost, n, m);

  const int Ns = scen.n_samples;
  const IndexMap map = build_index_map(sys, cfg, Ns);

  AssembledMpc out;
  out.map = map;
  out.A = sys.A;
  out.B = sys.B;
  out.wbar = wbar_window;
  out.z_k = z_k;
  if (singleton) out.x_f = cfg.terminal.x_f;
  out.input_box_v = cfg.input_box_v;

  // Equality rows: z(0) = z_k, dynamics, then the terminal pin.
  const int p_eq = n + N * n + (singleton ? n : 0);
  out.init_rows_begin = 0;
  out.dyn_rows_begin = n;
  out.term_rows_begin = n + N * n;
  out.eq_rows_end = p_eq;

  std::vector<Triplet> a_trips;
  Eigen::VectorXd beq = Eigen::VectorXd::Zero(p_eq);
  for (int i = 0; i < n; ++i) {
    a_trips.emplace_back(i, map.z_index(0, i), 1.0);
    beq(i) = z_k(i);
  }
  for (int t = 0; t < N; ++t) {
    const int row0 = map.n + t * n;
    for (int i = 0; i < n; ++i) {
      a_trips.emplace_back(row0 + i, map.z_index(t + 1, i), 1.0);
      beq(row0 + i) = wbar_window(t, i);
    }
    add_dense_block(a_trips, sys.A, row0, map.z_index(t, 0), -1.0);
    add_dense_block(a_trips, sys.B, row0, map.v_index(t, 0), -1.0);
  }
  if (singleton) {
    for (int i = 0; i < n; ++i) {
      a_trips.emplace_back(out.term_rows_begin + i, map.z_index(N, i), 1.0);
      beq(out.term_rows_begin + i) = cfg.terminal.x_f(i);
    }
  }

  // Inequality rows.
  int n_ineq = 2 * N * m;
  if (map.has_cvar) n_ineq += map.r * N * (1 + 2 * Ns) + 2 * N;
  if (map.has_input_l1) n_ineq += 2 * N * Ns * m;
  if (map.has_state_l1) n_ineq += 2 * N * Ns * n;

  std::vector<Triplet> g_trips;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(n_ineq);
  int row = 0;

  for (int t = 0; t < N; ++t) {
    for (int c = 0; c < m; ++c) {
      g_trips.emplace_back(row, map.v_index(t, c), 1.0);
      h(row++) = cfg.input_box_v.upper(c);
      g_trips.emplace_back(row, map.v_index(t, c), -1.0);
      h(row++) = -cfg.input_box_v.lower(c);
    }
  }

  if (map.has_cvar) {
    for (int ci = 0; ci < map.r; ++ci) {
      for (int t = 0; t < N; ++t) {
        const CvarLpBlock block = build_cvar_block(
            cfg.constraints[ci], cfg.ambiguity, errors_at(scen, t), true);
        std::vector<int> cols(block.local_cols());
        for (int i = 0; i < n; ++i) cols[i] = map.z_index(t, i);
        cols[block.tau_col()] = map.tau_index(ci, t);
        for (int j = 0; j < Ns; ++j) cols[block.s_col(j)] = map.s_index(ci, t, j);
        cols[block.theta_col()] = map.theta_index(t);
        for (int br = 0; br < block.rows(); ++br) {
          for (int bc = 0; bc < block.local_cols(); ++bc) {
            const double v = block.G(br, bc);
            if (v != 0.0) g_trips.emplace_back(row + br, cols[bc], v);
          }
          h(row + br) = block.rhs(br);
        }
        row += block.rows();
      }
    }
    for (int t = 0; t < N; ++t) {
      g_trips.emplace_back(row, map.theta_index(t), -1.0);
      h(row++) = 0.0;
      g_trips.emplace_back(row, map.theta_index(t), 1.0);
      g_trips.emplace_back(row, map.eta_index(), -1.0);
      h(row++) = 0.0;
    }
  }

  if (map.has_input_l1) {
    for (int t = 0; t < N; ++t) {
      for (int j = 0; j < Ns; ++j) {
        for (int c = 0; c < m; ++c) {
          const double eu = scen.input_errors[j](t, c);
          g_trips.emplace_back(row, map.v_index(t, c), 1.0);
          g_trips.emplace_back(row, map.rho_index(t, j, c), -1.0);
          h(row++) = -eu;
          g_trips.emplace_back(row, map.v_index(t, c), -1.0);
          g_trips.emplace_back(row, map.rho_index(t, j, c), -1.0);
          h(row++) = eu;
        }
      }
    }
  }

  if (map.has_state_l1) {
    for (int t = 0; t < N; ++t) {
      for (int j = 0; j < Ns; ++j) {
        for (int c = 0; c < n; ++c) {
          const double off = scen.errors[j](t, c) - cfg.cost.x_ref(c);
          g_trips.emplace_back(row, map.z_index(t, c), 1.0);
          g_trips.emplace_back(row, map.sigma_index(t, j, c), -1.0);
          h(row++) = -off;
          g_trips.emplace_back(row, map.z_index(t, c), -1.0);
          g_trips.emplace_back(row, map.sigma_index(t, j, c), -1.0);
          h(row++) = off;
        }
      }
    }
  }

  // Objective: sample averages with the scenario errors folded into the
  // linear and constant parts.
  std::vector<Triplet> p_trips;
  Eigen::VectorXd q = Eigen::VectorXd::Zero(map.total);
  double constant = 0.0;

  const auto add_quadratic_state = [&](const Eigen::MatrixXd& W, int t) {
    const Eigen::MatrixXd Wsym = 0.5 * (W + W.transpose());
    add_dense_block(p_trips, 2.0 * Wsym, map.z_index(t, 0), map.z_index(t, 0));
    Eigen::VectorXd mean_off = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < Ns; ++j) {
      const Eigen::VectorXd off =
          scen.errors[j].row(t).transpose() - cfg.cost.x_ref;
      constant += off.dot(Wsym * off) / Ns;
      mean_off += off / Ns;
    }
    q.segment(map.z_index(t, 0), n) += 2.0 * Wsym * mean_off;
  };

  if (cfg.cost.state_kind == CostConfig::StateKind::Quadratic) {
    for (int t = 0; t < N; ++t) add_quadratic_state(cfg.cost.Q, t);
  } else {
    for (int t = 0; t < N; ++t) {
      for (int j = 0; j < Ns; ++j) {
        for (int c = 0; c < n; ++c) {
          q(map.sigma_index(t, j, c)) += cfg.cost.q_weights(c) / Ns;
        }
      }
    }
  }

  if (cfg.cost.terminal_kind == CostConfig::TerminalKind::Quadratic) {
    add_quadratic_state(cfg.cost.Pf, N);
  }

  if (cfg.cost.input_kind == CostConfig::InputKind::Quadratic) {
    const Eigen::MatrixXd Rsym = 0.5 * (cfg.cost.R + cfg.cost.R.transpose());
    for (int t = 0; t < N; ++t) {
      add_dense_block(p_trips, 2.0 * Rsym, map.v_index(t, 0),
                      map.v_index(t, 0));
      Eigen::VectorXd mean_eu = Eigen::VectorXd::Zero(m);
      for (int j = 0; j < Ns; ++j) {
        const Eigen::VectorXd eu = scen.input_errors[j].row(t).transpose();
        constant += eu.dot(Rsym * eu) / Ns;
        mean_eu += eu / Ns;
      }
      q.segment(map.v_index(t, 0), m) += 2.0 * Rsym * mean_eu;
    }
  } else {
    for (int t = 0; t < N; ++t) {
      for (int j = 0; j < Ns; ++j) {
        for (int c = 0; c < m; ++c) {
          q(map.rho_index(t, j, c)) += cfg.cost.r_scale / Ns;
        }
      }
    }
  }

  if (map.has_cvar) q(map.eta_index()) += cfg.penalty_c;

  Eigen::SparseMatrix<double> P(map.total, map.total);
  P.setFromTriplets(p_trips.begin(), p_trips.end());
  Eigen::SparseMatrix<double> Aeq(p_eq, map.total);
  Aeq.setFromTriplets(a_trips.begin(), a_trips.end());
  Eigen::SparseMatrix<double> G(n_ineq, map.total);
  G.setFromTriplets(g_trips.begin(), g_trips.end());

  out.qp = QpStandardForm::make_sparse(std::move(P), std::move(q),
                                       std::move(Aeq), std::move(beq),
                                       std::move(G), std::move(h), constant);
  out.qp.validate();
  return out;
}

MpcSolution solve_mpc(const AssembledMpc& assembled,
                      const SolverOptions& opts) {
  const IndexMap& map = assembled.map;
  const QpSolution qs = solve_qp(assembled.qp, opts);

  MpcSolution sol;
  sol.status = qs.status;
  sol.iterations = qs.iterations;
  sol.solve_time_ms = qs.solve_time_ms;
  sol.objective = qs.objective;
  sol.raw_x = qs.x;

  sol.v.resize(map.N, map.m);
  for (int t = 0; t < map.N; ++t) {
    for (int c = 0; c < map.m; ++c) {
      sol.v(t, c) = std::clamp(qs.x(map.v_index(t, c)),
                               assembled.input_box_v.lower(c),
                               assembled.input_box_v.upper(c));
    }
  }
  sol.z.resize(map.N + 1, map.n);
  for (int t = 0; t <= map.N; ++t) {
    for (int i = 0; i < map.n; ++i) sol.z(t, i) = qs.x(map.z_index(t, i));
  }
  if (map.has_cvar) {
    sol.theta.resize(map.N);
    for (int t = 0; t < map.N; ++t) sol.theta(t) = qs.x(map.theta_index(t));
    sol.eta = qs.x(map.eta_index());
    sol.tau.resize(map.r, map.N);
    sol.s.resize(map.r * map.N, map.Ns);
    for (int ci = 0; ci < map.r; ++ci) {
      for (int t = 0; t < map.N; ++t) {
        sol.tau(ci, t) = qs.x(map.tau_index(ci, t));
        for (int j = 0; j < map.Ns; ++j) {
          sol.s(ci * map.N + t, j) = qs.x(map.s_index(ci, t, j));
        }
      }
    }
  }

  if (sol.status == QpStatus::PrimalInfeasible && assembled.x_f.size() > 0) {
    // Everything except the terminal pin is structurally feasible, so
    // localize: forward-simulate with the returned inputs and attribute
    // the infeasibility to the terminal rows when they stay violated.
    Eigen::VectorXd zt = assembled.z_k;
    for (int t = 0; t < map.N; ++t) {
      Eigen::VectorXd vt(map.m);
      for (int c = 0; c < map.m; ++c) vt(c) = qs.x(map.v_index(t, c));
      zt = assembled.A * zt + assembled.B * vt +
           assembled.wbar.row(t).transpose();
    }
    const double term_defect =
        (zt - assembled.x_f).lpNorm<Eigen::Infinity>();
    sol.hard_terminal_infeasible = term_defect > std::max(1e-6, 1e3 * opts.tol);
  }
  return sol;
}

Eigen::VectorXd control_input(const MpcSolution& sol,
                              const TubeController& ctrl,
                              const Eigen::VectorXd& e_k) {
  if (sol.status != QpStatus::Optimal) {
    throw NotSolvedError("control input requested from a non-optimal solve");
  }
  return sol.v.row(0).transpose() + apply_controller(ctrl, e_k);
}

CandidatePlan candidate_shift(const MpcSolution& prev, const LtiSystem& sys,
                              const MpcConfig& cfg,
                              const Eigen::VectorXd& wbar_next) {
  if (cfg.terminal.kind != TerminalSet::Kind::Singleton) {
    throw TerminalPolicyError("candidate shift needs a singleton terminal");
  }
  if (prev.status != QpStatus::Optimal) {
    throw NotSolvedError("candidate shift needs an optimal previous solve");
  }
  const int N = cfg.N;
  const int n = sys.n();
  const int m = sys.m();
  if (prev.v.rows() != N || prev.z.rows() != N + 1 || prev.z.cols() != n) {
    throw DimensionError("previous solution shape disagrees with cfg.N");
  }
  if (wbar_next.size() != n) {
    throw DimensionError("wbar_next must have the state dimension");
  }

  const Eigen::VectorXd rhs =
      (Eigen::MatrixXd::Identity(n, n) - sys.A) * cfg.terminal.x_f - wbar_next;
  const Eigen::VectorXd u_f = sys.B.colPivHouseholderQr().solve(rhs);
  const double defect = (sys.B * u_f - rhs).lpNorm<Eigen::Infinity>();
  if (defect > 1e-8 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>())) {
    throw TerminalPolicyError(
        "no steady input holds the terminal point under wbar_next");
  }

  CandidatePlan cand;
  cand.v.resize(N, m);
  cand.v.topRows(N - 1) = prev.v.bottomRows(N - 1);
  cand.v.row(N - 1) = u_f.transpose();
  cand.z.resize(N + 1, n);
  cand.z.topRows(N) = prev.z.bottomRows(N);
  cand.z.row(N) = (sys.A * prev.z.row(N).transpose() + sys.B * u_f +
                   wbar_next)
                      .transpose();
  cand.theta = Eigen::VectorXd::Zero(N);
  if (prev.theta.size() == N && N > 1) {
    cand.theta.head(N - 1) = prev.theta.tail(N - 1);
  }
  cand.terminal_input = u_f;
  return cand;
}

double candidate_violation(const CandidatePlan& cand, const LtiSystem& sys,
                           const MpcConfig& cfg, const ErrorScenarios& scen,
                           const Eigen::MatrixXd& wbar_window) {
  const int N = cfg.N;
  const int n = sys.n();
  const int m = sys.m();
  if (cand.v.rows() != N || cand.z.rows() != N + 1 ||
      cand.theta.size() != N) {
    throw DimensionError("candidate shape disagrees with cfg.N");
  }
  if (scen.horizon != N) {
    throw DimensionError("scenario horizon must equal the MPC horizon");
  }
  if (wbar_window.rows() != N || wbar_window.cols() != n) {
    throw DimensionError("wbar_window must be N x n");
  }

  double viol = 0.0;
  for (int t = 0; t < N; ++t) {
    const Eigen::VectorXd defect =
        cand.z.row(t + 1).transpose() - sys.A * cand.z.row(t).transpose() -
        sys.B * cand.v.row(t).transpose() - wbar_window.row(t).transpose();
    viol = std::max(viol, defect.lpNorm<Eigen::Infinity>());
    for (int c = 0; c < m; ++c) {
      viol = std::max(viol, cand.v(t, c) - cfg.input_box_v.upper(c));
      viol = std::max(viol, cfg.input_box_v.lower(c) - cand.v(t, c));
    }
    viol = std::max(viol, -cand.theta(t));
  }
  if (cfg.terminal.kind == TerminalSet::Kind::Singleton) {
    viol = std::max(viol, (cand.z.row(N).transpose() - cfg.terminal.x_f)
                              .lpNorm<Eigen::Infinity>());
  }
  for (const auto& c : cfg.constraints) {
    for (int t = 0; t < N; ++t) {
      Eigen::MatrixXd errs(scen.n_samples, n);
      for (int j = 0; j < scen.n_samples; ++j) {
        errs.row(j) = scen.errors[j].row(t + 1);
      }
      const double margin = evaluate_dr_cvar_margin(
          c, cfg.ambiguity, errs, cand.z.row(t).transpose());
      viol = std::max(viol, c.alpha * margin - cand.theta(t));
    }
  }
  return viol;
}

}  // namespace drmpc
