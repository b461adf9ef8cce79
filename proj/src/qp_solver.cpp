#include "drmpc/qp_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace drmpc {

namespace {

constexpr double kDelta = 1e-9;  // static quasidefinite regularization

using SpMat = Eigen::SparseMatrix<double>;
using SpMatRow = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Trip = Eigen::Triplet<double>;

void check_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw ValueError(std::string(what) + " has non-finite entries");
}

void check_finite(const SpMat& m, const char* what) {
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      if (!std::isfinite(it.value())) {
        throw ValueError(std::string(what) + " has non-finite entries");
      }
    }
  }
}

/// Largest step t in [0, 1] with v + t*dv >= (1 - ftb) * v, i.e. the
/// fraction-to-boundary rule with coefficient ftb.
double bounded_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv,
                    double ftb) {
  double t = 1.0 / ftb;  // so that ftb * t starts at 1
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0) t = std::min(t, -v(i) / dv(i));
  }
  return std::min(1.0, ftb * t);
}

struct Residuals {
  Eigen::VectorXd rd, rp, rg;
  double primal_true = 0, dual = 0, gap_sum = 0, gap_abs = 0;
};

struct Iterate {
  Eigen::VectorXd x, y, z, w;
};

class IpmCore {
 public:
  IpmCore(const QpStandardForm& qp, SpMat Ared, Eigen::VectorXd bred)
      : qp_(qp),
        A_(std::move(Ared)),
        b_(std::move(bred)),
        Grow_(qp.G),
        d_(qp.d()),
        p_(static_cast<int>(b_.size())),
        g_(qp.g()) {}

  /// K_hat * [u1; u2] where K_hat is the unregularized Newton matrix
  /// [P + G'DG, A'; A, 0]; used for iterative refinement.
  Eigen::VectorXd khat_mul(const Eigen::VectorXd& u,
                           const Eigen::VectorXd& D) const {
    Eigen::VectorXd out(d_ + p_);
    const auto u1 = u.head(d_);
    out.head(d_) = qp_.P * u1;
    if (g_ > 0) {
      Eigen::VectorXd Gu = qp_.G * u1;
      out.head(d_) += qp_.G.transpose() * D.cwiseProduct(Gu).eval();
    }
    if (p_ > 0) {
      out.head(d_) += A_.transpose() * u.tail(p_);
      out.tail(p_) = A_ * u1;
    }
    return out;
  }

  void assemble_kkt(const Eigen::VectorXd& D, double delta) {
    trips_.clear();
    for (int k = 0; k < qp_.P.outerSize(); ++k) {
      for (SpMat::InnerIterator it(qp_.P, k); it; ++it) {
        trips_.emplace_back(static_cast<int>(it.row()),
                            static_cast<int>(it.col()), it.value());
      }
    }
    for (int r = 0; r < g_; ++r) {
      for (SpMatRow::InnerIterator a(Grow_, r); a; ++a) {
        for (SpMatRow::InnerIterator b(Grow_, r); b; ++b) {
          trips_.emplace_back(static_cast<int>(a.col()),
                              static_cast<int>(b.col()),
                              D(r) * a.value() * b.value());
        }
      }
    }
    for (int i = 0; i < d_; ++i) trips_.emplace_back(i, i, delta);
    for (int k = 0; k < A_.outerSize(); ++k) {
      for (SpMat::InnerIterator it(A_, k); it; ++it) {
        const int r = d_ + static_cast<int>(it.row());
        const int c = static_cast<int>(it.col());
        trips_.emplace_back(r, c, it.value());
        trips_.emplace_back(c, r, it.value());
      }
    }
    for (int i = 0; i < p_; ++i) trips_.emplace_back(d_ + i, d_ + i, -delta);
    K_.resize(d_ + p_, d_ + p_);
    K_.setFromTriplets(trips_.begin(), trips_.end());
  }

  bool factorize(const Eigen::VectorXd& D) {
    assemble_kkt(D, kDelta);
    if (!analyzed_) {
      ldlt_.analyzePattern(K_);
      analyzed_ = true;
    }
    ldlt_.factorize(K_);
    if (ldlt_.info() == Eigen::Success) return true;
    // One deterministic retry with a stiffer shift.
    assemble_kkt(D, 1e-7);
    ldlt_.factorize(K_);
    return ldlt_.info() == Eigen::Success;
  }

  Eigen::VectorXd solve_refined(const Eigen::VectorXd& rhs,
                                const Eigen::VectorXd& D) const {
    Eigen::VectorXd u = ldlt_.solve(rhs);
    const double rhs_scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
    for (int sweep = 0; sweep < 3; ++sweep) {
      Eigen::VectorXd r = rhs - khat_mul(u, D);
      if (r.lpNorm<Eigen::Infinity>() <= 1e-14 * rhs_scale) break;
      u += ldlt_.solve(r);
    }
    return u;
  }

  const QpStandardForm& qp_;
  SpMat A_;
  Eigen::VectorXd b_;
  SpMatRow Grow_;
  int d_, p_, g_;

  std::vector<Trip> trips_;
  SpMat K_;
  Eigen::SimplicialLDLT<SpMat> ldlt_;
  bool analyzed_ = false;
};

Residuals compute_residuals(const QpStandardForm& qp, const SpMat& Ared,
                            const Eigen::VectorXd& bred, const Iterate& it) {
  Residuals r;
  r.rd = qp.P * it.x + qp.q;
  if (bred.size() > 0) r.rd += Ared.transpose() * it.y;
  if (qp.g() > 0) r.rd += qp.G.transpose() * it.z;
  r.rp = (bred.size() > 0) ? (Ared * it.x - bred).eval() : Eigen::VectorXd(0);
  Eigen::VectorXd slack_gap;
  if (qp.g() > 0) {
    Eigen::VectorXd Gx = qp.G * it.x;
    r.rg = Gx + it.w - qp.h;
    slack_gap = qp.h - Gx;
    r.primal_true = std::max(0.0, (Gx - qp.h).maxCoeff());
    r.gap_sum = it.w.dot(it.z);
    r.gap_abs = std::abs(it.z.dot(slack_gap));
  } else {
    r.rg.resize(0);
  }
  if (r.rp.size() > 0) {
    r.primal_true = std::max(r.primal_true, r.rp.lpNorm<Eigen::Infinity>());
  }
  r.dual = r.rd.lpNorm<Eigen::Infinity>();
  return r;
}

/// Projects the active-set guess taken from `it` onto the KKT equations of
/// the corresponding equality-constrained subproblem and overwrites `it`
/// when the refined point passes the full optimality test at tolerance
/// `tol`.  Returns false when no guess yields a certifiable point.
bool polish_active_set(const QpStandardForm& qp, const SpMat& Ared,
                       const Eigen::VectorXd& bred, double tol, Iterate& it) {
  const int d = qp.d();
  const int p = static_cast<int>(bred.size());
  const int g = qp.g();
  if (g == 0) return false;
  const SpMatRow Grow(qp.G);
  const double w_scale = 1.0 + it.w.lpNorm<Eigen::Infinity>();

  // Solves the equality-constrained subproblem for the given working set
  // with one refined solve of [P + dI, A~'; A~, -dI]; returns false on a
  // failed factorization or a non-finite result.  `raw` receives the
  // working-set multipliers before the sign clamp.
  const auto solve_working_set = [&](const std::vector<int>& active,
                                     Iterate& cand, Eigen::VectorXd& raw) {
    const int na = static_cast<int>(active.size());
    const int dim = d + p + na;

    std::vector<Trip> trips;
    for (int k = 0; k < qp.P.outerSize(); ++k) {
      for (SpMat::InnerIterator e(qp.P, k); e; ++e) {
        trips.emplace_back(static_cast<int>(e.row()),
                           static_cast<int>(e.col()), e.value());
      }
    }
    for (int i = 0; i < d; ++i) trips.emplace_back(i, i, kDelta);
    for (int k = 0; k < Ared.outerSize(); ++k) {
      for (SpMat::InnerIterator e(Ared, k); e; ++e) {
        const int r = d + static_cast<int>(e.row());
        const int c = static_cast<int>(e.col());
        trips.emplace_back(r, c, e.value());
        trips.emplace_back(c, r, e.value());
      }
    }
    for (int a = 0; a < na; ++a) {
      for (SpMatRow::InnerIterator e(Grow, active[a]); e; ++e) {
        const int r = d + p + a;
        const int c = static_cast<int>(e.col());
        trips.emplace_back(r, c, e.value());
        trips.emplace_back(c, r, e.value());
      }
    }
    for (int i = d; i < dim; ++i) trips.emplace_back(i, i, -kDelta);

    SpMat K(dim, dim);
    K.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<SpMat> ldlt(K);
    if (ldlt.info() != Eigen::Success) return false;

    Eigen::VectorXd rhs(dim);
    rhs.head(d) = -qp.q;
    if (p > 0) rhs.segment(d, p) = bred;
    for (int a = 0; a < na; ++a) rhs(d + p + a) = qp.h(active[a]);

    // Unregularized product for iterative refinement against the exact
    // equality-KKT system.
    const auto kkt_mul = [&](const Eigen::VectorXd& u) {
      Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
      const Eigen::VectorXd u1 = u.head(d);
      out.head(d) = qp.P * u1;
      if (p > 0) {
        out.head(d) += Ared.transpose() * u.segment(d, p);
        out.segment(d, p) = Ared * u1;
      }
      for (int a = 0; a < na; ++a) {
        double row_dot = 0.0;
        for (SpMatRow::InnerIterator e(Grow, active[a]); e; ++e) {
          out(e.col()) += e.value() * u(d + p + a);
          row_dot += e.value() * u1(e.col());
        }
        out(d + p + a) = row_dot;
      }
      return out;
    };

    Eigen::VectorXd u = ldlt.solve(rhs);
    const double rhs_scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
    for (int sweep = 0; sweep < 3; ++sweep) {
      const Eigen::VectorXd r = rhs - kkt_mul(u);
      if (r.lpNorm<Eigen::Infinity>() <= 1e-14 * rhs_scale) break;
      u += ldlt.solve(r);
    }
    if (!u.allFinite()) return false;

    cand.x = u.head(d);
    cand.y = u.segment(d, p);
    cand.z = Eigen::VectorXd::Zero(g);
    for (int a = 0; a < na; ++a) {
      cand.z(active[a]) = std::max(0.0, u(d + p + a));
    }
    cand.w = (qp.h - qp.G * cand.x).cwiseMax(0.0);
    return true;
  };

  for (int guess = 0; guess < 2; ++guess) {
    std::vector<char> in_set(g, 0);
    std::vector<int> active;
    for (int i = 0; i < g; ++i) {
      const bool on =
          guess == 0 ? it.z(i) >= it.w(i) : it.w(i) <= 1e-6 * w_scale;
      if (on) {
        in_set[i] = 1;
        active.push_back(i);
      }
    }

    // Cost-free directions can carry the equality-projected point off the
    // feasible face; a violated row then joins the working set and the
    // subproblem is re-solved.  The set only grows, so the loop terminates.
    for (int round = 0; round < 8; ++round) {
      Iterate cand;
      if (!solve_working_set(active, cand)) break;

      const Eigen::VectorXd slack = qp.h - qp.G * cand.x;
      bool grew = false;
      for (int i = 0; i < g; ++i) {
        if (!in_set[i] && slack(i) < -tol) {
          in_set[i] = 1;
          active.push_back(i);
          grew = true;
        }
      }
      if (grew) continue;

      const Residuals rc = compute_residuals(qp, Ared, bred, cand);
      const double gap_tol =
          tol * (1.0 + std::max(std::abs(cand.x.dot(qp.P * cand.x)),
                                std::abs(qp.q.dot(cand.x))));
      if (rc.primal_true <= tol && rc.dual <= tol &&
          std::max(rc.gap_sum, rc.gap_abs) <= gap_tol) {
        it = cand;
        return true;
      }
      break;
    }
  }
  return false;
}

void finish_solution(const QpStandardForm& qp, const Iterate& it,
                     const std::vector<int>& kept_rows, QpSolution& sol) {
  sol.x = it.x;
  sol.z_ineq = it.z;
  sol.y_eq = Eigen::VectorXd::Zero(qp.p());
  for (std::size_t i = 0; i < kept_rows.size(); ++i) {
    sol.y_eq(kept_rows[i]) = it.y(static_cast<Eigen::Index>(i));
  }
  sol.objective = qp.objective(it.x);
  const KktResiduals res = kkt_residuals(qp, sol);
  sol.primal_residual = res.primal;
  sol.dual_residual = res.dual;
  sol.gap = res.gap;
}

}  // namespace

static QpSolution solve_qp_impl(const QpStandardForm& qp,
                                const SolverOptions& opts,
                                bool classify_infeasible);
static FeasibilityResult feasibility_probe(const QpStandardForm& qp,
                                           double tol, int max_iter);

QpStandardForm QpStandardForm::make_dense(
    const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
    const Eigen::MatrixXd& Aeq, const Eigen::VectorXd& beq,
    const Eigen::MatrixXd& G, const Eigen::VectorXd& h, double constant) {
  const Eigen::MatrixXd Psym = 0.5 * (P + P.transpose());
  QpStandardForm qp;
  qp.P = Psym.sparseView();
  qp.q = q;
  qp.Aeq = Aeq.sparseView();
  qp.beq = beq;
  qp.G = G.sparseView();
  qp.h = h;
  qp.constant = constant;
  if (qp.Aeq.rows() == 0) qp.Aeq.resize(0, qp.d());
  if (qp.G.rows() == 0) qp.G.resize(0, qp.d());
  qp.validate();
  return qp;
}

QpStandardForm QpStandardForm::make_sparse(Eigen::SparseMatrix<double> P,
                                           Eigen::VectorXd q,
                                           Eigen::SparseMatrix<double> Aeq,
                                           Eigen::VectorXd beq,
                                           Eigen::SparseMatrix<double> G,
                                           Eigen::VectorXd h,
                                           double constant) {
  QpStandardForm qp;
  SpMat Pt = P.transpose();
  qp.P = 0.5 * (P + Pt);
  qp.P.makeCompressed();
  qp.q = std::move(q);
  qp.Aeq = std::move(Aeq);
  qp.beq = std::move(beq);
  qp.G = std::move(G);
  qp.h = std::move(h);
  qp.constant = constant;
  if (qp.Aeq.rows() == 0) qp.Aeq.resize(0, qp.d());
  if (qp.G.rows() == 0) qp.G.resize(0, qp.d());
  qp.Aeq.makeCompressed();
  qp.G.makeCompressed();
  qp.validate();
  return qp;
}

void QpStandardForm::validate() const {
  if (P.rows() != d() || P.cols() != d()) throw DimensionError("P shape");
  if (Aeq.rows() != p() || (p() > 0 && Aeq.cols() != d())) {
    throw DimensionError("Aeq shape");
  }
  if (G.rows() != g() || (g() > 0 && G.cols() != d())) {
    throw DimensionError("G shape");
  }
  check_finite(P, "P");
  check_finite(Aeq, "Aeq");
  check_finite(G, "G");
  check_finite(q, "q");
  check_finite(beq, "beq");
  check_finite(h, "h");
  if (!std::isfinite(constant)) throw ValueError("constant not finite");
}

double QpStandardForm::objective(const Eigen::VectorXd& x) const {
  return 0.5 * x.dot(P * x) + q.dot(x) + constant;
}

static QpSolution solve_qp_impl(const QpStandardForm& qp,
                                const SolverOptions& opts,
                                bool classify_infeasible) {
  const auto t_start = std::chrono::steady_clock::now();
  QpSolution sol;
  const int d = qp.d(), g = qp.g();

  auto stamp = [&](QpSolution& s) {
    s.solve_time_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
  };

  if (d == 0) {
    sol.x.resize(0);
    sol.y_eq = Eigen::VectorXd::Zero(qp.p());
    sol.z_ineq = Eigen::VectorXd::Zero(g);
    sol.status = QpStatus::Optimal;
    sol.objective = qp.constant;
    stamp(sol);
    return sol;
  }

  // Equality presolve: keep a maximal independent subset of rows; the
  // dropped rows are re-checked against the final point.
  std::vector<int> kept_rows;
  std::vector<int> dropped_rows;
  SpMat Ared = qp.Aeq;
  Eigen::VectorXd bred = qp.beq;
  if (qp.p() > 0 && !opts.assume_full_row_rank) {
    Eigen::MatrixXd At = Eigen::MatrixXd(qp.Aeq).transpose();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(At);
    const int rank = static_cast<int>(qr.rank());
    if (rank < qp.p()) {
      const auto perm = qr.colsPermutation().indices();
      std::vector<char> keep(qp.p(), 0);
      for (int i = 0; i < rank; ++i) keep[perm(i)] = 1;
      for (int i = 0; i < qp.p(); ++i) {
        (keep[i] ? kept_rows : dropped_rows).push_back(i);
      }
      std::vector<Trip> trips;
      std::vector<int> row_map(qp.p(), -1);
      for (std::size_t i = 0; i < kept_rows.size(); ++i) {
        row_map[kept_rows[i]] = static_cast<int>(i);
      }
      for (int k = 0; k < qp.Aeq.outerSize(); ++k) {
        for (SpMat::InnerIterator it(qp.Aeq, k); it; ++it) {
          const int nr = row_map[it.row()];
          if (nr >= 0) {
            trips.emplace_back(nr, static_cast<int>(it.col()), it.value());
          }
        }
      }
      Ared.resize(rank, d);
      Ared.setFromTriplets(trips.begin(), trips.end());
      bred.resize(rank);
      for (std::size_t i = 0; i < kept_rows.size(); ++i) {
        bred(static_cast<Eigen::Index>(i)) = qp.beq(kept_rows[i]);
      }
    }
  }
  if (kept_rows.empty()) {
    kept_rows.resize(qp.p());
    for (int i = 0; i < qp.p(); ++i) kept_rows[i] = i;
  }
  const int p = static_cast<int>(bred.size());

  IpmCore core(qp, Ared, bred);

  // Pure equality-constrained QP: one refined KKT solve.
  if (g == 0) {
    Eigen::VectorXd D0(0);
    if (!core.factorize(D0)) {
      sol.x = Eigen::VectorXd::Zero(d);
      sol.y_eq = Eigen::VectorXd::Zero(qp.p());
      sol.z_ineq.resize(0);
      sol.status = QpStatus::NumericalFailure;
      sol.objective = qp.objective(sol.x);
      stamp(sol);
      return sol;
    }
    Eigen::VectorXd rhs(d + p);
    rhs.head(d) = -qp.q;
    rhs.tail(p) = bred;
    const Eigen::VectorXd u = core.solve_refined(rhs, D0);
    Iterate it;
    it.x = u.head(d);
    it.y = u.tail(p);
    it.z.resize(0);
    it.w.resize(0);
    finish_solution(qp, it, kept_rows, sol);
    const bool ok = sol.primal_residual <= opts.tol &&
                    sol.dual_residual <= opts.tol && it.x.allFinite();
    sol.status = ok ? QpStatus::Optimal : QpStatus::NumericalFailure;
    sol.iterations = 1;
    stamp(sol);
    return sol;
  }

  // Mehrotra starting point: the D = I solve returns an x with
  // P x + q + A'y + G'(Gx - h) ~= 0, so Gx - h is a consistent dual
  // estimate; both slack and dual get shifted into the positive orthant.
  Iterate cur;
  {
    Eigen::VectorXd D1 = Eigen::VectorXd::Ones(g);
    if (!core.factorize(D1)) {
      sol.x = Eigen::VectorXd::Zero(d);
      sol.y_eq = Eigen::VectorXd::Zero(qp.p());
      sol.z_ineq = Eigen::VectorXd::Zero(g);
      sol.status = QpStatus::NumericalFailure;
      sol.objective = qp.objective(sol.x);
      stamp(sol);
      return sol;
    }
    Eigen::VectorXd rhs(d + p);
    rhs.head(d) = -qp.q + qp.G.transpose() * qp.h;
    rhs.tail(p) = bred;
    const Eigen::VectorXd u = core.solve_refined(rhs, D1);
    cur.x = u.head(d);
    cur.y = u.tail(p);
    const Eigen::VectorXd wt = qp.h - qp.G * cur.x;
    const Eigen::VectorXd zt = -wt;
    const double dw0 = std::max(0.0, -1.5 * wt.minCoeff());
    const double dz0 = std::max(0.0, -1.5 * zt.minCoeff());
    const Eigen::VectorXd wh = wt.array() + dw0;
    const Eigen::VectorXd zh = zt.array() + dz0;
    const double cross = wh.dot(zh);
    const double dwh = dw0 + 0.5 * cross / std::max(zh.sum(), 1e-300);
    const double dzh = dz0 + 0.5 * cross / std::max(wh.sum(), 1e-300);
    cur.w = (wt.array() + dwh).cwiseMax(1e-8).matrix();
    cur.z = (zt.array() + dzh).cwiseMax(1e-8).matrix();
  }

  Iterate best = cur;
  double best_score = std::numeric_limits<double>::infinity();
  QpStatus status = QpStatus::MaxIter;
  int iters_done = 0;

  int floor_hits = 0;

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    Residuals res = compute_residuals(qp, Ared, bred, cur);
    const double mu = res.gap_sum / g;
    const double gap_metric = std::max(res.gap_sum, res.gap_abs);
    // The gap tolerance follows the objective scale; badly scaled
    // problems cannot reach a tiny absolute gap at double precision.
    const double gap_tol =
        opts.tol * (1.0 + std::max(std::abs(cur.x.dot(qp.P * cur.x)),
                                   std::abs(qp.q.dot(cur.x))));

    const double score =
        std::max({res.primal_true, res.dual, gap_metric * opts.tol / gap_tol});
    if (score < best_score) {
      best_score = score;
      best = cur;
    }

    if (res.primal_true <= opts.tol && res.dual <= opts.tol &&
        gap_metric <= gap_tol) {
      status = QpStatus::Optimal;
      best = cur;
      break;
    }
    if (iter >= 20 && res.primal_true > 1e-6 &&
        (mu < 1e-12 || cur.z.lpNorm<Eigen::Infinity>() > 1e10)) {
      status = QpStatus::PrimalInfeasible;
      break;
    }

    Eigen::VectorXd D = (cur.z.array() / cur.w.array())
                            .cwiseMax(1e-14)
                            .cwiseMin(1e14)
                            .matrix();
    if (!core.factorize(D)) {
      status = QpStatus::NumericalFailure;
      break;
    }

    auto newton_step = [&](const Eigen::VectorXd& rc, Eigen::VectorXd& dx,
                           Eigen::VectorXd& dy, Eigen::VectorXd& dz,
                           Eigen::VectorXd& dw) {
      Eigen::VectorXd rhs(d + p);
      Eigen::VectorXd t = D.cwiseProduct(res.rg) -
                          rc.cwiseQuotient(cur.w);
      rhs.head(d) = -res.rd - qp.G.transpose() * t;
      if (p > 0) rhs.tail(p) = -res.rp;
      const Eigen::VectorXd u = core.solve_refined(rhs, D);
      dx = u.head(d);
      dy = u.tail(p);
      const Eigen::VectorXd Gdx = qp.G * dx;
      dz = D.cwiseProduct(Gdx + res.rg) - rc.cwiseQuotient(cur.w);
      dw = -res.rg - Gdx;
    };

    // Predictor (affine scaling direction).
    Eigen::VectorXd rc_aff = cur.w.cwiseProduct(cur.z);
    Eigen::VectorXd dxa, dya, dza, dwa;
    newton_step(rc_aff, dxa, dya, dza, dwa);
    if (!dxa.allFinite()) {
      status = QpStatus::NumericalFailure;
      break;
    }
    const double a_aff =
        std::min(bounded_step(cur.w, dwa, 1.0), bounded_step(cur.z, dza, 1.0));
    const double mu_aff = (cur.w + a_aff * dwa).dot(cur.z + a_aff * dza) / g;
    const double ratio = std::clamp(mu_aff / std::max(mu, 1e-300), 0.0, 1.0);
    const double sigma = ratio * ratio * ratio;

    // Corrector with centering.
    Eigen::VectorXd rc = rc_aff + dwa.cwiseProduct(dza) -
                         Eigen::VectorXd::Constant(g, sigma * mu);
    Eigen::VectorXd dx, dy, dz, dw;
    newton_step(rc, dx, dy, dz, dw);
    if (!dx.allFinite()) {
      status = QpStatus::NumericalFailure;
      break;
    }

    double ap = bounded_step(cur.w, dw, 0.99);
    double ad = bounded_step(cur.z, dz, 0.99);

    // Plain centering retains a strictly negative gap derivative along a
    // common step, so it can rescue the iteration when the second-order
    // corrector misbehaves after a wild predictor.
    const double sigma_fb = std::clamp(sigma, 0.1, 0.9);
    bool have_fb = false;
    Eigen::VectorXd fx, fy, fz, fw;
    const auto ensure_fallback = [&]() {
      if (have_fb) return;
      const Eigen::VectorXd rc_fb =
          rc_aff - Eigen::VectorXd::Constant(g, sigma_fb * mu);
      newton_step(rc_fb, fx, fy, fz, fw);
      have_fb = true;
    };

    if (std::min(ap, ad) < 0.8 * a_aff) {
      ensure_fallback();
      if (fx.allFinite()) {
        const double ap2 = bounded_step(cur.w, fw, 0.99);
        const double ad2 = bounded_step(cur.z, fz, 0.99);
        if (std::min(ap2, ad2) > std::min(ap, ad)) {
          dx = fx;
          dy = fy;
          dz = fz;
          dw = fw;
          ap = ap2;
          ad = ad2;
        }
      }
    }

    // Monotone gap: shrink the corrector step; when no scale keeps w'z
    // from rising, take the centering direction with a common step.
    const double gap_bound = res.gap_sum * (1.0 + 1e-12);
    const auto gap_after = [&](const Eigen::VectorXd& dw_,
                               const Eigen::VectorXd& dz_, double sp,
                               double sd) {
      return (cur.w + sp * dw_).dot(cur.z + sd * dz_);
    };
    bool accepted = false;
    double sp = 0.0, sd = 0.0;
    double scale = 1.0;
    for (int back = 0; back <= 6; ++back, scale *= 0.5) {
      if (gap_after(dw, dz, scale * ap, scale * ad) <= gap_bound) {
        accepted = true;
        sp = scale * ap;
        sd = scale * ad;
        break;
      }
    }
    if (!accepted) {
      ensure_fallback();
      if (fx.allFinite()) {
        const double common =
            std::min(bounded_step(cur.w, fw, 0.99), bounded_step(cur.z, fz, 0.99));
        scale = 1.0;
        for (int back = 0; back <= 12; ++back, scale *= 0.5) {
          if (gap_after(fw, fz, scale * common, scale * common) <= gap_bound) {
            accepted = true;
            sp = sd = scale * common;
            dx = fx;
            dy = fy;
            dz = fz;
            dw = fw;
            break;
          }
        }
      }
    }
    floor_hits = accepted ? 0 : floor_hits + 1;
    if (floor_hits >= 3) break;
    if (!accepted) continue;

    cur.x += sp * dx;
    cur.w += sp * dw;
    cur.y += sd * dy;
    cur.z += sd * dz;
    iters_done = iter + 1;
    sol.gap_history.push_back(cur.w.dot(cur.z));

    if (!cur.x.allFinite() || !cur.w.allFinite() || !cur.z.allFinite()) {
      status = QpStatus::NumericalFailure;
      break;
    }
  }

  // A stall at a degenerate vertex can leave the complementarity gap just
  // above tolerance while primal and dual residuals are already tight;
  // the active-set polish recovers a certifiable point or leaves the
  // status untouched.  A stall with a large primal residual is resolved
  // through an independent feasibility probe instead.
  if (status == QpStatus::MaxIter) {
    const Residuals rb = compute_residuals(qp, Ared, bred, best);
    if (rb.primal_true <= 1e-6 && rb.dual <= 1e-6) {
      if (polish_active_set(qp, Ared, bred, opts.tol, best)) {
        status = QpStatus::Optimal;
      }
    } else if (classify_infeasible &&
               rb.primal_true > std::max(1e-6, 10 * opts.tol)) {
      const FeasibilityResult fr = feasibility_probe(qp, 1e-7, opts.max_iter);
      if (!fr.feasible && fr.max_violation > 1e-6) {
        status = QpStatus::PrimalInfeasible;
      }
    }
  }

  finish_solution(qp, best, kept_rows, sol);

  // Dropped dependent equality rows must still hold at the solution.
  if (status == QpStatus::Optimal && !dropped_rows.empty()) {
    for (int r : dropped_rows) {
      const double resid = std::abs(qp.Aeq.row(r).dot(sol.x) - qp.beq(r));
      if (resid > std::max(1e-6, 10 * opts.tol)) {
        status = QpStatus::PrimalInfeasible;
        break;
      }
    }
  }

  sol.status = status;
  sol.iterations = iters_done;
  stamp(sol);
  return sol;
}

KktResiduals kkt_residuals(const QpStandardForm& qp, const QpSolution& sol) {
  KktResiduals r;
  Eigen::VectorXd rd = qp.P * sol.x + qp.q;
  if (qp.p() > 0) {
    rd += qp.Aeq.transpose() * sol.y_eq;
    r.primal = (qp.Aeq * sol.x - qp.beq).lpNorm<Eigen::Infinity>();
  }
  if (qp.g() > 0) {
    rd += qp.G.transpose() * sol.z_ineq;
    const Eigen::VectorXd slack = qp.h - qp.G * sol.x;
    r.primal = std::max(r.primal, std::max(0.0, -slack.minCoeff()));
    r.gap = std::abs(sol.z_ineq.dot(slack));
  }
  r.dual = rd.lpNorm<Eigen::Infinity>();
  return r;
}

// Runs the probe through solve_qp_impl with infeasibility classification
// disabled so the two exit paths cannot recurse into each other.
static FeasibilityResult feasibility_probe(const QpStandardForm& qp,
                                           double tol, int max_iter) {
  QpStandardForm probe = qp;
  // A 1e-8 ridge keeps the Newton system well posed on the zero-objective
  // probe; the feasible set is untouched.
  SpMat ridge(qp.d(), qp.d());
  ridge.setIdentity();
  probe.P = 1e-8 * ridge;
  probe.q = Eigen::VectorXd::Zero(qp.d());
  probe.constant = 0.0;

  SolverOptions opts;
  opts.tol = std::min(tol, 1e-9);
  opts.max_iter = max_iter;
  const QpSolution sol = solve_qp_impl(probe, opts, false);

  FeasibilityResult out;
  out.x = sol.x;
  double viol = 0.0;
  if (qp.p() > 0) {
    viol = (qp.Aeq * sol.x - qp.beq).lpNorm<Eigen::Infinity>();
  }
  if (qp.g() > 0) {
    viol = std::max(viol, std::max(0.0, (qp.G * sol.x - qp.h).maxCoeff()));
  }
  out.max_violation = viol;
  out.feasible = viol <= tol && sol.x.allFinite();
  return out;
}

QpSolution solve_qp(const QpStandardForm& qp, const SolverOptions& opts) {
  return solve_qp_impl(qp, opts, true);
}

FeasibilityResult check_feasibility(const QpStandardForm& qp, double tol,
                                    int max_iter) {
  return feasibility_probe(qp, tol, max_iter);
}

}  // namespace drmpc
