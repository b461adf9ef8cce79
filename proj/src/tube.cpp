#include "drmpc/tube.hpp"

#include <cmath>

namespace drmpc {

namespace {

void check_shared_dims(const LtiSystem& sys, const TubeController& ctrl,
                       const Eigen::VectorXd& e0,
                       const ScenarioDisturbances& scen) {
  if (ctrl.n() != sys.n() || ctrl.m() != sys.m()) {
    throw DimensionError("controller and system dimensions disagree");
  }
  if (e0.size() != sys.n()) throw DimensionError("e0 has wrong length");
  if (scen.n_samples <= 0 || scen.length <= 0) {
    throw ValueError("scenario set is empty");
  }
  for (const auto& w : scen.values) {
    if (w.rows() != scen.length || w.cols() != sys.n()) {
      throw DimensionError("scenario window shape mismatch");
    }
  }
}

}  // namespace

LtiSystem::LtiSystem(Eigen::MatrixXd A_, Eigen::MatrixXd B_)
    : A(std::move(A_)), B(std::move(B_)) {
  if (A.rows() != A.cols()) throw DimensionError("A must be square");
  if (B.rows() != A.rows()) throw DimensionError("B row count must match A");
  if (B.cols() < 1) throw DimensionError("B needs at least one column");
  const int nn = n();
  Eigen::MatrixXd ctrb(nn, nn * m());
  Eigen::MatrixXd Ak = Eigen::MatrixXd::Identity(nn, nn);
  for (int i = 0; i < nn; ++i) {
    ctrb.middleCols(i * m(), m()) = Ak * B;
    Ak = A * Ak;
  }
  if (Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(ctrb).rank() < nn) {
    throw ControllabilityError("(A, B) fails the controllability rank test");
  }
}

TubeController TubeController::linear(Eigen::MatrixXd K_) {
  TubeController c;
  c.kind = Kind::Linear;
  c.K = std::move(K_);
  return c;
}

TubeController TubeController::saturated(Eigen::MatrixXd K_, double limit_) {
  Eigen::VectorXd lim = Eigen::VectorXd::Constant(K_.rows(), limit_);
  return saturated(std::move(K_), std::move(lim));
}

TubeController TubeController::saturated(Eigen::MatrixXd K_,
                                         Eigen::VectorXd limit_) {
  if (limit_.size() != K_.rows()) {
    throw DimensionError("saturation limit length must equal K rows");
  }
  if ((limit_.array() <= 0).any()) {
    throw ValueError("saturation limits must be > 0");
  }
  TubeController c;
  c.kind = Kind::Saturated;
  c.K = std::move(K_);
  c.limit = std::move(limit_);
  return c;
}

Box TubeController::output_box() const {
  if (kind != Kind::Saturated) {
    throw ControllerKindError("only a saturated policy has a bounded range");
  }
  return Box(-limit, limit);
}

Eigen::VectorXd apply_controller(const TubeController& ctrl,
                                 const Eigen::VectorXd& e) {
  if (e.size() != ctrl.n()) throw DimensionError("error vector length");
  Eigen::VectorXd u = ctrl.K * e;
  if (ctrl.kind == TubeController::Kind::Saturated) {
    u = u.cwiseMax(-ctrl.limit).cwiseMin(ctrl.limit);
  }
  return u;
}

DareResult solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                      const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                      double tol, int max_iter) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  if (A.cols() != n || B.rows() != n) throw DimensionError("A/B shapes");
  if (Q.rows() != n || Q.cols() != n) throw DimensionError("Q shape");
  if (R.rows() != m || R.cols() != m) throw DimensionError("R shape");
  if (!Q.isApprox(Q.transpose(), 1e-12)) throw ValueError("Q not symmetric");
  if (!R.isApprox(R.transpose(), 1e-12)) throw ValueError("R not symmetric");
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q);
    if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, Q.norm())) {
      throw ValueError("Q must be PSD");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(R);
    if (llt.info() != Eigen::Success) throw ValueError("R must be PD");
  }

  Eigen::MatrixXd P = Q;
  double residual = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::MatrixXd BtP = B.transpose() * P;
    const Eigen::MatrixXd S = R + BtP * B;           // R + B'PB, PD
    const Eigen::MatrixXd SinvBtPA = S.llt().solve(BtP * A);
    Eigen::MatrixXd Pn =
        Q + A.transpose() * P * A - (BtP * A).transpose() * SinvBtPA;
    Pn = 0.5 * (Pn + Pn.transpose().eval());
    residual = (Pn - P).cwiseAbs().maxCoeff();
    P = Pn;
    if (residual <= tol) {
      const Eigen::MatrixXd BtPf = B.transpose() * P;
      const Eigen::MatrixXd Sf = R + BtPf * B;
      DareResult out;
      out.P = P;
      out.K = -Sf.llt().solve(BtPf * A);
      out.iterations = it;
      out.residual = residual;
      return out;
    }
  }
  throw ConvergenceError("DARE fixed point stalled at residual " +
                         std::to_string(residual));
}

double spectral_radius(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) throw DimensionError("matrix not square");
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

ErrorScenarios propagate_error_scenarios(const LtiSystem& sys,
                                         const TubeController& ctrl,
                                         const Eigen::VectorXd& e0,
                                         const ScenarioDisturbances& scen) {
  check_shared_dims(sys, ctrl, e0, scen);
  if (ctrl.kind == TubeController::Kind::Linear &&
      spectral_radius(sys.A + sys.B * ctrl.K) >= 1.0) {
    throw ValueError("linear tube gain does not make A + BK Schur stable");
  }
  const int N = scen.length;
  ErrorScenarios out;
  out.n_samples = scen.n_samples;
  out.horizon = N;
  out.errors.reserve(scen.n_samples);
  out.input_errors.reserve(scen.n_samples);
  for (int j = 0; j < scen.n_samples; ++j) {
    Eigen::MatrixXd e(N + 1, sys.n());
    Eigen::MatrixXd ue(N, sys.m());
    e.row(0) = e0.transpose();
    for (int t = 0; t < N; ++t) {
      const Eigen::VectorXd et = e.row(t).transpose();
      const Eigen::VectorXd ut = apply_controller(ctrl, et);
      ue.row(t) = ut.transpose();
      e.row(t + 1) =
          (sys.A * et + sys.B * ut + scen.values[j].row(t).transpose())
              .transpose();
    }
    out.errors.push_back(std::move(e));
    out.input_errors.push_back(std::move(ue));
  }
  return out;
}

ErrorScenarios explicit_error_affine(const LtiSystem& sys,
                                     const Eigen::MatrixXd& K,
                                     const Eigen::VectorXd& e0,
                                     const ScenarioDisturbances& scen) {
  const TubeController lin = TubeController::linear(K);
  check_shared_dims(sys, lin, e0, scen);
  const Eigen::MatrixXd Ak = sys.A + sys.B * K;
  if (spectral_radius(Ak) >= 1.0) {
    throw ValueError("linear tube gain does not make A + BK Schur stable");
  }
  const int N = scen.length;

  // Powers A_K^0 .. A_K^N, computed once and shared by every scenario.
  std::vector<Eigen::MatrixXd> pw(N + 1);
  pw[0] = Eigen::MatrixXd::Identity(sys.n(), sys.n());
  for (int t = 1; t <= N; ++t) pw[t] = Ak * pw[t - 1];

  ErrorScenarios out;
  out.n_samples = scen.n_samples;
  out.horizon = N;
  out.errors.reserve(scen.n_samples);
  out.input_errors.reserve(scen.n_samples);
  for (int j = 0; j < scen.n_samples; ++j) {
    Eigen::MatrixXd e(N + 1, sys.n());
    Eigen::MatrixXd ue(N, sys.m());
    for (int t = 0; t <= N; ++t) {
      Eigen::VectorXd et = pw[t] * e0;
      for (int i = 0; i < t; ++i) {
        et += pw[t - 1 - i] * scen.values[j].row(i).transpose();
      }
      e.row(t) = et.transpose();
      if (t < N) ue.row(t) = (K * et).transpose();
    }
    out.errors.push_back(std::move(e));
    out.input_errors.push_back(std::move(ue));
  }
  return out;
}

Box tighten_input_box(const Box& u_box, const TubeController& ctrl) {
  const Box eu = ctrl.output_box();  // throws for non-saturated kinds
  if (u_box.dim() != eu.dim()) {
    throw DimensionError("input box and policy range dimensions disagree");
  }
  const Eigen::VectorXd lo = u_box.lower + ctrl.limit;
  const Eigen::VectorXd up = u_box.upper - ctrl.limit;
  if ((lo.array() > up.array()).any()) {
    throw TighteningError("input tightening produced an empty box");
  }
  return Box(lo, up);
}

Eigen::VectorXd nominal_step(const LtiSystem& sys, const Eigen::VectorXd& z,
                             const Eigen::VectorXd& v,
                             const Eigen::VectorXd& wbar) {
  if (z.size() != sys.n() || v.size() != sys.m() || wbar.size() != sys.n()) {
    throw DimensionError("nominal_step argument lengths");
  }
  return sys.A * z + sys.B * v + wbar;
}

}  // namespace drmpc
