#include "drmpc/dr_cvar.hpp"

#include <algorithm>
#include <cmath>

namespace drmpc {

double dual_norm(const Eigen::VectorXd& v, QNorm q) {
  switch (q) {
    case QNorm::One:
      return v.lpNorm<Eigen::Infinity>();
    case QNorm::Two:
      return v.norm();
    case QNorm::Inf:
      return v.lpNorm<1>();
  }
  throw ValueError("unreachable norm kind");
}

HalfspaceChanceConstraint HalfspaceChanceConstraint::from_alpha(
    Eigen::VectorXd h_, double b_, double alpha_) {
  if (h_.size() == 0 || h_.isZero(0.0)) {
    throw ValueError("constraint normal h must be nonzero");
  }
  if (!(alpha_ > 0 && alpha_ < 1)) throw ValueError("alpha must be in (0,1)");
  HalfspaceChanceConstraint c;
  c.h = std::move(h_);
  c.b = b_;
  c.alpha = alpha_;
  c.p_level = 1.0 - alpha_;
  return c;
}

HalfspaceChanceConstraint HalfspaceChanceConstraint::from_p_level(
    Eigen::VectorXd h_, double b_, double p_level_) {
  if (!(p_level_ > 0 && p_level_ < 1)) {
    throw ValueError("p_level must be in (0,1)");
  }
  return from_alpha(std::move(h_), b_, 1.0 - p_level_);
}

CvarLpBlock build_cvar_block(const HalfspaceChanceConstraint& c,
                             const AmbiguityConfig& amb,
                             const Eigen::MatrixXd& errors_at_t, bool soft) {
  const int n = static_cast<int>(c.h.size());
  const int Ns = static_cast<int>(errors_at_t.rows());
  if (errors_at_t.cols() != n) {
    throw DimensionError("error sample width must match h");
  }
  if (Ns < 1) throw ValueError("need at least one error sample");

  CvarLpBlock blk;
  blk.h = c.h;
  blk.b = c.b;
  blk.alpha = c.alpha;
  blk.epsilon = amb.epsilon;
  blk.lambda = dual_norm(c.h, amb.q_norm);
  blk.soft = soft;
  blk.n_samples = Ns;
  blk.G = Eigen::MatrixXd::Zero(blk.rows(), blk.local_cols());
  blk.rhs = Eigen::VectorXd::Zero(blk.rows());

  // Budget row: -alpha tau + mean(s) - theta <= -epsilon lambda.
  blk.G(blk.budget_row(), blk.tau_col()) = -c.alpha;
  for (int j = 0; j < Ns; ++j) {
    blk.G(blk.budget_row(), blk.s_col(j)) = 1.0 / Ns;
  }
  if (soft) blk.G(blk.budget_row(), blk.theta_col()) = -1.0;
  blk.rhs(blk.budget_row()) = -amb.epsilon * blk.lambda;

  // Sample rows: h' z + tau - s_j <= b - h' e_hat_j.
  for (int j = 0; j < Ns; ++j) {
    blk.G.row(blk.sample_row(j)).head(n) = c.h.transpose();
    blk.G(blk.sample_row(j), blk.tau_col()) = 1.0;
    blk.G(blk.sample_row(j), blk.s_col(j)) = -1.0;
    blk.rhs(blk.sample_row(j)) = c.b - c.h.dot(errors_at_t.row(j));
  }

  // Nonnegativity: -s_j <= 0.
  for (int j = 0; j < Ns; ++j) {
    blk.G(blk.nonneg_row(j), blk.s_col(j)) = -1.0;
  }
  return blk;
}

double evaluate_empirical_cvar(const Eigen::VectorXd& losses, double alpha) {
  const int N = static_cast<int>(losses.size());
  if (N < 1) throw ValueError("empty loss vector");
  if (!(alpha > 0 && alpha <= 1)) throw ValueError("alpha must be in (0,1]");

  std::vector<double> sorted(losses.data(), losses.data() + N);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());

  const double mass = alpha * N;  // probability mass to average, in atoms
  const int full = static_cast<int>(std::floor(mass));
  if (full >= N) {
    return losses.mean();
  }
  double acc = 0.0;
  for (int i = 0; i < full; ++i) acc += sorted[i];
  acc += (mass - full) * sorted[full];
  return acc / mass;
}

double evaluate_dr_cvar_margin(const HalfspaceChanceConstraint& c,
                               const AmbiguityConfig& amb,
                               const Eigen::MatrixXd& errors_at_t,
                               const Eigen::VectorXd& z) {
  if (z.size() != c.h.size()) throw DimensionError("z length must match h");
  if (errors_at_t.cols() != c.h.size()) {
    throw DimensionError("error sample width must match h");
  }
  const Eigen::VectorXd losses =
      (errors_at_t * c.h).array() + (c.h.dot(z) - c.b);
  return evaluate_empirical_cvar(losses, c.alpha) +
         amb.epsilon * dual_norm(c.h, amb.q_norm) / c.alpha;
}

double worst_case_expectation_affine(const Eigen::VectorXd& a, double b0,
                                     const Eigen::MatrixXd& samples,
                                     double epsilon, QNorm q) {
  if (samples.rows() < 1) throw ValueError("need at least one sample");
  if (samples.cols() != a.size()) {
    throw DimensionError("sample width must match a");
  }
  if (!(epsilon >= 0)) throw ValueError("epsilon must be >= 0");
  const double mean = (samples * a).mean() + b0;
  return mean + epsilon * dual_norm(a, q);
}

}  // namespace drmpc
