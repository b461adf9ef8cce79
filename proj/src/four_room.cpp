#include "drmpc/four_room.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "drmpc/errors.hpp"

namespace drmpc {

FourRoomModel four_room_model(const FourRoomParams& params) {
  if (!(params.r_adjacent > 0.0)) {
    throw ValueError("adjacent resistance must be positive");
  }
  if (!(params.r_ambient > 0.0)) {
    throw ValueError("ambient resistance must be positive");
  }
  if (!(params.capacitance.array() > 0.0).all()) {
    throw ValueError("capacitances must be positive");
  }
  if (!(params.dt_hours > 0.0)) throw ValueError("dt must be positive");
  if (!(params.input_limit > 0.0)) {
    throw ValueError("input limit must be positive");
  }

  const int n = 4;
  const double g_adj = 1.0 / params.r_adjacent;
  const double g_amb = 1.0 / params.r_ambient;  // zero when r_ambient = inf

  Eigen::MatrixXd A_c = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd B_c = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd Bw_c = Eigen::MatrixXd::Zero(n, 1);
  for (int i = 0; i < n; ++i) {
    const int prev = (i + n - 1) % n;
    const int next = (i + 1) % n;
    const double c = params.capacitance(i);
    A_c(i, prev) += g_adj / c;
    A_c(i, next) += g_adj / c;
    A_c(i, i) -= (2.0 * g_adj + g_amb) / c;
    B_c(i, i) = 1.0 / c;
    Bw_c(i, 0) = g_amb / c;
  }

  // Exact zero-order-hold discretization of the joint (A, [B B_w]) pair.
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * n + 1, 2 * n + 1);
  M.topLeftCorner(n, n) = A_c * params.dt_hours;
  M.block(0, n, n, n) = B_c * params.dt_hours;
  M.block(0, 2 * n, n, 1) = Bw_c * params.dt_hours;
  const Eigen::MatrixXd E = M.exp();

  const Eigen::MatrixXd A_d = E.topLeftCorner(n, n);
  const Eigen::MatrixXd B_d = E.block(0, n, n, n);
  const Eigen::MatrixXd Bw_d = E.block(0, 2 * n, n, 1);

  Box ambient_box(
      Eigen::VectorXd::Constant(
          1, params.ambient_offset - std::abs(params.ambient_amplitude)),
      Eigen::VectorXd::Constant(
          1, params.ambient_offset + std::abs(params.ambient_amplitude)));

  return FourRoomModel{
      LtiSystem(A_d, B_d),
      Bw_d,
      KnownDisturbanceProfile::sinusoidal(
          params.ambient_amplitude, params.ambient_phase, params.ambient_rate,
          params.ambient_offset, Bw_d, ambient_box, params.profile_horizon),
      Box::symmetric(n, params.input_limit),
      params.setpoint,
      params.initial_state};
}

}  // namespace drmpc
