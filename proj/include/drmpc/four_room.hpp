#pragma once

#include <Eigen/Dense>

#include "drmpc/box.hpp"
#include "drmpc/disturbance.hpp"
#include "drmpc/tube.hpp"

namespace drmpc {

/// Thermal RC parameters for the four-room example plant: rooms coupled
/// in a 1-2-3-4 ring through r_adjacent, each room coupled to ambient
/// through r_ambient and driven by a direct heat input. Resistances are
/// K/kW, capacitances kWh/K, the step is in hours. An infinite r_ambient
/// gives the adiabatic (closed) building.
struct FourRoomParams {
  double r_adjacent = 5.0;
  double r_ambient = 3.0;
  Eigen::Vector4d capacitance = Eigen::Vector4d::Ones();
  double dt_hours = 1.0;

  // Ambient temperature amplitude*sin((k + phase)/rate) + offset.
  double ambient_amplitude = 5.0;
  double ambient_phase = 6.0;
  double ambient_rate = 4.0;
  double ambient_offset = 19.0;
  int profile_horizon = 61;

  double input_limit = 4.5;
  Eigen::Vector4d setpoint = Eigen::Vector4d::Constant(21.0);
  Eigen::Vector4d initial_state{20.75, 20.50, 20.65, 20.60};
};

/// Exactly discretized four-room plant bundle.
struct FourRoomModel {
  LtiSystem sys;
  Eigen::MatrixXd B_w;  // 4 x 1 ambient injection
  KnownDisturbanceProfile profile;
  Box u_box;
  Eigen::VectorXd x_s;
  Eigen::VectorXd x0;
};

/// Build the plant from RC parameters via zero-order-hold discretization
/// of the continuous network. Throws ValueError on nonpositive r, C, or
/// dt values.
FourRoomModel four_room_model(const FourRoomParams& params = {});

}  // namespace drmpc
