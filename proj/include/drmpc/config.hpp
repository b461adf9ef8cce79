#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "drmpc/dr_cvar.hpp"
#include "drmpc/four_room.hpp"
#include "drmpc/harness.hpp"
#include "drmpc/mpc.hpp"
#include "drmpc/tube.hpp"

namespace drmpc {

struct DisturbanceConfig {
  GpKernelParams kernel{0.1, 2.0, 60.0};
  int dims = 4;
  int trajectories = 1000;
  int horizon = 60;
  std::uint64_t seed = 12345;
};

struct ControllerConfig {
  Eigen::MatrixXd lqr_Q;
  Eigen::MatrixXd lqr_R;
  double saturation_limit = 1.0;
};

struct MpcSection {
  int horizon = 12;
  double penalty_c = 1e3;
  CostConfig::StateKind state_kind = CostConfig::StateKind::Quadratic;
  Eigen::MatrixXd state_Q;          // quadratic
  Eigen::VectorXd state_weights;    // weighted_l1
  CostConfig::InputKind input_kind = CostConfig::InputKind::L1;
  double input_scale = 1.0;         // l1
  Eigen::MatrixXd input_R;          // quadratic
  CostConfig::TerminalKind terminal_cost_kind = CostConfig::TerminalKind::Zero;
  Eigen::MatrixXd terminal_Pf;
  TerminalSet::Kind terminal_set_kind = TerminalSet::Kind::Singleton;
  Eigen::VectorXd terminal_x_f;  // empty means the model setpoint
  double solver_tol = 1e-8;
};

struct SimConfig {
  int n_t = 48;
  int runs = 100;
  std::uint64_t seed = 7;
  int parallelism = 0;  // 0 = all hardware threads
  int n_samples = 10;
  std::string true_noise = "resample";  // or "held_out"
  int held_out_base = 0;
  std::string scenario_selector = "first";  // or "random"
  int candidate_check_steps = 0;
  int trace_stride = 1;
  std::vector<double> sweep_epsilons{0.0, 1e-5, 1e-4, 1e-3};
  std::vector<int> sweep_sample_sizes{10, 20, 50};
};

/// One validated configuration: the single source of truth for a
/// reproduction run. Field-by-field documentation with defaults lives in
/// docs/config.md.
struct RunConfig {
  FourRoomParams model;
  DisturbanceConfig disturbance;
  AmbiguityConfig ambiguity{1e-4, QNorm::One, 0.05};
  std::vector<HalfspaceChanceConstraint> constraints;
  ControllerConfig controller;
  MpcSection mpc;
  SimConfig sim;
};

/// The documented defaults (temperature band entered as 8 halfspaces).
RunConfig default_config();

/// Parse and validate; missing keys take defaults, unknown keys raise
/// ConfigError with the offending path.
RunConfig parse_config(const nlohmann::json& j);

/// Read a JSON file and parse it.
RunConfig load_config(const std::string& path);

/// Canonical serialization; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& cfg);

/// FNV-1a 64 hash (hex) of the canonical serialization, excluding
/// sim.parallelism so the thread count never changes output identity.
std::string config_hash(const RunConfig& cfg);

/// Plant, tube controller, and assembled MPC configuration.
FourRoomModel build_model(const RunConfig& cfg);
TubeController build_controller(const RunConfig& cfg,
                                const FourRoomModel& model);
MpcConfig build_mpc_config(const RunConfig& cfg, const FourRoomModel& model,
                           const TubeController& ctrl);
McOptions build_mc_options(const RunConfig& cfg);

}  // namespace drmpc
