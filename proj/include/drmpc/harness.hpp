#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "drmpc/disturbance.hpp"
#include "drmpc/four_room.hpp"
#include "drmpc/mpc.hpp"
#include "drmpc/tube.hpp"

namespace drmpc {

/// Where the plant's realized disturbance comes from: a fresh draw from
/// the dataset's generating kernel, or a held-out dataset trajectory
/// (Monte-Carlo run i uses trajectory_index + i).
struct TrueNoiseMode {
  enum class Kind { Resample, HeldOutIndex };
  Kind kind = Kind::Resample;
  int trajectory_index = 0;

  static TrueNoiseMode resample() { return {Kind::Resample, 0}; }
  static TrueNoiseMode held_out(int index) {
    return {Kind::HeldOutIndex, index};
  }
};

struct SimOptions {
  int n_t = 48;       // closed-loop task horizon N_T
  int n_samples = 10; // scenarios per MPC step
  ScenarioSelector selector = ScenarioSelector::first();
  TrueNoiseMode true_noise;
  std::uint64_t run_seed = 0;
  int candidate_check_steps = 0;  // sampled steps tested per run
  std::string config_hash;
};

/// Everything recorded over one closed-loop run. The decomposition
/// x = z + e holds exactly at every step because e is stored as the
/// difference. Rows at or beyond steps_completed are zero when a run
/// aborts on infeasibility.
struct ClosedLoopTrace {
  std::uint64_t run_seed = 0;
  std::string config_hash;
  int n_t = 0;
  int steps_completed = 0;
  Eigen::MatrixXd x;  // (n_t+1) x n
  Eigen::MatrixXd u;  // n_t x m
  Eigen::MatrixXd z;  // (n_t+1) x n
  Eigen::MatrixXd e;  // (n_t+1) x n
  Eigen::VectorXd theta_max;  // per-step max slack (eta)
  std::vector<QpStatus> status;
  Eigen::VectorXd solve_ms;
  int infeasible_steps = 0;
  int input_violations = 0;
  double max_input_norm = 0.0;
  int candidate_checks = 0;
  double max_candidate_violation = -std::numeric_limits<double>::infinity();
  bool aborted = false;
};

/// Simulate the indirect-feedback loop for n_t steps: per step, extract
/// scenario windows at k, propagate tube errors from e(k), assemble and
/// solve the MPC, and apply u(k) = v*(0|k) + pi(e(k)) to the plant under
/// the realized disturbance. Aborts (and counts) on PrimalInfeasible;
/// other solver failures raise ConvergenceError with the step index.
ClosedLoopTrace run_closed_loop(const FourRoomModel& model,
                                const TubeController& ctrl,
                                const MpcConfig& cfg,
                                const DisturbanceDataset& dataset,
                                const SimOptions& opts);

/// Across-runs satisfaction rate of h'x(k) <= b for each k in [0, n_t).
/// Steps lost to an aborted run count as violations.
Eigen::VectorXd per_step_satisfaction(const std::vector<ClosedLoopTrace>& traces,
                                      const HalfspaceChanceConstraint& c);

/// Worst-case in-time satisfaction: min over k of the per-step rate.
double empirical_satisfaction(const std::vector<ClosedLoopTrace>& traces,
                              const HalfspaceChanceConstraint& c);

struct McSummary {
  std::string config_hash;
  int runs = 0;
  std::vector<double> satisfaction;  // per constraint, worst case in time
  std::vector<Eigen::VectorXd> per_step_rates;  // per constraint
  double satisfaction_all = 1.0;  // all constraints jointly, worst in time
  Eigen::VectorXd per_step_rates_all;
  double solve_ms_mean = 0.0;
  double solve_ms_p95 = 0.0;
  long total_solves = 0;
  int input_violations = 0;
  int infeasible_steps = 0;
  double max_input_norm = 0.0;
  double max_theta = 0.0;
  int candidate_checks = 0;
  double max_candidate_violation = -std::numeric_limits<double>::infinity();
};

/// Deterministic aggregation of traces in run-index order.
McSummary summarize(const std::vector<ClosedLoopTrace>& traces,
                    const std::vector<HalfspaceChanceConstraint>& constraints,
                    const std::string& config_hash);

struct McOptions {
  int runs = 1;
  std::uint64_t master_seed = 0;
  int parallelism = 1;  // <= 0 means all hardware threads
  SimOptions sim;
};

struct McResult {
  McSummary summary;
  std::vector<ClosedLoopTrace> traces;
};

/// Monte-Carlo batch of independent closed-loop runs with per-run seeds
/// derived from master_seed. Results are identical for any parallelism
/// degree; run failures rethrow with the run index attached.
McResult monte_carlo(const FourRoomModel& model, const TubeController& ctrl,
                     const MpcConfig& cfg, const DisturbanceDataset& dataset,
                     const McOptions& opts);

struct SweepCell {
  double epsilon = 0.0;
  int n_samples = 0;
  McSummary summary;
};

struct SweepResult {
  std::vector<SweepCell> cells;  // row-major: epsilons outer, sizes inner
  std::vector<double> epsilons;
  std::vector<int> sample_sizes;
};

/// Grid of Monte-Carlo batches over (epsilon, N_s). Every cell reuses the
/// same master seed, so paired runs see identical realized noise.
SweepResult sweep(const FourRoomModel& model, const TubeController& ctrl,
                  const MpcConfig& base_cfg,
                  const DisturbanceDataset& dataset,
                  const std::vector<double>& epsilons,
                  const std::vector<int>& sample_sizes,
                  const McOptions& opts);

}  // namespace drmpc
