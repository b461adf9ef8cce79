#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "drmpc/box.hpp"
#include "drmpc/errors.hpp"

namespace drmpc {

/// Parameters of the squared-exponential temporal kernel
///   cov(i, j) = nugget + scale * exp(-(i - j)^2 / length_sq).
struct GpKernelParams {
  double nugget = 0.0;
  double scale = 0.0;
  double length_sq = 1.0;

  GpKernelParams() = default;
  GpKernelParams(double nugget_, double scale_, double length_sq_)
      : nugget(nugget_), scale(scale_), length_sq(length_sq_) {
    if (nugget < 0 || scale < 0) {
      throw ValueError("kernel nugget and scale must be >= 0");
    }
    if (length_sq <= 0) throw ValueError("kernel length_sq must be > 0");
  }
};

/// Bank of disturbance trajectories, one [horizon x n_dims] matrix per
/// trajectory. Each dimension is an independent draw of the same temporal
/// kernel; `kernel` is empty when the data came from an external file.
struct DisturbanceDataset {
  int n_dims = 0;
  int n_traj = 0;
  int horizon = 0;
  std::uint64_t seed = 0;
  std::optional<GpKernelParams> kernel;
  std::vector<Eigen::MatrixXd> data;
};

/// N_s disturbance windows of a fixed length, cut from a dataset at a
/// common start time. values[j] is [length x n_dims].
struct ScenarioDisturbances {
  int n_samples = 0;
  int length = 0;
  int base_time = 0;
  std::vector<Eigen::MatrixXd> values;
};

/// How extract_scenarios picks trajectories from the bank.
struct ScenarioSelector {
  enum class Kind { First, SeededRandom };
  Kind kind = Kind::First;
  std::uint64_t seed = 0;

  static ScenarioSelector first() { return {Kind::First, 0}; }
  static ScenarioSelector seeded_random(std::uint64_t s) {
    return {Kind::SeededRandom, s};
  }
};

/// Deterministic (known-in-advance) disturbance profile with its injection
/// matrix into the state equation. The profile output is validated against
/// `output_box` for every step of `declared_horizon` at construction.
class KnownDisturbanceProfile {
 public:
  enum class Kind { Sinusoidal, Constant, Tabulated };

  /// amplitude * sin((k + phase) / rate) + offset, scalar output.
  static KnownDisturbanceProfile sinusoidal(double amplitude, double phase,
                                            double rate, double offset,
                                            Eigen::MatrixXd injection,
                                            Box output_box,
                                            int declared_horizon);
  static KnownDisturbanceProfile constant(double value,
                                          Eigen::MatrixXd injection,
                                          Box output_box,
                                          int declared_horizon);
  /// One output row per step; rows beyond the table raise WindowError.
  static KnownDisturbanceProfile tabulated(Eigen::MatrixXd values,
                                           Eigen::MatrixXd injection,
                                           Box output_box);

  Kind kind() const { return kind_; }
  int output_dim() const { return static_cast<int>(injection_.cols()); }
  int state_dim() const { return static_cast<int>(injection_.rows()); }
  int declared_horizon() const { return declared_horizon_; }
  const Eigen::MatrixXd& injection() const { return injection_; }
  const Box& output_box() const { return output_box_; }

  /// Raw profile output at step k (before injection).
  Eigen::VectorXd output_at(int k) const;

 private:
  KnownDisturbanceProfile() = default;

  Kind kind_ = Kind::Constant;
  double amplitude_ = 0, phase_ = 0, rate_ = 1, offset_ = 0;
  double value_ = 0;
  Eigen::MatrixXd table_;
  Eigen::MatrixXd injection_;
  Box output_box_;
  int declared_horizon_ = 0;
};

/// Kernel matrix for `length` consecutive integer time stamps.
Eigen::MatrixXd gaussian_kernel_covariance(const GpKernelParams& params,
                                           int length);

/// Lower-Cholesky factor of `cov`; the all-zero matrix maps to the zero
/// factor, anything else that is not numerically PD raises CholeskyError.
Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& cov);

/// Draw `count` trajectories of shape [horizon x n_dims] where horizon is
/// cov's side length. Each dimension of each trajectory is L * xi with xi
/// iid standard normal; the draw order (trajectory-major, dimension-minor)
/// is part of the determinism contract.
DisturbanceDataset sample_trajectories(const Eigen::MatrixXd& cov, int n_dims,
                                       int count, std::uint64_t seed);

/// Like sample_trajectories but records the generating kernel in the
/// dataset metadata.
DisturbanceDataset sample_trajectories(const GpKernelParams& params,
                                       int horizon, int n_dims, int count,
                                       std::uint64_t seed);

/// Injected known disturbance at step k, an n-vector.
Eigen::VectorXd known_disturbance_at(const KnownDisturbanceProfile& profile,
                                     int k);

/// Windows [k, k+length) of n_samples trajectories chosen by `selector`.
ScenarioDisturbances extract_scenarios(const DisturbanceDataset& ds, int k,
                                       int length, int n_samples,
                                       const ScenarioSelector& selector);

/// CSV (header `traj,step,w0,...`) plus a `<name>.meta.json` sidecar.
/// Values are written in shortest round-trip decimal form.
void save_dataset(const DisturbanceDataset& ds, const std::string& path);

/// Inverse of save_dataset. Raises SchemaError when the CSV disagrees with
/// the sidecar, is out of canonical order, or contains non-finite values.
DisturbanceDataset load_dataset(const std::string& path);

}  // namespace drmpc
