#include "drmpc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>
#include <utility>

#include "drmpc/errors.hpp"
#include "drmpc/rng.hpp"

namespace drmpc {

namespace {

// Sub-stream tags hung off the run seed.
constexpr std::uint64_t kNoiseStream = 0;
constexpr std::uint64_t kCheckStream = 1;
constexpr std::uint64_t kSelectStream = 2;

// Distinct ascending step indices for the candidate checks.
std::vector<int> sampled_steps(int n_t, int count, std::uint64_t seed) {
  std::vector<int> steps(n_t);
  std::iota(steps.begin(), steps.end(), 0);
  if (count >= n_t) return steps;
  std::mt19937_64 gen(seed);
  for (int i = 0; i < count; ++i) {
    const auto span = static_cast<std::uint64_t>(n_t - i);
    const int pick = i + static_cast<int>(gen() % span);
    std::swap(steps[i], steps[pick]);
  }
  steps.resize(count);
  std::sort(steps.begin(), steps.end());
  return steps;
}

Eigen::MatrixXd true_noise_matrix(const DisturbanceDataset& dataset,
                                  const SimOptions& opts, int n) {
  switch (opts.true_noise.kind) {
    case TrueNoiseMode::Kind::Resample: {
      if (!dataset.kernel) {
        throw ValueError("resample mode needs a dataset with a kernel");
      }
      const DisturbanceDataset fresh =
          sample_trajectories(*dataset.kernel, opts.n_t, n, 1,
                              derive_run_seed(opts.run_seed, kNoiseStream));
      return fresh.data.front();
    }
    case TrueNoiseMode::Kind::HeldOutIndex: {
      const int idx = opts.true_noise.trajectory_index;
      if (idx < 0 || idx >= dataset.n_traj) {
        throw WindowError("held-out trajectory index out of range");
      }
      if (dataset.horizon < opts.n_t) {
        throw WindowError("dataset horizon shorter than the task horizon");
      }
      return dataset.data[idx].topRows(opts.n_t);
    }
  }
  throw ValueError("unknown true-noise mode");
}

}  // namespace

ClosedLoopTrace run_closed_loop(const FourRoomModel& model,
                                const TubeController& ctrl,
                                const MpcConfig& cfg,
                                const DisturbanceDataset& dataset,
                                const SimOptions& opts) {
  const LtiSystem& sys = model.sys;
  const int n = sys.n();
  const int m = sys.m();
  const int N = cfg.N;
  if (opts.n_t < 1) throw ValueError("task horizon must be >= 1");
  if (dataset.n_dims != n) {
    throw DimensionError("dataset dimension disagrees with the plant");
  }
  if (dataset.horizon < opts.n_t + N) {
    throw WindowError("dataset horizon must cover n_t + N steps");
  }
  if (model.profile.declared_horizon() < opts.n_t + N) {
    throw WindowError("known-disturbance profile must cover n_t + N steps");
  }

  ClosedLoopTrace trace;
  trace.run_seed = opts.run_seed;
  trace.config_hash = opts.config_hash;
  trace.n_t = opts.n_t;
  trace.x = Eigen::MatrixXd::Zero(opts.n_t + 1, n);
  trace.u = Eigen::MatrixXd::Zero(opts.n_t, m);
  trace.z = Eigen::MatrixXd::Zero(opts.n_t + 1, n);
  trace.e = Eigen::MatrixXd::Zero(opts.n_t + 1, n);
  trace.theta_max = Eigen::VectorXd::Zero(opts.n_t);
  trace.status.assign(opts.n_t, QpStatus::NumericalFailure);
  trace.solve_ms = Eigen::VectorXd::Zero(opts.n_t);

  const Eigen::MatrixXd w_true = true_noise_matrix(dataset, opts, n);
  std::vector<int> check_steps;
  if (opts.candidate_check_steps > 0) {
    check_steps = sampled_steps(opts.n_t, opts.candidate_check_steps,
                                derive_run_seed(opts.run_seed, kCheckStream));
  }

  trace.x.row(0) = model.x0.transpose();
  trace.z.row(0) = model.x0.transpose();

  SolverOptions solver_opts;
  solver_opts.tol = cfg.solver_tol;

  for (int k = 0; k < opts.n_t; ++k) {
    const Eigen::VectorXd z_k = trace.z.row(k).transpose();
    const Eigen::VectorXd e_k = trace.e.row(k).transpose();
    const Eigen::VectorXd x_k = trace.x.row(k).transpose();

    ScenarioSelector selector = opts.selector;
    if (selector.kind == ScenarioSelector::Kind::SeededRandom) {
      selector.seed = derive_run_seed(
          derive_run_seed(opts.run_seed, kSelectStream), k);
    }
    const ScenarioDisturbances windows =
        extract_scenarios(dataset, k, N, opts.n_samples, selector);
    const ErrorScenarios scen =
        propagate_error_scenarios(sys, ctrl, e_k, windows);

    Eigen::MatrixXd wbar(N, n);
    for (int t = 0; t < N; ++t) {
      wbar.row(t) = known_disturbance_at(model.profile, k + t).transpose();
    }

    const AssembledMpc assembled =
        assemble_mpc_qp(sys, cfg, z_k, e_k, scen, wbar);
    const MpcSolution sol = solve_mpc(assembled, solver_opts);

    trace.status[k] = sol.status;
    trace.solve_ms(k) = sol.solve_time_ms;
    trace.theta_max(k) = assembled.map.has_cvar ? sol.eta : 0.0;

    if (sol.status != QpStatus::Optimal) {
      if (sol.status == QpStatus::PrimalInfeasible) {
        trace.infeasible_steps += 1;
        trace.aborted = true;
        trace.steps_completed = k;
        return trace;
      }
      std::ostringstream msg;
      msg << "MPC solve failed at step " << k << " (status "
          << (sol.status == QpStatus::MaxIter ? "MaxIter" : "NumericalFailure")
          << ")";
      throw ConvergenceError(msg.str());
    }

    const Eigen::VectorXd u = control_input(sol, ctrl, e_k);
    trace.u.row(k) = u.transpose();
    trace.max_input_norm =
        std::max(trace.max_input_norm, u.lpNorm<Eigen::Infinity>());
    if (!model.u_box.contains(u, 1e-9)) trace.input_violations += 1;

    if (std::binary_search(check_steps.begin(), check_steps.end(), k)) {
      const Eigen::VectorXd wbar_next =
          known_disturbance_at(model.profile, k + N);
      const CandidatePlan cand = candidate_shift(sol, sys, cfg, wbar_next);
      Eigen::MatrixXd wbar_shift(N, n);
      wbar_shift.topRows(N - 1) = wbar.bottomRows(N - 1);
      wbar_shift.row(N - 1) = wbar_next.transpose();
      const double viol =
          candidate_violation(cand, sys, cfg, scen, wbar_shift);
      trace.max_candidate_violation =
          std::max(trace.max_candidate_violation, viol);
      trace.candidate_checks += 1;
    }

    const Eigen::VectorXd v0 = sol.v.row(0).transpose();
    const Eigen::VectorXd wbar_k = wbar.row(0).transpose();
    const Eigen::VectorXd z_next = nominal_step(sys, z_k, v0, wbar_k);
    const Eigen::VectorXd x_next =
        sys.A * x_k + sys.B * u + wbar_k + w_true.row(k).transpose();
    trace.z.row(k + 1) = z_next.transpose();
    trace.x.row(k + 1) = x_next.transpose();
    trace.e.row(k + 1) = (x_next - z_next).transpose();
  }
  trace.steps_completed = opts.n_t;
  return trace;
}

Eigen::VectorXd per_step_satisfaction(
    const std::vector<ClosedLoopTrace>& traces,
    const HalfspaceChanceConstraint& c) {
  if (traces.empty()) throw ValueError("at least one trace is required");
  const int n_t = traces.front().n_t;
  for (const auto& t : traces) {
    if (t.n_t != n_t) throw DimensionError("traces must share n_t");
  }
  Eigen::VectorXd rates(n_t);
  for (int k = 0; k < n_t; ++k) {
    int good = 0;
    for (const auto& t : traces) {
      if (k < t.steps_completed && c.h.dot(t.x.row(k).transpose()) <= c.b) {
        ++good;
      }
    }
    rates(k) = static_cast<double>(good) / static_cast<double>(traces.size());
  }
  return rates;
}

double empirical_satisfaction(const std::vector<ClosedLoopTrace>& traces,
                              const HalfspaceChanceConstraint& c) {
  return per_step_satisfaction(traces, c).minCoeff();
}

McSummary summarize(const std::vector<ClosedLoopTrace>& traces,
                    const std::vector<HalfspaceChanceConstraint>& constraints,
                    const std::string& config_hash) {
  McSummary s;
  s.config_hash = config_hash;
  s.runs = static_cast<int>(traces.size());
  for (const auto& c : constraints) {
    Eigen::VectorXd rates = per_step_satisfaction(traces, c);
    s.satisfaction.push_back(rates.minCoeff());
    s.per_step_rates.push_back(std::move(rates));
  }
  if (!traces.empty()) {
    const int n_t = traces.front().n_t;
    s.per_step_rates_all = Eigen::VectorXd::Ones(n_t);
    for (int k = 0; k < n_t; ++k) {
      int good = 0;
      for (const auto& t : traces) {
        if (k >= t.steps_completed) continue;
        bool ok = true;
        for (const auto& c : constraints) {
          if (c.h.dot(t.x.row(k).transpose()) > c.b) {
            ok = false;
            break;
          }
        }
        if (ok) ++good;
      }
      s.per_step_rates_all(k) =
          static_cast<double>(good) / static_cast<double>(traces.size());
    }
    s.satisfaction_all = s.per_step_rates_all.minCoeff();
  }
  std::vector<double> times;
  for (const auto& t : traces) {
    for (int k = 0; k < t.steps_completed; ++k) times.push_back(t.solve_ms(k));
    s.input_violations += t.input_violations;
    s.infeasible_steps += t.infeasible_steps;
    s.max_input_norm = std::max(s.max_input_norm, t.max_input_norm);
    if (t.steps_completed > 0) {
      s.max_theta = std::max(
          s.max_theta, t.theta_max.head(t.steps_completed).maxCoeff());
    }
    s.candidate_checks += t.candidate_checks;
    s.max_candidate_violation =
        std::max(s.max_candidate_violation, t.max_candidate_violation);
  }
  s.total_solves = static_cast<long>(times.size());
  if (!times.empty()) {
    s.solve_ms_mean =
        std::accumulate(times.begin(), times.end(), 0.0) / times.size();
    std::sort(times.begin(), times.end());
    const auto rank = static_cast<std::size_t>(
        std::ceil(0.95 * static_cast<double>(times.size())));
    s.solve_ms_p95 = times[std::max<std::size_t>(rank, 1) - 1];
  }
  return s;
}

McResult monte_carlo(const FourRoomModel& model, const TubeController& ctrl,
                     const MpcConfig& cfg, const DisturbanceDataset& dataset,
                     const McOptions& opts) {
  if (opts.runs < 1) throw ValueError("runs must be >= 1");
  int threads = opts.parallelism;
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
  }
  threads = std::min(threads, opts.runs);

  std::vector<ClosedLoopTrace> traces(opts.runs);
  std::vector<std::exception_ptr> failures(opts.runs);
  std::atomic<int> next{0};

  const auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= opts.runs) return;
      try {
        SimOptions sim = opts.sim;
        sim.run_seed = derive_run_seed(opts.master_seed, i);
        if (sim.true_noise.kind == TrueNoiseMode::Kind::HeldOutIndex) {
          sim.true_noise.trajectory_index += i;
        }
        traces[i] = run_closed_loop(model, ctrl, cfg, dataset, sim);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (int i = 0; i < opts.runs; ++i) {
    if (!failures[i]) continue;
    try {
      std::rethrow_exception(failures[i]);
    } catch (const std::exception& ex) {
      std::ostringstream msg;
      msg << "run " << i << ": " << ex.what();
      throw Error(msg.str());
    }
  }

  McResult result;
  result.summary = summarize(traces, cfg.constraints, opts.sim.config_hash);
  result.traces = std::move(traces);
  return result;
}

SweepResult sweep(const FourRoomModel& model, const TubeController& ctrl,
                  const MpcConfig& base_cfg,
                  const DisturbanceDataset& dataset,
                  const std::vector<double>& epsilons,
                  const std::vector<int>& sample_sizes,
                  const McOptions& opts) {
  if (epsilons.empty() || sample_sizes.empty()) {
    throw ValueError("sweep grids must be nonempty");
  }
  SweepResult result;
  result.epsilons = epsilons;
  result.sample_sizes = sample_sizes;
  for (const double eps : epsilons) {
    for (const int ns : sample_sizes) {
      MpcConfig cfg = base_cfg;
      cfg.ambiguity.epsilon = eps;
      McOptions cell_opts = opts;
      cell_opts.sim.n_samples = ns;
      const McResult mc = monte_carlo(model, ctrl, cfg, dataset, cell_opts);
      result.cells.push_back(SweepCell{eps, ns, mc.summary});
    }
  }
  return result;
}

}  // namespace drmpc
