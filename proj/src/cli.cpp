#include "drmpc/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "drmpc/config.hpp"
#include "drmpc/disturbance.hpp"
#include "drmpc/errors.hpp"
#include "drmpc/harness.hpp"
#include "drmpc/num_format.hpp"
#include "drmpc/rng.hpp"

namespace drmpc {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitInvariant = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitSolver = 4;

const char* status_name(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "Optimal";
    case QpStatus::PrimalInfeasible: return "PrimalInfeasible";
    case QpStatus::MaxIter: return "MaxIter";
    case QpStatus::NumericalFailure: return "NumericalFailure";
  }
  return "NumericalFailure";
}

struct GlobalArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool dump_qp = false;
};

RunConfig load_effective_config(const GlobalArgs& g) {
  RunConfig cfg =
      g.config_path.empty() ? default_config() : load_config(g.config_path);
  if (g.seed) cfg.sim.seed = *g.seed;
  if (g.threads) cfg.sim.parallelism = *g.threads;
  return cfg;
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out = open_output(path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return j;
}

void write_trace_csv(const fs::path& path, const ClosedLoopTrace& trace) {
  std::ofstream out = open_output(path);
  const int n = static_cast<int>(trace.x.cols());
  const int m = static_cast<int>(trace.u.cols());
  out << "k";
  for (int i = 0; i < n; ++i) out << ",x" << i;
  for (int i = 0; i < m; ++i) out << ",u" << i;
  for (int i = 0; i < n; ++i) out << ",z" << i;
  for (int i = 0; i < n; ++i) out << ",e" << i;
  out << ",theta_max,status,solve_ms\n";
  for (int k = 0; k < trace.steps_completed; ++k) {
    out << k;
    for (int i = 0; i < n; ++i) out << "," << format_double(trace.x(k, i));
    for (int i = 0; i < m; ++i) out << "," << format_double(trace.u(k, i));
    for (int i = 0; i < n; ++i) out << "," << format_double(trace.z(k, i));
    for (int i = 0; i < n; ++i) out << "," << format_double(trace.e(k, i));
    out << "," << format_double(trace.theta_max(k)) << ","
        << status_name(trace.status[k]) << ","
        << format_double(trace.solve_ms(k)) << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

json rates_to_json(const Eigen::VectorXd& rates) {
  json arr = json::array();
  for (int i = 0; i < rates.size(); ++i) arr.push_back(rates(i));
  return arr;
}

json summary_to_json(const McSummary& s) {
  json sat, rates;
  sat["all"] = s.satisfaction_all;
  rates["all"] = rates_to_json(s.per_step_rates_all);
  for (std::size_t i = 0; i < s.satisfaction.size(); ++i) {
    const std::string id = "c" + std::to_string(i);
    sat[id] = s.satisfaction[i];
    rates[id] = rates_to_json(s.per_step_rates[i]);
  }
  json j;
  j["config_hash"] = s.config_hash;
  j["runs"] = s.runs;
  j["satisfaction"] = std::move(sat);
  j["per_step_rates"] = std::move(rates);
  j["solve_ms"] = {{"mean", s.solve_ms_mean}, {"p95", s.solve_ms_p95}};
  j["violations"] = s.input_violations;
  j["infeasible_steps"] = s.infeasible_steps;
  j["max_input_norm"] = s.max_input_norm;
  j["max_theta"] = s.max_theta;
  j["total_solves"] = s.total_solves;
  if (s.candidate_checks > 0) {
    j["candidate_checks"] = s.candidate_checks;
    j["max_candidate_violation"] = s.max_candidate_violation;
  }
  return j;
}

json dense_matrix_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (int r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json dense_vector_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

void dump_first_qp(const RunConfig& cfg, const FourRoomModel& model,
                   const TubeController& ctrl, const MpcConfig& mpc_cfg,
                   const DisturbanceDataset& ds, const fs::path& path) {
  const int N = mpc_cfg.N;
  const Eigen::VectorXd z0 = model.x0;
  const Eigen::VectorXd e0 = Eigen::VectorXd::Zero(model.sys.n());
  ScenarioSelector selector = cfg.sim.scenario_selector == "random"
                                  ? ScenarioSelector::seeded_random(
                                        derive_run_seed(cfg.sim.seed, 0))
                                  : ScenarioSelector::first();
  const ScenarioDisturbances windows =
      extract_scenarios(ds, 0, N, cfg.sim.n_samples, selector);
  const ErrorScenarios scen =
      propagate_error_scenarios(model.sys, ctrl, e0, windows);
  Eigen::MatrixXd wbar(N, model.sys.n());
  for (int t = 0; t < N; ++t) {
    wbar.row(t) = known_disturbance_at(model.profile, t).transpose();
  }
  const AssembledMpc a =
      assemble_mpc_qp(model.sys, mpc_cfg, z0, e0, scen, wbar);

  json j;
  j["d"] = a.qp.d();
  j["p"] = a.qp.p();
  j["g"] = a.qp.g();
  j["P"] = dense_matrix_json(Eigen::MatrixXd(a.qp.P));
  j["q"] = dense_vector_json(a.qp.q);
  j["Aeq"] = dense_matrix_json(Eigen::MatrixXd(a.qp.Aeq));
  j["beq"] = dense_vector_json(a.qp.beq);
  j["G"] = dense_matrix_json(Eigen::MatrixXd(a.qp.G));
  j["h"] = dense_vector_json(a.qp.h);
  j["constant"] = a.qp.constant;
  j["index_map"] = {{"n", a.map.n},         {"m", a.map.m},
                    {"r", a.map.r},         {"N", a.map.N},
                    {"Ns", a.map.Ns},       {"z0", a.map.z0},
                    {"v0", a.map.v0},       {"tau0", a.map.tau0},
                    {"s0", a.map.s0},       {"theta0", a.map.theta0},
                    {"eta0", a.map.eta0},   {"rho0", a.map.rho0},
                    {"sigma0", a.map.sigma0}, {"total", a.map.total}};
  write_json_file(path, j);
}

std::string trace_name(int run) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "trace_%04d.csv", run);
  return buf;
}

int cmd_gen_data(const GlobalArgs& g, const RunConfig& cfg) {
  ensure_out_dir(g.out_dir);
  const DisturbanceDataset ds = sample_trajectories(
      cfg.disturbance.kernel, cfg.disturbance.horizon, cfg.disturbance.dims,
      cfg.disturbance.trajectories, cfg.disturbance.seed);
  const fs::path path = fs::path(g.out_dir) / "dataset.csv";
  save_dataset(ds, path.string());
  std::cout << path.string() << ": " << ds.n_traj << " trajectories x "
            << ds.horizon << " steps x " << ds.n_dims << " dims (seed "
            << ds.seed << ")\n";
  return 0;
}

int cmd_run(const GlobalArgs& g, const RunConfig& cfg,
            const std::string& data_path, std::optional<int> trace_stride) {
  ensure_out_dir(g.out_dir);
  DisturbanceDataset ds;
  try {
    ds = load_dataset(data_path);
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }

  const FourRoomModel model = build_model(cfg);
  const TubeController ctrl = build_controller(cfg, model);
  const MpcConfig mpc_cfg = build_mpc_config(cfg, model, ctrl);
  const McOptions mc = build_mc_options(cfg);

  if (g.dump_qp) {
    try {
      dump_first_qp(cfg, model, ctrl, mpc_cfg, ds,
                    fs::path(g.out_dir) / "qp_dump.json");
    } catch (const Error& e) {
      std::cerr << "data error: " << e.what() << "\n";
      return kExitData;
    }
  }

  McResult result;
  try {
    result = monte_carlo(model, ctrl, mpc_cfg, ds, mc);
  } catch (const Error& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  }

  const int stride = trace_stride.value_or(cfg.sim.trace_stride);
  for (int i = 0; i < static_cast<int>(result.traces.size()); i += stride) {
    write_trace_csv(fs::path(g.out_dir) / trace_name(i), result.traces[i]);
  }
  write_json_file(fs::path(g.out_dir) / "summary.json",
                  summary_to_json(result.summary));

  const McSummary& s = result.summary;
  std::cout << "runs " << s.runs << ", worst-case satisfaction "
            << format_double(s.satisfaction_all) << ", infeasible steps "
            << s.infeasible_steps << ", input violations "
            << s.input_violations << ", solve ms mean "
            << format_double(s.solve_ms_mean) << "\n";
  return (s.infeasible_steps == 0 && s.input_violations == 0)
             ? 0
             : kExitInvariant;
}

int cmd_sweep(const GlobalArgs& g, const RunConfig& cfg,
              const std::string& data_path,
              const std::vector<double>& epsilons,
              const std::vector<int>& sample_sizes) {
  ensure_out_dir(g.out_dir);
  DisturbanceDataset ds;
  try {
    ds = load_dataset(data_path);
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }

  const FourRoomModel model = build_model(cfg);
  const TubeController ctrl = build_controller(cfg, model);
  const MpcConfig mpc_cfg = build_mpc_config(cfg, model, ctrl);
  const McOptions mc = build_mc_options(cfg);

  SweepResult result;
  try {
    result = sweep(model, ctrl, mpc_cfg, ds, epsilons, sample_sizes, mc);
  } catch (const Error& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  }

  // Table-shaped satisfaction grid: one row per epsilon.
  {
    std::ofstream out = open_output(fs::path(g.out_dir) / "sweep.csv");
    out << "epsilon";
    for (const int ns : sample_sizes) out << ",ns_" << ns;
    out << "\n";
    std::size_t cell = 0;
    for (const double eps : epsilons) {
      out << format_double(eps);
      for (std::size_t c = 0; c < sample_sizes.size(); ++c) {
        out << ","
            << format_double(result.cells[cell++].summary.satisfaction_all);
      }
      out << "\n";
    }
    if (!out) throw IoError("write failed: sweep.csv");
  }

  // Mean solve time per sample size, weighted by solve counts.
  {
    std::ofstream out = open_output(fs::path(g.out_dir) / "runtime.csv");
    out << "n_samples,mean_solve_ms\n";
    for (std::size_t c = 0; c < sample_sizes.size(); ++c) {
      double weighted = 0.0;
      long solves = 0;
      for (std::size_t e = 0; e < epsilons.size(); ++e) {
        const McSummary& s =
            result.cells[e * sample_sizes.size() + c].summary;
        weighted += s.solve_ms_mean * static_cast<double>(s.total_solves);
        solves += s.total_solves;
      }
      const double mean = solves > 0 ? weighted / static_cast<double>(solves)
                                     : 0.0;
      out << sample_sizes[c] << "," << format_double(mean) << "\n";
    }
    if (!out) throw IoError("write failed: runtime.csv");
  }

  json cells = json::array();
  int violations = 0, infeasible = 0;
  for (const auto& cell : result.cells) {
    json c = summary_to_json(cell.summary);
    c["epsilon"] = cell.epsilon;
    c["n_samples"] = cell.n_samples;
    cells.push_back(std::move(c));
    violations += cell.summary.input_violations;
    infeasible += cell.summary.infeasible_steps;
  }
  json sweep_json;
  sweep_json["config_hash"] = config_hash(cfg);
  sweep_json["epsilons"] = epsilons;
  sweep_json["sample_sizes"] = sample_sizes;
  sweep_json["cells"] = std::move(cells);
  write_json_file(fs::path(g.out_dir) / "sweep.json", sweep_json);

  for (const auto& cell : result.cells) {
    std::cout << "epsilon " << format_double(cell.epsilon) << " ns "
              << cell.n_samples << ": satisfaction "
              << format_double(cell.summary.satisfaction_all) << ", mean ms "
              << format_double(cell.summary.solve_ms_mean) << "\n";
  }
  return (violations == 0 && infeasible == 0) ? 0 : kExitInvariant;
}

int cmd_report(const GlobalArgs& g, double min_satisfaction) {
  const fs::path out_dir(g.out_dir);
  const fs::path summary_path = out_dir / "summary.json";
  const fs::path sweep_path = out_dir / "sweep.json";
  const bool have_summary = fs::exists(summary_path);
  const bool have_sweep = fs::exists(sweep_path);
  if (!have_summary && !have_sweep) {
    std::cerr << "data error: no summary.json or sweep.json in " << g.out_dir
              << "\n";
    return kExitData;
  }

  std::string hash;
  bool failed = false;

  const auto check_hash = [&](const json& j, const std::string& origin) {
    const std::string h = j.value("config_hash", std::string());
    if (hash.empty()) {
      hash = h;
    } else if (h != hash) {
      throw SchemaError("mixed config hashes between artifacts (" + origin +
                        ")");
    }
  };

  try {
    if (have_summary) {
      const json j = read_json_file(summary_path);
      check_hash(j, "summary.json");
      std::cout << "run summary (config " << hash << ")\n";
      std::cout << "  runs: " << j.value("runs", 0) << "\n";
      const double sat = j["satisfaction"].value("all", 0.0);
      std::cout << "  worst-case satisfaction: " << format_double(sat) << "\n";
      std::cout << "  infeasible steps: " << j.value("infeasible_steps", -1)
                << ", input violations: " << j.value("violations", -1) << "\n";
      std::cout << "  solve ms: mean " << j["solve_ms"].value("mean", 0.0)
                << ", p95 " << j["solve_ms"].value("p95", 0.0) << "\n";
      if (sat < min_satisfaction) {
        std::cout << "  FAIL: satisfaction " << format_double(sat)
                  << " below threshold " << format_double(min_satisfaction)
                  << "\n";
        failed = true;
      }
    }
    if (have_sweep) {
      const json j = read_json_file(sweep_path);
      check_hash(j, "sweep.json");
      std::cout << "sweep (config " << hash << ")\n";
      std::cout << "  satisfaction grid (rows epsilon, columns N_s):\n";
      std::cout << "    epsilon";
      for (const auto& ns : j["sample_sizes"]) {
        std::cout << "\tns_" << ns.get<int>();
      }
      std::cout << "\n";
      const auto& cells = j["cells"];
      const std::size_t n_cols = j["sample_sizes"].size();
      for (std::size_t r = 0; r < j["epsilons"].size(); ++r) {
        std::cout << "    "
                  << format_double(j["epsilons"][r].get<double>());
        for (std::size_t c = 0; c < n_cols; ++c) {
          const json& cell = cells[r * n_cols + c];
          const double sat = cell["satisfaction"].value("all", 0.0);
          std::cout << "\t" << format_double(sat);
          if (sat < min_satisfaction) {
            failed = true;
            std::cout << "(FAIL)";
          }
        }
        std::cout << "\n";
      }
      std::cout << "  mean solve ms per N_s:\n";
      for (std::size_t c = 0; c < n_cols; ++c) {
        double weighted = 0.0;
        long solves = 0;
        for (std::size_t r = 0; r < j["epsilons"].size(); ++r) {
          const json& cell = cells[r * n_cols + c];
          weighted += cell["solve_ms"].value("mean", 0.0) *
                      cell.value("total_solves", 0L);
          solves += cell.value("total_solves", 0L);
        }
        std::cout << "    ns_" << j["sample_sizes"][c].get<int>() << ": "
                  << format_double(solves > 0 ? weighted / solves : 0.0)
                  << "\n";
      }
    }
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const json::exception& e) {
    std::cerr << "data error: malformed artifact: " << e.what() << "\n";
    return kExitData;
  }

  if (failed) {
    std::cout << "threshold check: FAIL (min satisfaction "
              << format_double(min_satisfaction) << ")\n";
    return kExitInvariant;
  }
  std::cout << "threshold check: PASS\n";
  return 0;
}

std::vector<double> parse_double_list(const std::string& csv,
                                      const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(parse_double(tok));
    } catch (const Error&) {
      throw ConfigError("invalid " + what + " entry: " + tok);
    }
  }
  if (out.empty()) throw ConfigError(what + " list is empty");
  return out;
}

std::vector<int> parse_int_list(const std::string& csv,
                                const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(parse_int(tok));
    } catch (const Error&) {
      throw ConfigError("invalid " + what + " entry: " + tok);
    }
  }
  if (out.empty()) throw ConfigError(what + " list is empty");
  return out;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"distributionally robust tube MPC experiments"};
  app.fallthrough(true);
  app.require_subcommand(1);

  GlobalArgs g;
  std::uint64_t seed_value = 0;
  int threads_value = 0;
  app.add_option("--config", g.config_path, "configuration JSON file");
  app.add_option("--out", g.out_dir, "output directory (default: out)");
  auto* seed_opt =
      app.add_option("--seed", seed_value, "override sim.seed");
  auto* threads_opt =
      app.add_option("--threads", threads_value, "override sim.parallelism");
  app.add_flag("--dump-qp", g.dump_qp,
               "write the first assembled QP to qp_dump.json (run command)");

  CLI::App* gen = app.add_subcommand("gen-data", "sample a disturbance bank");

  std::string data_path;
  int trace_stride_value = 0;
  CLI::App* run = app.add_subcommand("run", "Monte-Carlo closed-loop batch");
  run->add_option("--data", data_path, "dataset CSV (default <out>/dataset.csv)");
  auto* stride_opt = run->add_option("--trace-stride", trace_stride_value,
                                     "write every Nth trace");

  std::string eps_csv, sizes_csv;
  int runs_override = 0;
  CLI::App* sw = app.add_subcommand("sweep", "grid over (epsilon, N_s)");
  sw->add_option("--data", data_path, "dataset CSV (default <out>/dataset.csv)");
  sw->add_option("--epsilons", eps_csv, "comma-separated epsilon list");
  sw->add_option("--sample-sizes", sizes_csv, "comma-separated N_s list");
  auto* runs_opt = sw->add_option("--runs", runs_override, "runs per cell");

  double min_satisfaction = 0.0;
  CLI::App* report = app.add_subcommand("report", "summarize artifacts");
  report->add_option("--min-satisfaction", min_satisfaction,
                     "fail the report below this joint satisfaction");

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.emplace_back("drmpc");
  for (const auto& a : args) argv_storage.push_back(a);
  std::vector<const char*> argv;
  argv.reserve(argv_storage.size());
  for (const auto& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;
  if (threads_opt->count() > 0) g.threads = threads_value;

  RunConfig cfg;
  try {
    cfg = load_effective_config(g);
    if (runs_opt->count() > 0) {
      if (runs_override < 1) throw ConfigError("--runs must be >= 1");
      cfg.sim.runs = runs_override;
    }
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  if (data_path.empty()) {
    data_path = (fs::path(g.out_dir) / "dataset.csv").string();
  }

  try {
    if (gen->parsed()) {
      try {
        return cmd_gen_data(g, cfg);
      } catch (const Error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
      }
    }
    if (run->parsed()) {
      std::optional<int> stride;
      if (stride_opt->count() > 0) {
        if (trace_stride_value < 1) {
          std::cerr << "config error: --trace-stride must be >= 1\n";
          return kExitConfig;
        }
        stride = trace_stride_value;
      }
      return cmd_run(g, cfg, data_path, stride);
    }
    if (sw->parsed()) {
      std::vector<double> epsilons = cfg.sim.sweep_epsilons;
      std::vector<int> sizes = cfg.sim.sweep_sample_sizes;
      try {
        if (!eps_csv.empty()) epsilons = parse_double_list(eps_csv, "epsilon");
        if (!sizes_csv.empty()) sizes = parse_int_list(sizes_csv, "sample size");
      } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
      }
      return cmd_sweep(g, cfg, data_path, epsilons, sizes);
    }
    if (report->parsed()) return cmd_report(g, min_satisfaction);
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitConfig;
}

}  // namespace drmpc
