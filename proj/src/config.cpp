#include "drmpc/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include "drmpc/errors.hpp"

namespace drmpc {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad(path, "expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) bad(path + "." + item.key(), "unknown key");
  }
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) bad(path, "expected a number");
  return j.get<double>();
}

int get_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) bad(path, "expected an integer");
  return j.get<int>();
}

std::uint64_t get_seed(const json& j, const std::string& path) {
  if (!(j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0))) {
    bad(path, "expected a nonnegative integer seed");
  }
  return j.get<std::uint64_t>();
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) bad(path, "expected a string");
  return j.get<std::string>();
}

// Vectors accept a scalar broadcast or an explicit array of numbers.
Eigen::VectorXd get_vector(const json& j, const std::string& path, int size) {
  if (j.is_number()) {
    return Eigen::VectorXd::Constant(size, j.get<double>());
  }
  if (!j.is_array()) bad(path, "expected a number or an array");
  if (size >= 0 && static_cast<int>(j.size()) != size) {
    bad(path, "expected " + std::to_string(size) + " entries");
  }
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<int>(i)) =
        get_number(j[i], path + "[" + std::to_string(i) + "]");
  }
  return v;
}

// Matrices accept a scalar (scale * identity, square only) or nested rows.
Eigen::MatrixXd get_matrix(const json& j, const std::string& path, int rows,
                           int cols) {
  if (j.is_number()) {
    if (rows != cols) bad(path, "scalar shorthand needs a square matrix");
    return j.get<double>() *
           Eigen::MatrixXd::Identity(rows, cols);
  }
  if (!j.is_array()) bad(path, "expected a number or nested arrays");
  if (static_cast<int>(j.size()) != rows) {
    bad(path, "expected " + std::to_string(rows) + " rows");
  }
  Eigen::MatrixXd M(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    const std::string rpath = path + "[" + std::to_string(r) + "]";
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      bad(rpath, "expected " + std::to_string(cols) + " entries");
    }
    for (int c = 0; c < cols; ++c) {
      M(r, c) = get_number(row[static_cast<std::size_t>(c)],
                           rpath + "[" + std::to_string(c) + "]");
    }
  }
  return M;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json matrix_to_json(const Eigen::MatrixXd& M) {
  json out = json::array();
  for (int r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

QNorm parse_q_norm(const std::string& s, const std::string& path) {
  if (s == "one") return QNorm::One;
  if (s == "two") return QNorm::Two;
  if (s == "inf") return QNorm::Inf;
  bad(path, "expected one of \"one\", \"two\", \"inf\"");
}

std::string q_norm_name(QNorm q) {
  switch (q) {
    case QNorm::One: return "one";
    case QNorm::Two: return "two";
    case QNorm::Inf: return "inf";
  }
  return "one";
}

void parse_model(const json& j, FourRoomParams& p) {
  check_keys(j, "model",
             {"r_adjacent", "r_ambient", "capacitance", "dt_hours", "ambient",
              "input_limit", "setpoint", "initial_state"});
  if (j.contains("r_adjacent")) {
    p.r_adjacent = get_number(j["r_adjacent"], "model.r_adjacent");
  }
  if (j.contains("r_ambient")) {
    p.r_ambient = get_number(j["r_ambient"], "model.r_ambient");
  }
  if (j.contains("capacitance")) {
    p.capacitance = get_vector(j["capacitance"], "model.capacitance", 4);
  }
  if (j.contains("dt_hours")) {
    p.dt_hours = get_number(j["dt_hours"], "model.dt_hours");
  }
  if (j.contains("ambient")) {
    const json& a = j["ambient"];
    check_keys(a, "model.ambient", {"amplitude", "phase", "rate", "offset"});
    if (a.contains("amplitude")) {
      p.ambient_amplitude = get_number(a["amplitude"], "model.ambient.amplitude");
    }
    if (a.contains("phase")) {
      p.ambient_phase = get_number(a["phase"], "model.ambient.phase");
    }
    if (a.contains("rate")) {
      p.ambient_rate = get_number(a["rate"], "model.ambient.rate");
    }
    if (a.contains("offset")) {
      p.ambient_offset = get_number(a["offset"], "model.ambient.offset");
    }
  }
  if (j.contains("input_limit")) {
    p.input_limit = get_number(j["input_limit"], "model.input_limit");
  }
  if (j.contains("setpoint")) {
    p.setpoint = get_vector(j["setpoint"], "model.setpoint", 4);
  }
  if (j.contains("initial_state")) {
    p.initial_state = get_vector(j["initial_state"], "model.initial_state", 4);
  }
}

void parse_disturbance(const json& j, DisturbanceConfig& d) {
  check_keys(j, "disturbance",
             {"kernel", "dims", "trajectories", "horizon", "seed"});
  if (j.contains("kernel")) {
    const json& k = j["kernel"];
    check_keys(k, "disturbance.kernel", {"nugget", "scale", "length_sq"});
    double nugget = d.kernel.nugget, scale = d.kernel.scale,
           length_sq = d.kernel.length_sq;
    if (k.contains("nugget")) {
      nugget = get_number(k["nugget"], "disturbance.kernel.nugget");
    }
    if (k.contains("scale")) {
      scale = get_number(k["scale"], "disturbance.kernel.scale");
    }
    if (k.contains("length_sq")) {
      length_sq = get_number(k["length_sq"], "disturbance.kernel.length_sq");
    }
    try {
      d.kernel = GpKernelParams(nugget, scale, length_sq);
    } catch (const Error& e) {
      bad("disturbance.kernel", e.what());
    }
  }
  if (j.contains("dims")) {
    d.dims = get_integer(j["dims"], "disturbance.dims");
    if (d.dims < 1) bad("disturbance.dims", "must be >= 1");
  }
  if (j.contains("trajectories")) {
    d.trajectories = get_integer(j["trajectories"], "disturbance.trajectories");
    if (d.trajectories < 1) bad("disturbance.trajectories", "must be >= 1");
  }
  if (j.contains("horizon")) {
    d.horizon = get_integer(j["horizon"], "disturbance.horizon");
    if (d.horizon < 1) bad("disturbance.horizon", "must be >= 1");
  }
  if (j.contains("seed")) d.seed = get_seed(j["seed"], "disturbance.seed");
}

void parse_ambiguity(const json& j, AmbiguityConfig& a) {
  check_keys(j, "ambiguity", {"epsilon", "beta", "q_norm"});
  double epsilon = a.epsilon, beta = a.beta;
  QNorm q = a.q_norm;
  if (j.contains("epsilon")) {
    epsilon = get_number(j["epsilon"], "ambiguity.epsilon");
  }
  if (j.contains("beta")) beta = get_number(j["beta"], "ambiguity.beta");
  if (j.contains("q_norm")) {
    q = parse_q_norm(get_string(j["q_norm"], "ambiguity.q_norm"),
                     "ambiguity.q_norm");
  }
  try {
    a = AmbiguityConfig(epsilon, q, beta);
  } catch (const Error& e) {
    bad("ambiguity", e.what());
  }
}

void parse_constraints(const json& j,
                       std::vector<HalfspaceChanceConstraint>& out) {
  if (!j.is_array()) bad("constraints", "expected an array");
  out.clear();
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "constraints[" + std::to_string(i) + "]";
    const json& c = j[i];
    check_keys(c, path, {"h", "b", "alpha", "p_level"});
    if (!c.contains("h") || !c.contains("b")) {
      bad(path, "needs \"h\" and \"b\"");
    }
    const Eigen::VectorXd h = get_vector(c["h"], path + ".h", -1);
    const double b = get_number(c["b"], path + ".b");
    const bool has_alpha = c.contains("alpha");
    const bool has_p = c.contains("p_level");
    if (has_alpha && has_p) bad(path, "give either alpha or p_level, not both");
    try {
      if (has_p) {
        out.push_back(HalfspaceChanceConstraint::from_p_level(
            h, b, get_number(c["p_level"], path + ".p_level")));
      } else {
        const double alpha =
            has_alpha ? get_number(c["alpha"], path + ".alpha") : 0.3;
        out.push_back(HalfspaceChanceConstraint::from_alpha(h, b, alpha));
      }
    } catch (const Error& e) {
      bad(path, e.what());
    }
  }
}

void parse_controller(const json& j, ControllerConfig& c) {
  check_keys(j, "controller", {"lqr_Q", "lqr_R", "saturation_limit"});
  if (j.contains("lqr_Q")) {
    c.lqr_Q = get_matrix(j["lqr_Q"], "controller.lqr_Q", 4, 4);
  }
  if (j.contains("lqr_R")) {
    c.lqr_R = get_matrix(j["lqr_R"], "controller.lqr_R", 4, 4);
  }
  if (j.contains("saturation_limit")) {
    c.saturation_limit =
        get_number(j["saturation_limit"], "controller.saturation_limit");
    if (!(c.saturation_limit > 0)) {
      bad("controller.saturation_limit", "must be positive");
    }
  }
}

void parse_mpc(const json& j, MpcSection& m) {
  check_keys(j, "mpc",
             {"horizon", "penalty_c", "state_cost", "input_cost",
              "terminal_cost", "terminal_set", "solver_tol"});
  if (j.contains("horizon")) {
    m.horizon = get_integer(j["horizon"], "mpc.horizon");
    if (m.horizon < 1) bad("mpc.horizon", "must be >= 1");
  }
  if (j.contains("penalty_c")) {
    m.penalty_c = get_number(j["penalty_c"], "mpc.penalty_c");
    if (!(m.penalty_c > 0)) bad("mpc.penalty_c", "must be positive");
  }
  if (j.contains("state_cost")) {
    const json& s = j["state_cost"];
    check_keys(s, "mpc.state_cost", {"kind", "Q", "weights"});
    const std::string kind =
        s.contains("kind") ? get_string(s["kind"], "mpc.state_cost.kind")
                           : "quadratic";
    if (kind == "quadratic") {
      m.state_kind = CostConfig::StateKind::Quadratic;
      if (s.contains("weights")) {
        bad("mpc.state_cost.weights", "only valid for kind weighted_l1");
      }
      if (s.contains("Q")) m.state_Q = get_matrix(s["Q"], "mpc.state_cost.Q", 4, 4);
    } else if (kind == "weighted_l1") {
      m.state_kind = CostConfig::StateKind::WeightedL1;
      if (s.contains("Q")) {
        bad("mpc.state_cost.Q", "only valid for kind quadratic");
      }
      if (s.contains("weights")) {
        m.state_weights = get_vector(s["weights"], "mpc.state_cost.weights", 4);
      } else {
        m.state_weights = Eigen::VectorXd::Constant(4, 0.01);
      }
    } else {
      bad("mpc.state_cost.kind", "expected \"quadratic\" or \"weighted_l1\"");
    }
  }
  if (j.contains("input_cost")) {
    const json& s = j["input_cost"];
    check_keys(s, "mpc.input_cost", {"kind", "scale", "R"});
    const std::string kind =
        s.contains("kind") ? get_string(s["kind"], "mpc.input_cost.kind")
                           : "l1";
    if (kind == "l1") {
      m.input_kind = CostConfig::InputKind::L1;
      if (s.contains("R")) bad("mpc.input_cost.R", "only valid for kind quadratic");
      if (s.contains("scale")) {
        m.input_scale = get_number(s["scale"], "mpc.input_cost.scale");
        if (m.input_scale < 0) bad("mpc.input_cost.scale", "must be >= 0");
      }
    } else if (kind == "quadratic") {
      m.input_kind = CostConfig::InputKind::Quadratic;
      if (s.contains("scale")) {
        bad("mpc.input_cost.scale", "only valid for kind l1");
      }
      if (s.contains("R")) {
        m.input_R = get_matrix(s["R"], "mpc.input_cost.R", 4, 4);
      } else {
        m.input_R = Eigen::MatrixXd::Identity(4, 4);
      }
    } else {
      bad("mpc.input_cost.kind", "expected \"l1\" or \"quadratic\"");
    }
  }
  if (j.contains("terminal_cost")) {
    const json& s = j["terminal_cost"];
    check_keys(s, "mpc.terminal_cost", {"kind", "Pf"});
    const std::string kind =
        s.contains("kind") ? get_string(s["kind"], "mpc.terminal_cost.kind")
                           : "zero";
    if (kind == "zero") {
      m.terminal_cost_kind = CostConfig::TerminalKind::Zero;
      if (s.contains("Pf")) bad("mpc.terminal_cost.Pf", "only valid for kind quadratic");
    } else if (kind == "quadratic") {
      m.terminal_cost_kind = CostConfig::TerminalKind::Quadratic;
      if (s.contains("Pf")) {
        m.terminal_Pf = get_matrix(s["Pf"], "mpc.terminal_cost.Pf", 4, 4);
      } else {
        m.terminal_Pf = Eigen::MatrixXd::Identity(4, 4);
      }
    } else {
      bad("mpc.terminal_cost.kind", "expected \"zero\" or \"quadratic\"");
    }
  }
  if (j.contains("terminal_set")) {
    const json& s = j["terminal_set"];
    check_keys(s, "mpc.terminal_set", {"kind", "x_f"});
    const std::string kind =
        s.contains("kind") ? get_string(s["kind"], "mpc.terminal_set.kind")
                           : "singleton";
    if (kind == "singleton") {
      m.terminal_set_kind = TerminalSet::Kind::Singleton;
      if (s.contains("x_f")) {
        m.terminal_x_f = get_vector(s["x_f"], "mpc.terminal_set.x_f", 4);
      }
    } else if (kind == "none") {
      m.terminal_set_kind = TerminalSet::Kind::None;
      if (s.contains("x_f")) bad("mpc.terminal_set.x_f", "only valid for kind singleton");
    } else {
      bad("mpc.terminal_set.kind", "expected \"singleton\" or \"none\"");
    }
  }
  if (j.contains("solver_tol")) {
    m.solver_tol = get_number(j["solver_tol"], "mpc.solver_tol");
    if (!(m.solver_tol > 0)) bad("mpc.solver_tol", "must be positive");
  }
}

void parse_sim(const json& j, SimConfig& s) {
  check_keys(j, "sim",
             {"n_t", "runs", "seed", "parallelism", "n_samples", "true_noise",
              "held_out_base", "scenario_selector", "candidate_check_steps",
              "trace_stride", "sweep_epsilons", "sweep_sample_sizes"});
  if (j.contains("n_t")) {
    s.n_t = get_integer(j["n_t"], "sim.n_t");
    if (s.n_t < 1) bad("sim.n_t", "must be >= 1");
  }
  if (j.contains("runs")) {
    s.runs = get_integer(j["runs"], "sim.runs");
    if (s.runs < 1) bad("sim.runs", "must be >= 1");
  }
  if (j.contains("seed")) s.seed = get_seed(j["seed"], "sim.seed");
  if (j.contains("parallelism")) {
    s.parallelism = get_integer(j["parallelism"], "sim.parallelism");
    if (s.parallelism < 0) bad("sim.parallelism", "must be >= 0");
  }
  if (j.contains("n_samples")) {
    s.n_samples = get_integer(j["n_samples"], "sim.n_samples");
    if (s.n_samples < 1) bad("sim.n_samples", "must be >= 1");
  }
  if (j.contains("true_noise")) {
    s.true_noise = get_string(j["true_noise"], "sim.true_noise");
    if (s.true_noise != "resample" && s.true_noise != "held_out") {
      bad("sim.true_noise", "expected \"resample\" or \"held_out\"");
    }
  }
  if (j.contains("held_out_base")) {
    s.held_out_base = get_integer(j["held_out_base"], "sim.held_out_base");
    if (s.held_out_base < 0) bad("sim.held_out_base", "must be >= 0");
  }
  if (j.contains("scenario_selector")) {
    s.scenario_selector =
        get_string(j["scenario_selector"], "sim.scenario_selector");
    if (s.scenario_selector != "first" && s.scenario_selector != "random") {
      bad("sim.scenario_selector", "expected \"first\" or \"random\"");
    }
  }
  if (j.contains("candidate_check_steps")) {
    s.candidate_check_steps =
        get_integer(j["candidate_check_steps"], "sim.candidate_check_steps");
    if (s.candidate_check_steps < 0) {
      bad("sim.candidate_check_steps", "must be >= 0");
    }
  }
  if (j.contains("trace_stride")) {
    s.trace_stride = get_integer(j["trace_stride"], "sim.trace_stride");
    if (s.trace_stride < 1) bad("sim.trace_stride", "must be >= 1");
  }
  if (j.contains("sweep_epsilons")) {
    const json& arr = j["sweep_epsilons"];
    if (!arr.is_array() || arr.empty()) {
      bad("sim.sweep_epsilons", "expected a nonempty array");
    }
    s.sweep_epsilons.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const double e = get_number(arr[i], "sim.sweep_epsilons[" +
                                              std::to_string(i) + "]");
      if (e < 0) bad("sim.sweep_epsilons", "entries must be >= 0");
      s.sweep_epsilons.push_back(e);
    }
  }
  if (j.contains("sweep_sample_sizes")) {
    const json& arr = j["sweep_sample_sizes"];
    if (!arr.is_array() || arr.empty()) {
      bad("sim.sweep_sample_sizes", "expected a nonempty array");
    }
    s.sweep_sample_sizes.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const int v = get_integer(arr[i], "sim.sweep_sample_sizes[" +
                                            std::to_string(i) + "]");
      if (v < 1) bad("sim.sweep_sample_sizes", "entries must be >= 1");
      s.sweep_sample_sizes.push_back(v);
    }
  }
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  cfg.controller.lqr_Q = 1e3 * Eigen::MatrixXd::Identity(4, 4);
  cfg.controller.lqr_R = Eigen::MatrixXd::Identity(4, 4);
  cfg.mpc.state_Q = 0.01 * Eigen::MatrixXd::Identity(4, 4);
  for (int i = 0; i < 4; ++i) {
    Eigen::VectorXd up = Eigen::VectorXd::Zero(4);
    up(i) = 1.0;
    cfg.constraints.push_back(
        HalfspaceChanceConstraint::from_alpha(up, 21.6, 0.3));
    cfg.constraints.push_back(
        HalfspaceChanceConstraint::from_alpha(-up, -20.4, 0.3));
  }
  return cfg;
}

RunConfig parse_config(const nlohmann::json& j) {
  check_keys(j, "(top level)",
             {"model", "disturbance", "ambiguity", "constraints", "controller",
              "mpc", "sim"});
  RunConfig cfg = default_config();
  if (j.contains("model")) parse_model(j["model"], cfg.model);
  if (j.contains("disturbance")) parse_disturbance(j["disturbance"], cfg.disturbance);
  if (j.contains("ambiguity")) parse_ambiguity(j["ambiguity"], cfg.ambiguity);
  if (j.contains("constraints")) parse_constraints(j["constraints"], cfg.constraints);
  if (j.contains("controller")) parse_controller(j["controller"], cfg.controller);
  if (j.contains("mpc")) parse_mpc(j["mpc"], cfg.mpc);
  if (j.contains("sim")) parse_sim(j["sim"], cfg.sim);
  for (const auto& c : cfg.constraints) {
    if (c.h.size() != 4) {
      bad("constraints", "normals must have 4 entries for the four-room plant");
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return parse_config(j);
}

nlohmann::json to_json(const RunConfig& cfg) {
  json j;
  j["model"] = {
      {"r_adjacent", cfg.model.r_adjacent},
      {"r_ambient", cfg.model.r_ambient},
      {"capacitance", vector_to_json(cfg.model.capacitance)},
      {"dt_hours", cfg.model.dt_hours},
      {"ambient",
       {{"amplitude", cfg.model.ambient_amplitude},
        {"phase", cfg.model.ambient_phase},
        {"rate", cfg.model.ambient_rate},
        {"offset", cfg.model.ambient_offset}}},
      {"input_limit", cfg.model.input_limit},
      {"setpoint", vector_to_json(cfg.model.setpoint)},
      {"initial_state", vector_to_json(cfg.model.initial_state)}};
  j["disturbance"] = {{"kernel",
                       {{"nugget", cfg.disturbance.kernel.nugget},
                        {"scale", cfg.disturbance.kernel.scale},
                        {"length_sq", cfg.disturbance.kernel.length_sq}}},
                      {"dims", cfg.disturbance.dims},
                      {"trajectories", cfg.disturbance.trajectories},
                      {"horizon", cfg.disturbance.horizon},
                      {"seed", cfg.disturbance.seed}};
  j["ambiguity"] = {{"epsilon", cfg.ambiguity.epsilon},
                    {"beta", cfg.ambiguity.beta},
                    {"q_norm", q_norm_name(cfg.ambiguity.q_norm)}};
  json cons = json::array();
  for (const auto& c : cfg.constraints) {
    cons.push_back(
        {{"h", vector_to_json(c.h)}, {"b", c.b}, {"alpha", c.alpha}});
  }
  j["constraints"] = std::move(cons);
  j["controller"] = {{"lqr_Q", matrix_to_json(cfg.controller.lqr_Q)},
                     {"lqr_R", matrix_to_json(cfg.controller.lqr_R)},
                     {"saturation_limit", cfg.controller.saturation_limit}};
  json mpc;
  mpc["horizon"] = cfg.mpc.horizon;
  mpc["penalty_c"] = cfg.mpc.penalty_c;
  if (cfg.mpc.state_kind == CostConfig::StateKind::Quadratic) {
    mpc["state_cost"] = {{"kind", "quadratic"},
                         {"Q", matrix_to_json(cfg.mpc.state_Q)}};
  } else {
    mpc["state_cost"] = {{"kind", "weighted_l1"},
                         {"weights", vector_to_json(cfg.mpc.state_weights)}};
  }
  if (cfg.mpc.input_kind == CostConfig::InputKind::L1) {
    mpc["input_cost"] = {{"kind", "l1"}, {"scale", cfg.mpc.input_scale}};
  } else {
    mpc["input_cost"] = {{"kind", "quadratic"},
                         {"R", matrix_to_json(cfg.mpc.input_R)}};
  }
  if (cfg.mpc.terminal_cost_kind == CostConfig::TerminalKind::Zero) {
    mpc["terminal_cost"] = {{"kind", "zero"}};
  } else {
    mpc["terminal_cost"] = {{"kind", "quadratic"},
                            {"Pf", matrix_to_json(cfg.mpc.terminal_Pf)}};
  }
  if (cfg.mpc.terminal_set_kind == TerminalSet::Kind::Singleton) {
    if (cfg.mpc.terminal_x_f.size() > 0) {
      mpc["terminal_set"] = {{"kind", "singleton"},
                             {"x_f", vector_to_json(cfg.mpc.terminal_x_f)}};
    } else {
      mpc["terminal_set"] = {{"kind", "singleton"}};
    }
  } else {
    mpc["terminal_set"] = {{"kind", "none"}};
  }
  mpc["solver_tol"] = cfg.mpc.solver_tol;
  j["mpc"] = std::move(mpc);
  j["sim"] = {{"n_t", cfg.sim.n_t},
              {"runs", cfg.sim.runs},
              {"seed", cfg.sim.seed},
              {"parallelism", cfg.sim.parallelism},
              {"n_samples", cfg.sim.n_samples},
              {"true_noise", cfg.sim.true_noise},
              {"held_out_base", cfg.sim.held_out_base},
              {"scenario_selector", cfg.sim.scenario_selector},
              {"candidate_check_steps", cfg.sim.candidate_check_steps},
              {"trace_stride", cfg.sim.trace_stride},
              {"sweep_epsilons", cfg.sim.sweep_epsilons},
              {"sweep_sample_sizes", cfg.sim.sweep_sample_sizes}};
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j["sim"].erase("parallelism");
  const std::string dump = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex;
  for (int shift = 60; shift >= 0; shift -= 4) {
    out << ((h >> shift) & 0xfull);
  }
  return out.str();
}

FourRoomModel build_model(const RunConfig& cfg) {
  FourRoomParams p = cfg.model;
  p.profile_horizon = cfg.sim.n_t + cfg.mpc.horizon + 1;
  return four_room_model(p);
}

TubeController build_controller(const RunConfig& cfg,
                                const FourRoomModel& model) {
  const DareResult dare = solve_dare(model.sys.A, model.sys.B,
                                     cfg.controller.lqr_Q, cfg.controller.lqr_R);
  return TubeController::saturated(dare.K, cfg.controller.saturation_limit);
}

MpcConfig build_mpc_config(const RunConfig& cfg, const FourRoomModel& model,
                           const TubeController& ctrl) {
  MpcConfig m;
  m.N = cfg.mpc.horizon;
  m.penalty_c = cfg.mpc.penalty_c;
  m.cost.state_kind = cfg.mpc.state_kind;
  m.cost.Q = cfg.mpc.state_Q;
  m.cost.q_weights = cfg.mpc.state_weights;
  m.cost.input_kind = cfg.mpc.input_kind;
  m.cost.r_scale = cfg.mpc.input_scale;
  m.cost.R = cfg.mpc.input_R;
  m.cost.terminal_kind = cfg.mpc.terminal_cost_kind;
  m.cost.Pf = cfg.mpc.terminal_Pf;
  m.cost.x_ref = model.x_s;
  m.constraints = cfg.constraints;
  m.ambiguity = cfg.ambiguity;
  if (cfg.mpc.terminal_set_kind == TerminalSet::Kind::Singleton) {
    m.terminal = TerminalSet::singleton(
        cfg.mpc.terminal_x_f.size() > 0 ? cfg.mpc.terminal_x_f : model.x_s);
  } else {
    m.terminal = TerminalSet::none();
  }
  m.input_box_v = tighten_input_box(model.u_box, ctrl);
  m.solver_tol = cfg.mpc.solver_tol;
  return m;
}

McOptions build_mc_options(const RunConfig& cfg) {
  McOptions opts;
  opts.runs = cfg.sim.runs;
  opts.master_seed = cfg.sim.seed;
  opts.parallelism = cfg.sim.parallelism;
  opts.sim.n_t = cfg.sim.n_t;
  opts.sim.n_samples = cfg.sim.n_samples;
  opts.sim.selector = cfg.sim.scenario_selector == "random"
                          ? ScenarioSelector::seeded_random(0)
                          : ScenarioSelector::first();
  opts.sim.true_noise = cfg.sim.true_noise == "held_out"
                            ? TrueNoiseMode::held_out(cfg.sim.held_out_base)
                            : TrueNoiseMode::resample();
  opts.sim.candidate_check_steps = cfg.sim.candidate_check_steps;
  opts.sim.config_hash = config_hash(cfg);
  return opts;
}

}  // namespace drmpc
