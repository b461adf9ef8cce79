#include <doctest.h>

#include <cctype>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "drmpc/cli.hpp"
#include "drmpc/config.hpp"
#include "drmpc/errors.hpp"
#include "support/test_util.hpp"

using namespace drmpc;
using nlohmann::json;

namespace {

/// Small, fast, low-noise variant of the default scenario.
std::string tiny_config_text() {
  return R"({
    "disturbance": {
      "kernel": {"nugget": 1e-6, "scale": 1e-5, "length_sq": 60.0},
      "trajectories": 12,
      "horizon": 16,
      "seed": 5
    },
    "mpc": {"horizon": 3},
    "sim": {"n_t": 4, "runs": 2, "seed": 3, "parallelism": 1, "n_samples": 3}
  })";
}

}  // namespace

TEST_SUITE("config_cli") {

TEST_CASE("defaults match the published scenario") {
  const RunConfig cfg = default_config();

  CHECK(cfg.model.r_adjacent == 5.0);
  CHECK(cfg.model.r_ambient == 3.0);
  CHECK(cfg.model.capacitance == Eigen::Vector4d::Ones());
  CHECK(cfg.model.dt_hours == 1.0);
  CHECK(cfg.model.ambient_amplitude == 5.0);
  CHECK(cfg.model.ambient_offset == 19.0);
  CHECK(cfg.model.input_limit == 4.5);
  CHECK(cfg.model.setpoint == Eigen::Vector4d::Constant(21.0));

  CHECK(cfg.disturbance.kernel.nugget == 0.1);
  CHECK(cfg.disturbance.kernel.scale == 2.0);
  CHECK(cfg.disturbance.kernel.length_sq == 60.0);
  CHECK(cfg.disturbance.dims == 4);
  CHECK(cfg.disturbance.trajectories == 1000);
  CHECK(cfg.disturbance.horizon == 60);

  CHECK(cfg.ambiguity.epsilon == 1e-4);
  CHECK(cfg.ambiguity.q_norm == QNorm::One);

  REQUIRE(cfg.constraints.size() == 8);
  for (int i = 0; i < 4; ++i) {
    const auto& upper = cfg.constraints[2 * i];
    const auto& lower = cfg.constraints[2 * i + 1];
    CHECK(upper.h == Eigen::VectorXd::Unit(4, i));
    CHECK(upper.b == 21.6);
    CHECK(upper.alpha == 0.3);
    CHECK(lower.h == -Eigen::VectorXd::Unit(4, i));
    CHECK(lower.b == -20.4);
    CHECK(lower.alpha == 0.3);
  }

  CHECK(cfg.controller.lqr_Q == 1e3 * Eigen::MatrixXd::Identity(4, 4));
  CHECK(cfg.controller.lqr_R == Eigen::MatrixXd::Identity(4, 4));
  CHECK(cfg.controller.saturation_limit == 1.0);

  CHECK(cfg.mpc.horizon == 12);
  CHECK(cfg.mpc.penalty_c == 1e3);
  CHECK(cfg.mpc.state_kind == CostConfig::StateKind::Quadratic);
  CHECK(cfg.mpc.state_Q == 0.01 * Eigen::MatrixXd::Identity(4, 4));
  CHECK(cfg.mpc.input_kind == CostConfig::InputKind::L1);
  CHECK(cfg.mpc.input_scale == 1.0);
  CHECK(cfg.mpc.terminal_cost_kind == CostConfig::TerminalKind::Zero);
  CHECK(cfg.mpc.terminal_set_kind == TerminalSet::Kind::Singleton);
  CHECK(cfg.mpc.terminal_x_f.size() == 0);

  CHECK(cfg.sim.n_t == 48);
  CHECK(cfg.sim.runs == 100);
  CHECK(cfg.sim.seed == 7);
  CHECK(cfg.sim.parallelism == 0);
  CHECK(cfg.sim.n_samples == 10);
  CHECK(cfg.sim.true_noise == "resample");
  CHECK(cfg.sim.scenario_selector == "first");
  CHECK(cfg.sim.sweep_epsilons == std::vector<double>{0.0, 1e-5, 1e-4, 1e-3});
  CHECK(cfg.sim.sweep_sample_sizes == std::vector<int>{10, 20, 50});
}

TEST_CASE("serialization round-trips exactly") {
  const RunConfig cfg = default_config();
  const json j = to_json(cfg);
  CHECK(to_json(parse_config(j)) == j);

  // A config exercising the non-default branches also survives.
  const json custom = json::parse(R"({
    "model": {"ambient": {"amplitude": 2.0}, "input_limit": 3.0},
    "ambiguity": {"epsilon": 0.02, "q_norm": "two", "beta": 0.1},
    "constraints": [{"h": [1, 0, 0, 0], "b": 22.0, "p_level": 0.9}],
    "mpc": {
      "horizon": 5,
      "state_cost": {"kind": "weighted_l1", "weights": [1, 2, 3, 4]},
      "input_cost": {"kind": "quadratic", "R": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,2]]},
      "terminal_cost": {"kind": "quadratic", "Pf": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]},
      "terminal_set": {"kind": "none"}
    },
    "sim": {"true_noise": "held_out", "held_out_base": 3,
            "scenario_selector": "random"}
  })");
  const RunConfig parsed = parse_config(custom);
  CHECK(parsed.mpc.state_kind == CostConfig::StateKind::WeightedL1);
  CHECK(parsed.mpc.input_kind == CostConfig::InputKind::Quadratic);
  CHECK(parsed.mpc.terminal_set_kind == TerminalSet::Kind::None);
  CHECK(parsed.ambiguity.q_norm == QNorm::Two);
  CHECK(parsed.sim.true_noise == "held_out");
  const json j1 = to_json(parsed);
  CHECK(to_json(parse_config(j1)) == j1);
}

TEST_CASE("unknown keys name the offending path") {
  CHECK_THROWS_AS(parse_config(json::parse(R"({"bogus": 1})")), ConfigError);
  CHECK_THROWS_AS(
      parse_config(json::parse(R"({"mpc": {"horizon": 3, "bogus": 1}})")),
      ConfigError);
  CHECK_THROWS_AS(
      parse_config(json::parse(R"({"model": {"ambient": {"junk": 0}}})")),
      ConfigError);
  try {
    parse_config(json::parse(R"({"sim": {"horizon": 48}})"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("sim") != std::string::npos);
  }
}

TEST_CASE("constraints take alpha or p_level but not both") {
  const auto with_constraints = [](const std::string& entry) {
    return json::parse(R"({"constraints": [)" + entry + "]}");
  };

  const RunConfig neither = parse_config(
      with_constraints(R"({"h": [1, 0, 0, 0], "b": 21.6})"));
  REQUIRE(neither.constraints.size() == 1);
  CHECK(neither.constraints[0].alpha == 0.3);
  CHECK(neither.constraints[0].p_level == doctest::Approx(0.7).epsilon(1e-15));

  const RunConfig from_p = parse_config(
      with_constraints(R"({"h": [1, 0, 0, 0], "b": 21.6, "p_level": 0.9})"));
  CHECK(from_p.constraints[0].alpha == doctest::Approx(0.1).epsilon(1e-12));

  CHECK_THROWS_AS(parse_config(with_constraints(
                      R"({"h": [1,0,0,0], "b": 1, "alpha": 0.3, "p_level": 0.9})")),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(with_constraints(R"({"b": 1})")), ConfigError);
  CHECK_THROWS_AS(parse_config(with_constraints(
                      R"({"h": [1, 0], "b": 1})")),
                  ConfigError);
}

TEST_CASE("invalid values are rejected as configuration errors") {
  CHECK_THROWS_AS(parse_config(json::parse(R"({"mpc": {"horizon": 0}})")),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"sim": {"n_t": 0}})")),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_config(json::parse(R"({"ambiguity": {"epsilon": -1.0}})")),
      ConfigError);
  CHECK_THROWS_AS(
      parse_config(json::parse(R"({"disturbance": {"kernel": {"scale": -1}}})")),
      ConfigError);
  CHECK_THROWS_AS(
      parse_config(json::parse(R"({"ambiguity": {"q_norm": "seven"}})")),
      ConfigError);
  CHECK_THROWS_AS(
      parse_config(json::parse(
          R"({"mpc": {"state_cost": {"kind": "quadratic", "weights": [1,1,1,1]}}})")),
      ConfigError);
  CHECK_THROWS_AS(
      parse_config(json::parse(
          R"({"mpc": {"input_cost": {"kind": "l1", "R": [[1]]}}})")),
      ConfigError);
}

TEST_CASE("config hash ignores parallelism and tracks substance") {
  RunConfig cfg = default_config();
  const std::string base = config_hash(cfg);
  CHECK(base.size() == 16);
  for (const char c : base) CHECK(std::isxdigit(static_cast<unsigned char>(c)));

  cfg.sim.parallelism = 8;
  CHECK(config_hash(cfg) == base);

  cfg.ambiguity.epsilon = 2e-4;
  CHECK(config_hash(cfg) != base);
}

TEST_CASE("builders assemble the documented plant and controller") {
  const RunConfig cfg = default_config();
  const FourRoomModel model = build_model(cfg);
  CHECK(model.profile.declared_horizon() == 61);
  CHECK(model.u_box.upper == Eigen::Vector4d::Constant(4.5));

  const TubeController ctrl = build_controller(cfg, model);
  CHECK(ctrl.kind == TubeController::Kind::Saturated);
  CHECK(ctrl.output_box().upper == Eigen::Vector4d::Ones());
  CHECK(spectral_radius(model.sys.A + model.sys.B * ctrl.K) < 1.0);

  const MpcConfig mpc_cfg = build_mpc_config(cfg, model, ctrl);
  CHECK(mpc_cfg.N == 12);
  CHECK(mpc_cfg.constraints.size() == 8);
  // Saturation range is carved out of the hard input box.
  CHECK(mpc_cfg.input_box_v.upper == Eigen::Vector4d::Constant(3.5));
  CHECK(mpc_cfg.input_box_v.lower == Eigen::Vector4d::Constant(-3.5));
  // Empty terminal_x_f falls back to the model setpoint.
  CHECK(mpc_cfg.terminal.kind == TerminalSet::Kind::Singleton);
  CHECK(mpc_cfg.terminal.x_f == model.x_s);
  CHECK(mpc_cfg.cost.x_ref == model.x_s);

  const McOptions mc = build_mc_options(cfg);
  CHECK(mc.runs == 100);
  CHECK(mc.master_seed == 7);
  CHECK(mc.sim.n_t == 48);
  CHECK(mc.sim.n_samples == 10);
}

TEST_CASE("config files load and fail loudly") {
  test::TempDir dir("cfg");
  CHECK_THROWS_AS(load_config(dir.file("missing.json")), IoError);

  test::write_text(dir.file("broken.json"), "{not json");
  CHECK_THROWS_AS(load_config(dir.file("broken.json")), ConfigError);

  test::write_text(dir.file("ok.json"), tiny_config_text());
  const RunConfig cfg = load_config(dir.file("ok.json"));
  CHECK(cfg.mpc.horizon == 3);
  CHECK(cfg.sim.runs == 2);
  CHECK(cfg.disturbance.kernel.scale == 1e-5);
}

TEST_CASE("command line drives the full pipeline") {
  test::TempDir dir("cli");
  const std::string cfg_path = dir.file("config.json");
  test::write_text(cfg_path, tiny_config_text());
  const std::string out_a = dir.file("a");
  const std::string out_b = dir.file("b");

  REQUIRE(cli_main({"gen-data", "--config", cfg_path, "--out", out_a}) == 0);
  CHECK(std::filesystem::exists(out_a + "/dataset.csv"));
  CHECK(std::filesystem::exists(out_a + "/dataset.meta.json"));

  SUBCASE("generation is byte-deterministic") {
    REQUIRE(cli_main({"gen-data", "--config", cfg_path, "--out", out_b}) == 0);
    CHECK(test::read_text(out_a + "/dataset.csv") ==
          test::read_text(out_b + "/dataset.csv"));
  }

  SUBCASE("run writes artifacts and report gates on them") {
    REQUIRE(cli_main({"run", "--config", cfg_path, "--out", out_a}) == 0);
    CHECK(std::filesystem::exists(out_a + "/summary.json"));
    CHECK(std::filesystem::exists(out_a + "/trace_0000.csv"));

    const json summary =
        json::parse(test::read_text(out_a + "/summary.json"));
    CHECK(summary.contains("config_hash"));
    CHECK(summary.contains("satisfaction"));

    CHECK(cli_main({"report", "--out", out_a}) == 0);
    CHECK(cli_main({"report", "--out", out_a,
                    "--min-satisfaction", "1.01"}) == 1);
  }

  SUBCASE("missing inputs are data errors") {
    CHECK(cli_main({"run", "--config", cfg_path, "--out", dir.file("c")}) == 3);
    CHECK(cli_main({"report", "--out", dir.file("d")}) == 3);
  }

  SUBCASE("configuration mistakes are reported as such") {
    CHECK(cli_main({"run", "--config", dir.file("absent.json"),
                    "--out", out_a}) == 2);
    test::write_text(dir.file("bad.json"), R"({"bogus": 1})");
    CHECK(cli_main({"run", "--config", dir.file("bad.json"),
                    "--out", out_a}) == 2);
    test::write_text(dir.file("broken.json"), "{not json");
    CHECK(cli_main({"gen-data", "--config", dir.file("broken.json"),
                    "--out", out_a}) == 2);
    CHECK(cli_main({"frobnicate"}) == 2);
  }
}

}  // TEST_SUITE
