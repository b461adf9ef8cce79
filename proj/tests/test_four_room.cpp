#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "drmpc/errors.hpp"
#include "drmpc/four_room.hpp"

using namespace drmpc;

TEST_SUITE("four_room") {

TEST_CASE("ambient coupling conserves an isothermal building") {
  const FourRoomModel model = four_room_model();
  const Eigen::Vector4d ones = Eigen::Vector4d::Ones();

  // With every room at ambient temperature nothing moves, so the state
  // rows and the ambient column sum to one exactly.
  const Eigen::Vector4d residual =
      model.sys.A * ones + model.B_w.col(0) - ones;
  CHECK(residual.cwiseAbs().maxCoeff() < 1e-12);

  const double t_amb = 24.0;
  const Eigen::Vector4d next =
      model.sys.A * (t_amb * ones) + model.B_w.col(0) * t_amb;
  CHECK((next - t_amb * ones).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("default plant is a stable contraction toward ambient") {
  const FourRoomModel model = four_room_model();
  CHECK(model.sys.n() == 4);
  CHECK(model.sys.m() == 4);
  CHECK(spectral_radius(model.sys.A) < 1.0);
  CHECK(model.B_w.rows() == 4);
  CHECK(model.B_w.cols() == 1);
  CHECK(model.B_w.minCoeff() > 0.0);
}

TEST_CASE("heat exchange is symmetric after capacitance scaling") {
  FourRoomParams params;
  params.capacitance << 1.0, 2.0, 3.0, 4.0;
  const FourRoomModel model = four_room_model(params);

  const Eigen::Vector4d root = params.capacitance.cwiseSqrt();
  const Eigen::MatrixXd scaled = root.asDiagonal() * model.sys.A *
                                 root.cwiseInverse().asDiagonal();
  CHECK((scaled - scaled.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("infinite ambient resistance closes the building") {
  FourRoomParams params;
  params.r_ambient = std::numeric_limits<double>::infinity();
  const FourRoomModel model = four_room_model(params);

  CHECK(model.B_w.cwiseAbs().maxCoeff() == 0.0);
  const Eigen::Vector4d row_sums = model.sys.A.rowwise().sum();
  CHECK((row_sums - Eigen::Vector4d::Ones()).cwiseAbs().maxCoeff() < 1e-12);
  // The isothermal mode persists, every other mode decays.
  CHECK(spectral_radius(model.sys.A) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("parameters are validated") {
  FourRoomParams params;
  SUBCASE("nonpositive adjacency resistance") {
    params.r_adjacent = 0.0;
    CHECK_THROWS_AS(four_room_model(params), ValueError);
  }
  SUBCASE("negative ambient resistance") {
    params.r_ambient = -3.0;
    CHECK_THROWS_AS(four_room_model(params), ValueError);
  }
  SUBCASE("nonpositive capacitance") {
    params.capacitance(2) = 0.0;
    CHECK_THROWS_AS(four_room_model(params), ValueError);
  }
  SUBCASE("nonpositive step") {
    params.dt_hours = 0.0;
    CHECK_THROWS_AS(four_room_model(params), ValueError);
  }
  SUBCASE("nonpositive input limit") {
    params.input_limit = 0.0;
    CHECK_THROWS_AS(four_room_model(params), ValueError);
  }
}

TEST_CASE("bundle carries the scenario defaults") {
  const FourRoomModel model = four_room_model();

  CHECK(model.u_box.lower == -4.5 * Eigen::Vector4d::Ones());
  CHECK(model.u_box.upper == 4.5 * Eigen::Vector4d::Ones());
  CHECK(model.x_s == Eigen::Vector4d::Constant(21.0));
  CHECK(model.x0 ==
        (Eigen::Vector4d() << 20.75, 20.50, 20.65, 20.60).finished());

  CHECK(model.profile.kind() == KnownDisturbanceProfile::Kind::Sinusoidal);
  CHECK(model.profile.declared_horizon() == 61);
  CHECK(model.profile.output_at(0)(0) ==
        doctest::Approx(5.0 * std::sin(1.5) + 19.0).epsilon(1e-15));
  // The profile injects through the ambient column.
  CHECK(known_disturbance_at(model.profile, 0) ==
        model.B_w * model.profile.output_at(0));
}

TEST_CASE("smaller capacitance reacts faster") {
  FourRoomParams slow;
  slow.capacitance = Eigen::Vector4d::Constant(4.0);
  const FourRoomModel fast = four_room_model();
  const FourRoomModel heavy = four_room_model(slow);

  // One hour of pure ambient pull from 21 C moves the light building
  // further than the heavy one.
  const Eigen::Vector4d x = Eigen::Vector4d::Constant(21.0);
  const double amb = 24.0;
  const auto drift = [&](const FourRoomModel& model) {
    const Eigen::Vector4d next =
        model.sys.A * x + model.B_w.col(0) * amb;
    return (next - x).cwiseAbs().maxCoeff();
  };
  CHECK(drift(fast) > drift(heavy));
}

}  // TEST_SUITE
