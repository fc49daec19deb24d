#include <random>

#include "doctest.h"
#include "dronos/controller.hpp"
#include "dronos/error.hpp"
#include "dronos/sim.hpp"

using namespace dronos;
using namespace dronos::control;

namespace {

Pose pose_at(Vec3 p, double yaw = 0.0) {
  Pose pose;
  pose.position = p;
  pose.orientation = yaw_quat(yaw);
  return pose;
}

int deflection_sign(std::uint16_t channel, double centre) {
  const double d = channel - centre;
  return d > 0.5 ? 1 : (d < -0.5 ? -1 : 0);
}

}  // namespace

TEST_CASE("pid_step examples") {
  PidGains p{2.0, 0.0, 0.0, 1.0};
  CHECK(pid_step(p, {}, 0.5, 0.0, 0.02).output == doctest::Approx(1.0));

  PidGains i{0.0, 1.0, 0.0, 0.2};
  PidState s;
  const double expect[] = {0.1, 0.2, 0.2};
  for (double e : expect) {
    const PidOutput out = pid_step(i, s, 1.0, 0.0, 0.1);
    CHECK(out.output == doctest::Approx(e));
    s = out.state;
  }
  CHECK(s.integral == doctest::Approx(0.2));

  PidGains d{0.0, 0.0, 1.0, 1.0};
  PidState ds = pid_step(d, {}, 0.0, 0.0, 0.1).state;
  CHECK(pid_step(d, ds, 0.0, 0.1, 0.1).output == doctest::Approx(-1.0));

  CHECK_THROWS_AS(pid_step(p, {}, 1.0, 0.0, 0.0), Error);
  CHECK_THROWS_AS(pid_step(p, {}, 1.0, 0.0, -0.1), Error);
}

TEST_CASE("integrator never exceeds its clamp") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> e(-50, 50), g(0.0, 5.0), imax(0.01, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    PidGains gains{g(rng), g(rng), g(rng), imax(rng)};
    PidState s;
    for (int k = 0; k < 500; ++k) {
      s = pid_step(gains, s, e(rng), e(rng), 0.02).state;
      CHECK(std::abs(s.integral) <= gains.i_max + 1e-12);
    }
  }
}

TEST_CASE("equilibrium gives centred sticks and hover throttle") {
  const ControlConfig cfg;
  const ControlOutput out = control_update(cfg, {}, pose_at({1, 2, 1}), {}, {1, 2, 1}, 0.0, 0.02);
  CHECK(out.command.roll() == 1500);
  CHECK(out.command.pitch() == 1500);
  CHECK(out.command.throttle() == static_cast<std::uint16_t>(cfg.hover_throttle));
  CHECK(out.command.yaw() == 1500);
  CHECK(out.command.channels.size() == 8);
}

TEST_CASE("target ahead pitches forward and the sim closes the gap") {
  const ControlConfig cfg;
  const ControlOutput out = control_update(cfg, {}, pose_at({0, 0, 1}), {}, {1, 0, 1}, 0.0, 0.02);
  CHECK(out.command.pitch() > 1500);
  CHECK(out.command.roll() == 1500);

  // Same command held in the simulator must accelerate toward +x.
  sim::SimDrone d;
  d.position = {0, 0, 1};
  for (int i = 0; i < 4; ++i) d = sim::step(d, out.command, 0.005);
  CHECK(d.velocity.x > 0.0);

  // Target to the left (+y) with yaw 90 deg: that is straight ahead in body frame.
  const ControlOutput left =
      control_update(cfg, {}, pose_at({0, 0, 1}, kPi / 2), {}, {0, 1, 1}, kPi / 2, 0.02);
  CHECK(left.command.pitch() > 1500);
  CHECK(std::abs(int(left.command.roll()) - 1500) <= 1);

  // Target to the left with yaw 0 rolls left.
  const ControlOutput roll = control_update(cfg, {}, pose_at({0, 0, 1}), {}, {0, 1, 1}, 0.0, 0.02);
  CHECK(roll.command.roll() < 1500);
  sim::SimDrone r;
  r.position = {0, 0, 1};
  for (int i = 0; i < 4; ++i) r = sim::step(r, roll.command, 0.005);
  CHECK(r.velocity.y > 0.0);
}

TEST_CASE("yaw error turns the short way") {
  ControlConfig cfg;
  cfg.yaw_kp = 0.1;
  const double yaw = 0.2;
  const double target = yaw + kPi + 0.1;
  const double wrapped = std::atan2(std::sin(target - yaw), std::cos(target - yaw));
  CHECK(wrapped == doctest::Approx(-kPi + 0.1));
  const ControlOutput out = control_update(cfg, {}, pose_at({0, 0, 1}, yaw), {}, {0, 0, 1}, target, 0.02);
  CHECK(out.command.yaw() < 1500);
  CHECK(std::abs(out.command.yaw() - (1500 + 0.1 * wrapped * 500)) <= 1.0);
}

TEST_CASE("channels stay in range and saturation keeps sign") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-5, 5), yaw(-10, 10);
  const ControlConfig cfg;
  for (int trial = 0; trial < 5000; ++trial) {
    const Pose p = pose_at({u(rng), u(rng), u(rng)}, yaw(rng));
    const Vec3 target{u(rng), u(rng), u(rng)};
    const ControlOutput out = control_update(cfg, {}, p, {}, target, p.orientation == Quat{} ? 0 : yaw_of(p.orientation), 0.02);
    for (std::uint16_t c : out.command.channels) CHECK((c >= 1000 && c <= 2000));
    const Vec3 far = p.position + 10.0 * (target - p.position);
    const ControlOutput big = control_update(cfg, {}, p, {}, far, yaw_of(p.orientation), 0.02);
    for (int ch = 0; ch < 3; ++ch) {
      const double centre = ch == 2 ? cfg.hover_throttle : 1500.0;
      const int a = deflection_sign(out.command.channels[ch], centre);
      const int b = deflection_sign(big.command.channels[ch], centre);
      if (a != 0 && b != 0) CHECK(a == b);
    }
  }
  // Wild velocities and huge integrals also saturate.
  ControllerState st;
  for (auto& s : st.velocity) s.integral = 1e6;
  const ControlOutput out = control_update(cfg, st, pose_at({0, 0, 0}), {1e3, -1e3, 1e3}, {100, 100, 100}, 0, 0.02);
  for (std::uint16_t c : out.command.channels) CHECK((c >= 1000 && c <= 2000));
}

TEST_CASE("velocity setpoint respects v_max") {
  ControlConfig cfg;
  const ControlOutput out = control_update(cfg, {}, pose_at({0, 0, 1}), {}, {10, 10, 3}, 0.0, 0.02);
  CHECK(out.velocity_setpoint.norm() <= cfg.v_max + 1e-12);
}

TEST_CASE("angle_to_channel") {
  const double tmax = deg_to_rad(15.0);
  CHECK(angle_to_channel(0.0, tmax) == 1500);
  CHECK(angle_to_channel(tmax, tmax) == 2000);
  CHECK(angle_to_channel(-tmax, tmax) == 1000);
  CHECK(angle_to_channel(tmax / 2, tmax) == 1750);
  CHECK(angle_to_channel(5.0, tmax) == 2000);
}

TEST_CASE("config validation and presets") {
  ControlConfig c;
  CHECK_NOTHROW(c.validate());
  c.tilt_max = kPi / 4;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ControlConfig{};
  c.hover_throttle = 2000;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ControlConfig{};
  c.velocity[0].ki = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ControlConfig{};
  c.velocity[2].i_max = 0;
  CHECK_THROWS_AS(c.validate(), Error);

  const auto presets = load_presets(default_presets_path());
  REQUIRE(presets.count("default"));
  REQUIRE(presets.count("aggressive"));
  REQUIRE(presets.count("heavy-lift"));
  CHECK(presets.at("aggressive").v_max > presets.at("default").v_max);
  CHECK(presets.at("heavy-lift").hover_throttle == 1550);
  CHECK(presets.at("default").tilt_max == doctest::Approx(deg_to_rad(15.0)));

  const ControlConfig back = config_from_json(config_to_json(presets.at("aggressive")), "copy");
  CHECK(back.v_max == presets.at("aggressive").v_max);
  CHECK(back.tilt_max == doctest::Approx(presets.at("aggressive").tilt_max));
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"tilt_max_deg", 60}}, "bad"), Error);
}
