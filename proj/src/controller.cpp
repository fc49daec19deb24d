#include "dronos/controller.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "dronos/error.hpp"

#ifndef DRONOS_SOURCE_PRESETS
#define DRONOS_SOURCE_PRESETS "config/presets.json"
#endif

namespace dronos::control {

void PidGains::validate() const {
  if (!(kp >= 0.0) || !(ki >= 0.0) || !(kd >= 0.0))
    throw Error(ErrorCode::Config, "PID gains must be >= 0");
  if (!(i_max > 0.0)) throw Error(ErrorCode::Config, "PID i_max must be > 0");
}

PidOutput pid_step(const PidGains& gains, const PidState& state, double error,
                   double measurement, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "pid_step: dt must be > 0");
  PidOutput out;
  out.state.integral = std::clamp(state.integral + error * dt * gains.ki, -gains.i_max, gains.i_max);
  const double derivative =
      state.has_prev ? -gains.kd * (measurement - state.prev_measurement) / dt : 0.0;
  out.state.prev_measurement = measurement;
  out.state.has_prev = true;
  out.output = gains.kp * error + out.state.integral + derivative;
  return out;
}

ControlConfig::ControlConfig() {
  velocity[0] = velocity[1] = PidGains{4.0, 0.5, 0.0, 1.0};
  velocity[2] = PidGains{4.0, 1.0, 0.0, 2.0};
}

void ControlConfig::validate() const {
  if (!position_kp.is_finite() || position_kp.x < 0.0 || position_kp.y < 0.0 || position_kp.z < 0.0)
    throw Error(ErrorCode::Config, preset_name + ": position gains must be >= 0");
  for (const PidGains& g : velocity) g.validate();
  if (!(yaw_kp >= 0.0)) throw Error(ErrorCode::Config, preset_name + ": yaw_kp must be >= 0");
  if (!(v_max > 0.0)) throw Error(ErrorCode::Config, preset_name + ": v_max must be > 0");
  if (!(tilt_max > 0.0) || !(tilt_max < kPi / 4.0))
    throw Error(ErrorCode::Config, preset_name + ": tilt_max must be in (0, 45) degrees");
  if (!(hover_throttle > 1000.0) || !(hover_throttle < 2000.0))
    throw Error(ErrorCode::Config, preset_name + ": hover_throttle must be in (1000, 2000)");
  if (!(k_t > 0.0)) throw Error(ErrorCode::Config, preset_name + ": k_t must be > 0");
}

std::uint16_t angle_to_channel(double angle, double tilt_max) {
  const double ratio = std::clamp(angle / tilt_max, -1.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(1500.0 + ratio * 500.0));
}

ControlOutput control_update(const ControlConfig& cfg, const ControllerState& state,
                             const Pose& drone_pose, const Vec3& drone_velocity,
                             const Vec3& target_position, double target_yaw, double dt) {
  ControlOutput out;

  Vec3 v_set = hadamard(cfg.position_kp, target_position - drone_pose.position);
  const double speed = v_set.norm();
  if (speed > cfg.v_max) v_set *= cfg.v_max / speed;
  out.velocity_setpoint = v_set;

  const std::array<double, 3> setpoint{v_set.x, v_set.y, v_set.z};
  const std::array<double, 3> measured{drone_velocity.x, drone_velocity.y, drone_velocity.z};
  std::array<double, 3> accel{};
  for (std::size_t axis = 0; axis < 3; ++axis) {
    PidOutput r = pid_step(cfg.velocity[axis], state.velocity[axis], setpoint[axis] - measured[axis],
                           measured[axis], dt);
    accel[axis] = r.output;
    out.state.velocity[axis] = r.state;
  }
  out.acceleration = {accel[0], accel[1], accel[2]};

  // Degenerate (vertical) orientations keep the last sane heading of zero.
  double yaw = 0.0;
  try {
    yaw = yaw_of(drone_pose.orientation);
  } catch (const Error&) {
  }
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double a_bx = c * accel[0] + s * accel[1];
  const double a_by = -s * accel[0] + c * accel[1];
  const double pitch = std::clamp(a_bx / kGravity, -cfg.tilt_max, cfg.tilt_max);
  const double roll = std::clamp(-a_by / kGravity, -cfg.tilt_max, cfg.tilt_max);

  const double throttle = std::clamp(cfg.hover_throttle + cfg.k_t * accel[2], 1000.0, 2000.0);
  const double yaw_cmd = std::clamp(cfg.yaw_kp * wrap_angle(target_yaw - yaw), -1.0, 1.0);

  out.command = msp::RcCommand::neutral();
  out.command.channels[0] = angle_to_channel(roll, cfg.tilt_max);
  out.command.channels[1] = angle_to_channel(pitch, cfg.tilt_max);
  out.command.channels[2] = static_cast<std::uint16_t>(std::lround(throttle));
  out.command.channels[3] = static_cast<std::uint16_t>(std::lround(1500.0 + yaw_cmd * 500.0));
  return out;
}

namespace {

Vec3 vec_from(const nlohmann::json& j, const std::string& where) {
  if (j.is_array() && j.size() == 3 && j[0].is_number() && j[1].is_number() && j[2].is_number())
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  if (j.is_object() && j.contains("x") && j.contains("y") && j.contains("z"))
    return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>()};
  throw Error(ErrorCode::Config, where + " must be [x, y, z]");
}

PidGains gains_from(const nlohmann::json& j, PidGains g) {
  g.kp = j.value("kp", g.kp);
  g.ki = j.value("ki", g.ki);
  g.kd = j.value("kd", g.kd);
  g.i_max = j.value("i_max", g.i_max);
  return g;
}

nlohmann::json gains_to(const PidGains& g) {
  return {{"kp", g.kp}, {"ki", g.ki}, {"kd", g.kd}, {"i_max", g.i_max}};
}

}  // namespace

ControlConfig config_from_json(const nlohmann::json& fields, const std::string& name,
                               const ControlConfig& base) {
  if (!fields.is_object()) throw Error(ErrorCode::Config, "preset '" + name + "' must be an object");
  ControlConfig cfg = base;
  cfg.preset_name = name;
  try {
    if (auto it = fields.find("position_kp"); it != fields.end())
      cfg.position_kp = vec_from(*it, name + ".position_kp");
    if (auto it = fields.find("velocity"); it != fields.end()) {
      static constexpr const char* kAxes[] = {"x", "y", "z"};
      for (std::size_t a = 0; a < 3; ++a)
        if (it->contains(kAxes[a])) cfg.velocity[a] = gains_from(it->at(kAxes[a]), cfg.velocity[a]);
    }
    cfg.yaw_kp = fields.value("yaw_kp", cfg.yaw_kp);
    cfg.v_max = fields.value("v_max", cfg.v_max);
    if (auto it = fields.find("tilt_max_deg"); it != fields.end())
      cfg.tilt_max = deg_to_rad(it->get<double>());
    cfg.hover_throttle = fields.value("hover_throttle", cfg.hover_throttle);
    cfg.k_t = fields.value("k_t", cfg.k_t);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, "preset '" + name + "': " + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json config_to_json(const ControlConfig& cfg) {
  return {
      {"position_kp", {cfg.position_kp.x, cfg.position_kp.y, cfg.position_kp.z}},
      {"velocity",
       {{"x", gains_to(cfg.velocity[0])}, {"y", gains_to(cfg.velocity[1])}, {"z", gains_to(cfg.velocity[2])}}},
      {"yaw_kp", cfg.yaw_kp},
      {"v_max", cfg.v_max},
      {"tilt_max_deg", rad_to_deg(cfg.tilt_max)},
      {"hover_throttle", cfg.hover_throttle},
      {"k_t", cfg.k_t},
  };
}

std::map<std::string, ControlConfig> presets_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::Config, "presets file must map names to configs");
  std::map<std::string, ControlConfig> presets;
  for (const auto& [name, fields] : doc.items()) presets.emplace(name, config_from_json(fields, name));
  return presets;
}

std::map<std::string, ControlConfig> load_presets(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::Io, "cannot open presets file " + file);
  try {
    return presets_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Config, file + ": " + e.what());
  }
}

std::string default_presets_path() {
  if (const char* env = std::getenv("DRONOS_PRESETS"); env && *env) return env;
  return DRONOS_SOURCE_PRESETS;
}

}  // namespace dronos::control
