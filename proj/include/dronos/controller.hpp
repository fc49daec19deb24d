#pragma once

#include <array>
#include <map>
#include <string>

#include "json.hpp"

#include "dronos/geometry.hpp"
#include "dronos/msp.hpp"

namespace dronos::control {

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double i_max = 1.0;

  void validate() const;
};

// Derivative acts on the measurement, so setpoint jumps do not kick.
struct PidState {
  double integral = 0.0;
  double prev_measurement = 0.0;
  bool has_prev = false;
};

struct PidOutput {
  double output = 0.0;
  PidState state;
};

// Throws InvalidArgument for dt <= 0.
PidOutput pid_step(const PidGains& gains, const PidState& state, double error,
                   double measurement, double dt);

struct ControlConfig {
  std::string preset_name = "default";
  Vec3 position_kp{2.5, 2.5, 2.0};       // 1/s
  std::array<PidGains, 3> velocity{};  // x, y, z; output in m/s^2
  double yaw_kp = 1.0;
  double v_max = 0.5;                  // m/s
  double tilt_max = deg_to_rad(15.0);  // rad
  double hover_throttle = 1450.0;      // channel units
  double k_t = 100.0;                  // channel units per m/s^2

  ControlConfig();
  // Throws Config on any violated invariant.
  void validate() const;
};

struct ControllerState {
  std::array<PidState, 3> velocity{};
};

struct ControlOutput {
  msp::RcCommand command;
  ControllerState state;
  Vec3 velocity_setpoint;
  Vec3 acceleration;
};

// Cascade: position P -> velocity PID -> small-angle tilt/throttle -> channels.
ControlOutput control_update(const ControlConfig& cfg, const ControllerState& state,
                             const Pose& drone_pose, const Vec3& drone_velocity,
                             const Vec3& target_position, double target_yaw, double dt);

// Channel value for a tilt angle in [-tilt_max, tilt_max].
std::uint16_t angle_to_channel(double angle, double tilt_max);

// Presets file: {"<name>": {ControlConfig fields}, ...}. Angles in degrees.
ControlConfig config_from_json(const nlohmann::json& fields, const std::string& name,
                               const ControlConfig& base = ControlConfig{});
nlohmann::json config_to_json(const ControlConfig& cfg);
std::map<std::string, ControlConfig> load_presets(const std::string& file);
std::map<std::string, ControlConfig> presets_from_json(const nlohmann::json& doc);
// $DRONOS_PRESETS if set, else the presets file shipped with the source tree.
std::string default_presets_path();

}  // namespace dronos::control
