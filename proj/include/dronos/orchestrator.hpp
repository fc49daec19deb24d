#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dronos/controller.hpp"
#include "dronos/flight_path.hpp"
#include "dronos/msp.hpp"
#include "dronos/safety.hpp"
#include "dronos/tracking.hpp"

namespace dronos::orch {

enum class ModeKind { Idle, Takeoff, Scripted, Playback, Realtime, Hover, Landing, Failsafe };
const char* to_string(ModeKind mode);

enum class Command { Arm, Disarm, Takeoff, StartPath, StartRealtime, Hover, Land, Reset };
const char* to_string(Command command);
Command command_from_string(const std::string& name);

struct OrchestratorConfig {
  double control_period = 0.02;
  double takeoff_altitude = 1.0;
  double takeoff_tolerance = 0.1;
  double landing_speed = 0.3;
  double landed_height = 0.05;
  double d_min = 0.5;
  double k_rep = 2.0;
  double failsafe_ramp = 2.0;
  // Weight of the newest finite-difference sample in the velocity estimate.
  double velocity_filter = 0.5;
  tracking::HealthThresholds thresholds;
  safety::Geofence fence;
  safety::FilterOptions filter;
  path::AltitudeLimits altitude;

  void validate() const;
};

struct DroneSpec {
  int drone_id = 0;
  int tracked_object_id = 0;
  int priority = 0;  // lower number wins
  control::ControlConfig control;
};

struct Request {
  int drone_id = 0;
  Command command = Command::Hover;
  std::string path_id;                           // StartPath
  bool demonstrated = false;                     // StartPath: playback of a recording
  std::optional<int> controller_id;              // StartRealtime: tracked pointer source
  double distance = 1.0;                         // StartRealtime: pointer distance
};

struct Reply {
  std::uint64_t ticket = 0;
  bool ok = true;
  std::string error;
};

struct Event {
  double t = 0.0;
  int drone_id = 0;
  std::string type;  // mode | verdict | failsafe | degraded | path_done | landed
  std::string detail;
};

struct SessionSummary {
  int drone_id = 0;
  int tracked_object_id = 0;
  int priority = 0;
  ModeKind mode = ModeKind::Idle;
  bool armed = false;
  tracking::HealthState health = tracking::HealthState::Lost;
  Vec3 position;
  Vec3 velocity;
  Vec3 target;       // mode target before safety filtering
  Vec3 safe_target;  // what the controller actually chased
  double target_yaw = 0.0;
  safety::Verdict verdict = safety::Verdict::Unchanged;
  std::string path_id;
  double path_t = 0.0;
  bool held = false;
  msp::RcCommand command;
};

struct WorldSnapshot {
  double t = 0.0;
  std::shared_ptr<const tracking::Snapshot> tracking;
  std::vector<safety::Zone> zones;
  bool degraded = false;
  std::vector<SessionSummary> sessions;
};

struct TickOutput {
  double t = 0.0;
  std::vector<std::pair<int, msp::RcCommand>> commands;
  std::vector<Event> events;
  std::vector<Reply> replies;
};

struct SeparationEntry {
  Vec3 position;
  Vec3 target;
};

// Entries are in priority order (index 0 highest). For each pair closer than
// d_min the lower-priority target is pushed away horizontally by
// k_rep * (d_min - distance) * dt; vertically aligned pairs instead separate
// by 0.2 m vertically.
std::vector<Vec3> resolve_separation(const std::vector<SeparationEntry>& entries, double d_min,
                                     double k_rep, double dt);

// Open-loop descent: throttle ramps linearly from last_throttle to 1000 over
// ramp seconds, attitude centered.
msp::RcCommand failsafe_command(double last_throttle, double elapsed, double ramp);

class Orchestrator {
 public:
  Orchestrator(OrchestratorConfig config, std::vector<DroneSpec> drones);
  ~Orchestrator();
  Orchestrator(const Orchestrator&) = delete;
  Orchestrator& operator=(const Orchestrator&) = delete;

  // Thread-safe inbox; everything below is applied at the start of the next tick.
  std::uint64_t submit(const Request& request);
  std::uint64_t set_zones(std::vector<safety::Zone> zones);
  std::uint64_t set_gains(std::optional<int> drone_id, control::ControlConfig config);
  void set_pointer(int drone_id, const path::PointerRay& ray);  // latest wins
  void store_path(std::shared_ptr<const path::FlightPath> path);
  std::shared_ptr<const path::FlightPath> find_path(const std::string& id) const;
  std::vector<std::string> path_ids() const;

  TickOutput tick(std::shared_ptr<const tracking::Snapshot> snapshot, double now, double dt);

  // Loop-thread only: state as of the last tick.
  const WorldSnapshot& world() const { return world_; }
  const OrchestratorConfig& config() const { return config_; }
  std::vector<int> drone_ids() const;

 private:
  struct Session;
  struct Pending;

  void apply_inbox(const tracking::Snapshot& snapshot, double now, TickOutput& out);
  Reply apply_request(Session& s, const Request& r, const tracking::Snapshot& snapshot, double now,
                      TickOutput& out);
  void enter(Session& s, ModeKind mode, double now, TickOutput& out, const std::string& why = {});

  OrchestratorConfig config_;
  std::vector<std::unique_ptr<Session>> sessions_;  // sorted by priority
  std::vector<safety::Zone> zones_;
  WorldSnapshot world_;
  bool degraded_ = false;

  mutable std::mutex inbox_mutex_;
  std::uint64_t next_ticket_ = 1;
  std::vector<Pending> inbox_;
  std::map<int, path::PointerRay> pointers_;
  std::map<std::string, std::shared_ptr<const path::FlightPath>> paths_;
};

}  // namespace dronos::orch
