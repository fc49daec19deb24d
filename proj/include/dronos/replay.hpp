#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dronos/controller.hpp"
#include "dronos/flight_path.hpp"
#include "dronos/orchestrator.hpp"
#include "dronos/safety.hpp"
#include "dronos/sim.hpp"
#include "dronos/tracking.hpp"

// Headless closed loop: the simulator and the orchestrator exchange TRK
// datagrams and MSP bytes in virtual time, with 200 Hz physics, 100 Hz
// tracking and 50 Hz control.
namespace dronos::replay {

struct ScenarioDrone {
  int drone_id = 1;
  int tracked_id = 1;
  int priority = 0;
  Vec3 start;
  double yaw = 0.0;
  std::string path_id;  // started automatically once hovering; empty = just hover
  bool demonstrated = false;
  std::optional<std::string> preset;
  sim::DroneParams params;
};

struct ScenarioActor {
  sim::Actor motion;
  tracking::ObjectKind kind = tracking::ObjectKind::User;
};

struct ScheduledRequest {
  double t = 0.0;
  orch::Request request;
};

struct NoiseChange {
  double t = 0.0;
  sim::Noise noise;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  double duration = 30.0;
  double physics_dt = sim::kPhysicsDt;
  sim::Noise noise;
  orch::OrchestratorConfig orchestrator;
  std::vector<safety::Zone> zones;
  std::map<std::string, control::ControlConfig> presets;
  std::string preset = "default";
  std::vector<std::shared_ptr<const path::FlightPath>> paths;
  std::vector<ScenarioDrone> drones;
  std::vector<ScenarioActor> actors;
  std::vector<ScheduledRequest> requests;
  std::vector<NoiseChange> noise_changes;
  bool auto_start = true;  // arm + takeoff at t=0, start the path once hovering
  // Closed-loop clearance below which a sample counts as a violation.
  double zone_tolerance = 0.02;
  double separation_fraction = 0.9;  // of d_min
};

// Relative file references resolve against base_dir.
Scenario scenario_from_json(const nlohmann::json& doc, const std::string& base_dir = ".");
Scenario load_scenario(const std::string& file);

struct TickRecord {
  double t = 0.0;
  std::vector<std::pair<int, msp::RcCommand>> commands;
};

class ClosedLoop {
 public:
  explicit ClosedLoop(Scenario scenario);

  // One physics step, with tracker emission and control ticks when due.
  void step();
  void run_until(double t);
  void run() { run_until(scenario_.duration); }

  double time() const { return sim_.time(); }
  const Scenario& scenario() const { return scenario_; }
  sim::Simulator& simulator() { return sim_; }
  const sim::Simulator& simulator() const { return sim_; }
  orch::Orchestrator& orchestrator() { return *orchestrator_; }
  tracking::Registry& registry() { return registry_; }

  const std::vector<TickRecord>& ticks() const { return ticks_; }
  const std::vector<orch::Event>& events() const { return events_; }
  const std::vector<orch::Reply>& replies() const { return replies_; }
  // Every MSP byte sent to each drone, in order.
  const std::map<int, std::vector<std::uint8_t>>& msp_streams() const { return msp_streams_; }
  std::string trajectory_csv() const;
  bool path_done(int drone_id) const;
  std::optional<double> first_event_time(int drone_id, const std::string& type) const;

 private:
  void control_tick();

  Scenario scenario_;
  sim::Simulator sim_;
  tracking::Registry registry_;
  std::unique_ptr<orch::Orchestrator> orchestrator_;
  std::uint64_t control_every_ = 4;
  std::size_t next_request_ = 0;
  std::size_t next_noise_ = 0;
  std::map<int, bool> path_started_;
  std::map<int, bool> path_done_;
  std::vector<TickRecord> ticks_;
  std::vector<orch::Event> events_;
  std::vector<orch::Reply> replies_;
  std::map<int, std::vector<std::uint8_t>> msp_streams_;
};

struct Report {
  bool completed = false;
  bool safe = true;
  double min_zone_clearance = 1e9;    // to inflated static surfaces, at 50 Hz
  double min_pair_distance = 1e9;     // drone-drone, at 200 Hz
  double min_actor_clearance = 1e9;   // drone to dynamic-zone surface (radius only), at 50 Hz
  double max_fence_excursion = 0.0;
  std::size_t failsafe_events = 0;
  std::vector<std::string> violations;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

Report evaluate(const ClosedLoop& loop);

// Runs a scenario to completion; writes trajectory.csv, rc_<id>.bin,
// events.jsonl and report.json into out_dir when it is non-empty.
Report run_scenario(const Scenario& scenario, const std::string& out_dir = {});

}  // namespace dronos::replay
