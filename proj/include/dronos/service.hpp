#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "dronos/orchestrator.hpp"
#include "dronos/sim.hpp"
#include "dronos/tracking.hpp"

namespace dronos::service {

struct LinkConfig {
  enum class Kind { None, Tcp, Serial };
  Kind kind = Kind::None;
  std::string host = "127.0.0.1";
  int port = 0;
  std::string device;
  int baud = 115200;
};

struct DroneConfig {
  int drone_id = 1;
  int tracked_id = 1;
  int priority = 0;
  std::string preset;  // empty = service default
  LinkConfig link;
};

struct ObjectConfig {
  int id = 0;
  tracking::ObjectKind kind = tracking::ObjectKind::User;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int api_port = 47820;    // 0 picks a free port
  int track_port = 47800;  // UDP, 0 picks a free port
  double control_rate = 50.0;
  double snapshot_rate = 30.0;
  std::string presets_file;  // empty = shipped presets
  std::string preset = "default";
  std::vector<safety::Zone> zones;
  orch::OrchestratorConfig orchestrator;
  tracking::SmoothingConfig smoothing;
  std::vector<DroneConfig> drones;
  std::vector<ObjectConfig> objects;
  std::size_t max_clients = 256;
  std::size_t send_buffer_limit = 1 << 20;  // bytes queued before a client is dropped
  double stall_timeout = 5.0;               // s without write progress before a client is dropped

  void validate() const;
};

// Relative file references resolve against base_dir.
ServiceConfig config_from_json(const nlohmann::json& doc, const std::string& base_dir = ".");
ServiceConfig load_config(const std::string& file);
// DRONOS_API_PORT and DRONOS_TRACK_PORT override the configured ports.
void apply_environment(ServiceConfig& config);

struct Stats {
  std::uint64_t ticks = 0;
  std::vector<double> tick_intervals;  // most recent, seconds
  std::size_t clients = 0;
  std::size_t subscribers = 0;
  std::uint64_t snapshots_sent = 0;
  std::uint64_t clients_dropped = 0;
  std::uint64_t datagrams = 0;
};

// Control loop, tracking listener and API server on their own threads. The
// control loop only ever touches the I/O side through queues.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds every port before spawning threads; throws Error(Io) if one is busy.
  void start();
  void stop();
  // Blocks until stop() has been called.
  void wait();
  bool running() const;

  int api_port() const;
  int track_port() const;
  Stats stats() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct SimServerConfig {
  struct Drone {
    int drone_id = 1;
    int tracked_id = 1;
    Vec3 start;
  };
  std::vector<Drone> drones;
  std::vector<sim::Actor> actors;
  std::string host = "127.0.0.1";
  int msp_port = sim::kDefaultMspPort;  // drone i listens on msp_port + i; 0 = ephemeral
  std::string track_host = "127.0.0.1";
  int track_port = 47800;
  sim::SimConfig sim;
};

// The simulator behind real sockets, paced in wall-clock time.
class SimServer {
 public:
  explicit SimServer(SimServerConfig config);
  ~SimServer();
  SimServer(const SimServer&) = delete;
  SimServer& operator=(const SimServer&) = delete;

  // Binds the MSP listeners (idempotent); start() calls it if needed.
  void listen();
  void start();
  void stop();
  void set_track_port(int port);
  std::vector<int> msp_ports() const;
  std::vector<sim::SimDrone> drones() const;
  void set_noise(const sim::Noise& noise);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// The service plus, optionally, an embedded simulator wired to it over
// localhost sockets.
class Runtime {
 public:
  // With sim_drones > 0 the first sim_drones configured drones (or drones
  // 1..n when none are configured) are linked to simulated ones.
  Runtime(ServiceConfig config, int sim_drones = 0, sim::Noise noise = {}, std::uint64_t seed = 1);
  ~Runtime();

  void start();
  void stop();
  void wait();
  Service& service() { return *service_; }
  SimServer* sim() { return sim_.get(); }

 private:
  std::unique_ptr<SimServer> sim_;
  std::unique_ptr<Service> service_;
};

// Drones spread along x at the fence centre, ids 1..n, linked over TCP to
// the given ports.
std::vector<SimServerConfig::Drone> default_sim_drones(int count);

}  // namespace dronos::service
