#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dronos/geometry.hpp"
#include "dronos/msp.hpp"
#include "dronos/tracking.hpp"

namespace dronos::sim {

inline constexpr int kDefaultMspPort = 47810;
inline constexpr double kPhysicsDt = 0.005;
inline constexpr double kTrackerRate = 100.0;

struct DroneParams {
  double k_d = 0.3;                    // mass-normalized drag, 1/s
  double tilt_max = deg_to_rad(15.0);  // rad at full stick
  double hover_throttle = 1450.0;      // channel units
  double k_t_inv = 0.01;               // (m/s^2) per channel unit
  double yaw_rate_max = 2.0;           // rad/s at full stick
};

struct SimDrone {
  int drone_id = 0;
  int tracked_id = 0;
  Vec3 position;
  Vec3 velocity;
  double yaw = 0.0;
  double yaw_rate = 0.0;
  DroneParams params;
  msp::RcCommand last_command;
};

// Kinematic tilt model, semi-implicit Euler, ground contact at z = 0.
// Throws on an invalid command or dt outside (0, 0.01].
SimDrone step(const SimDrone& drone, const msp::RcCommand& rc, double dt);

struct Noise {
  double pose_sigma = 0.0;  // m, Gaussian per axis
  double dropout = 0.0;     // probability a datagram is lost, in [0, 1]

  void validate() const;
};

// A tracked object moved along a straight line at constant velocity between
// t_start and t_end (a user walking past, a hand controller).
struct Actor {
  int tracked_id = 0;
  Vec3 start;
  Vec3 velocity;
  double t_start = 0.0;
  double t_end = 1e9;
  double yaw = 0.0;

  Vec3 position_at(double t) const;
};

struct SimConfig {
  double physics_dt = kPhysicsDt;
  double tracker_rate = kTrackerRate;
  std::uint64_t seed = 1;
  Noise noise;
  bool keep_log = true;
};

class Simulator {
 public:
  explicit Simulator(SimConfig config = {});

  SimDrone& add_drone(int drone_id, int tracked_id, const Vec3& position, double yaw = 0.0,
                      DroneParams params = {});
  void add_actor(const Actor& actor);
  void set_noise(const Noise& noise);

  // Bytes arriving on a drone's link. Malformed data is counted and the last
  // valid command stays in force.
  void feed_msp(int drone_id, std::span<const std::uint8_t> bytes);

  // Tracker datagrams due at the current instant (empty between tracker
  // ticks or once already taken for this instant).
  std::vector<std::string> poll_tracker();

  // One physics step; appends one log row per drone.
  void advance();

  double time() const { return static_cast<double>(step_index_) * config_.physics_dt; }
  std::uint64_t step_index() const { return step_index_; }
  const SimConfig& config() const { return config_; }
  const std::vector<SimDrone>& drones() const { return drones_; }
  const SimDrone& drone(int drone_id) const;
  const std::vector<Actor>& actors() const { return actors_; }
  std::uint64_t malformed_frames(int drone_id) const;

  static const char* log_header();
  const std::string& log() const { return log_; }

 private:
  struct Link {
    msp::StreamDecoder decoder;
    std::uint64_t malformed = 0;
  };
  std::string emit(int tracked_id, const Pose& truth, std::mt19937_64& rng);
  std::mt19937_64& rng_for(int tracked_id);

  SimConfig config_;
  std::uint64_t step_index_ = 0;
  std::uint64_t tracker_every_ = 2;
  std::uint64_t last_emitted_ = UINT64_MAX;
  std::vector<SimDrone> drones_;
  std::vector<Actor> actors_;
  std::map<int, Link> links_;
  std::map<int, std::mt19937_64> rngs_;
  std::string log_;
};

struct RunResult {
  std::vector<std::string> datagrams;
  std::string log;
};

// Feeds each drone's MSP bytes up front, then steps for duration seconds.
RunResult run(Simulator& sim, const std::map<int, std::vector<std::uint8_t>>& msp_in,
              double duration);

}  // namespace dronos::sim
