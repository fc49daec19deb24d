#include "dronos/sim.hpp"

#include <algorithm>
#include <cstdio>

#include "dronos/error.hpp"

namespace dronos::sim {

SimDrone step(const SimDrone& drone, const msp::RcCommand& rc, double dt) {
  if (!(dt > 0.0) || dt > 0.01)
    throw Error(ErrorCode::InvalidArgument, "sim step: dt must be in (0, 0.01]");
  rc.validate();
  const DroneParams& p = drone.params;
  SimDrone next = drone;
  next.last_command = rc;

  const double tilt_roll = (rc.roll() - 1500.0) / 500.0 * p.tilt_max;
  const double tilt_pitch = (rc.pitch() - 1500.0) / 500.0 * p.tilt_max;
  const double a_bx = kGravity * tilt_pitch;
  const double a_by = -kGravity * tilt_roll;
  const double c = std::cos(drone.yaw);
  const double s = std::sin(drone.yaw);
  Vec3 accel{c * a_bx - s * a_by, s * a_bx + c * a_by, (rc.throttle() - p.hover_throttle) * p.k_t_inv};
  accel -= p.k_d * drone.velocity;

  next.velocity = drone.velocity + dt * accel;
  next.position = drone.position + dt * next.velocity;
  next.yaw_rate = (rc.yaw() - 1500.0) / 500.0 * p.yaw_rate_max;
  next.yaw = wrap_angle(drone.yaw + dt * next.yaw_rate);
  if (next.position.z < 0.0) {
    next.position.z = 0.0;
    next.velocity = {};
  }
  return next;
}

void Noise::validate() const {
  if (!(pose_sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise sigma must be >= 0");
  if (!(dropout >= 0.0) || dropout > 1.0)
    throw Error(ErrorCode::InvalidArgument, "dropout must be in [0, 1]");
}

Vec3 Actor::position_at(double t) const {
  const double active = std::clamp(t, t_start, t_end) - t_start;
  return start + active * velocity;
}

Simulator::Simulator(SimConfig config) : config_(config) {
  if (!(config_.physics_dt > 0.0) || config_.physics_dt > 0.01)
    throw Error(ErrorCode::InvalidArgument, "physics dt must be in (0, 0.01]");
  config_.noise.validate();
  const double ratio = 1.0 / (config_.tracker_rate * config_.physics_dt);
  tracker_every_ = static_cast<std::uint64_t>(std::max(1.0, std::round(ratio)));
}

SimDrone& Simulator::add_drone(int drone_id, int tracked_id, const Vec3& position, double yaw,
                               DroneParams params) {
  for (const SimDrone& d : drones_)
    if (d.drone_id == drone_id)
      throw Error(ErrorCode::InvalidArgument, "duplicate sim drone " + std::to_string(drone_id));
  SimDrone d;
  d.drone_id = drone_id;
  d.tracked_id = tracked_id;
  d.position = position;
  d.yaw = wrap_angle(yaw);
  d.params = params;
  d.last_command = msp::RcCommand::neutral(static_cast<std::uint16_t>(std::lround(params.hover_throttle)));
  // On the ground a fresh drone idles with the throttle closed.
  if (position.z <= 0.0) d.last_command.channels[2] = msp::kChannelMin;
  drones_.push_back(d);
  links_[drone_id];
  return drones_.back();
}

void Simulator::add_actor(const Actor& actor) { actors_.push_back(actor); }

void Simulator::set_noise(const Noise& noise) {
  noise.validate();
  config_.noise = noise;
}

const SimDrone& Simulator::drone(int drone_id) const {
  for (const SimDrone& d : drones_)
    if (d.drone_id == drone_id) return d;
  throw Error(ErrorCode::InvalidArgument, "no sim drone " + std::to_string(drone_id));
}

std::uint64_t Simulator::malformed_frames(int drone_id) const {
  auto it = links_.find(drone_id);
  return it == links_.end() ? 0 : it->second.malformed + it->second.decoder.resync_count();
}

void Simulator::feed_msp(int drone_id, std::span<const std::uint8_t> bytes) {
  auto link = links_.find(drone_id);
  if (link == links_.end()) throw Error(ErrorCode::InvalidArgument, "no sim drone link " + std::to_string(drone_id));
  SimDrone* target = nullptr;
  for (SimDrone& d : drones_)
    if (d.drone_id == drone_id) target = &d;
  for (const msp::Frame& frame : link->second.decoder.feed(bytes)) {
    if (frame.direction != msp::Direction::ToDrone || frame.command != msp::kSetRawRc) {
      ++link->second.malformed;
      continue;
    }
    try {
      target->last_command = msp::decode_set_raw_rc(frame);
    } catch (const Error&) {
      ++link->second.malformed;
    }
  }
}

std::mt19937_64& Simulator::rng_for(int tracked_id) {
  auto it = rngs_.find(tracked_id);
  if (it == rngs_.end()) {
    // Independent stream per tracked object so adding an object never
    // perturbs the noise seen by another.
    std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                      static_cast<std::uint32_t>(tracked_id)};
    it = rngs_.emplace(tracked_id, std::mt19937_64(seq)).first;
  }
  return it->second;
}

std::string Simulator::emit(int tracked_id, const Pose& truth, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double u = uniform(rng);
  const Vec3 n{gauss(rng), gauss(rng), gauss(rng)};
  if (config_.noise.dropout > 0.0 && u < config_.noise.dropout) return {};
  Pose measured = truth;
  measured.position += config_.noise.pose_sigma * n;
  return tracking::format_datagram(tracked_id, measured);
}

std::vector<std::string> Simulator::poll_tracker() {
  std::vector<std::string> out;
  if (step_index_ % tracker_every_ != 0 || last_emitted_ == step_index_) return out;
  last_emitted_ = step_index_;
  const double t = time();
  for (const SimDrone& d : drones_) {
    Pose truth{d.position, yaw_quat(d.yaw), t};
    if (auto line = emit(d.tracked_id, truth, rng_for(d.tracked_id)); !line.empty())
      out.push_back(std::move(line));
  }
  for (const Actor& a : actors_) {
    Pose truth{a.position_at(t), yaw_quat(a.yaw), t};
    if (auto line = emit(a.tracked_id, truth, rng_for(a.tracked_id)); !line.empty())
      out.push_back(std::move(line));
  }
  return out;
}

const char* Simulator::log_header() { return "t,drone_id,x,y,z,yaw,vx,vy,vz\n"; }

void Simulator::advance() {
  for (SimDrone& d : drones_) d = step(d, d.last_command, config_.physics_dt);
  ++step_index_;
  if (!config_.keep_log) return;
  const double t = time();
  char row[256];
  for (const SimDrone& d : drones_) {
    std::snprintf(row, sizeof row, "%.4f,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", t, d.drone_id,
                  d.position.x, d.position.y, d.position.z, d.yaw, d.velocity.x, d.velocity.y,
                  d.velocity.z);
    log_ += row;
  }
}

RunResult run(Simulator& sim, const std::map<int, std::vector<std::uint8_t>>& msp_in,
              double duration) {
  for (const auto& [drone_id, bytes] : msp_in) sim.feed_msp(drone_id, bytes);
  RunResult result;
  const auto steps =
      static_cast<std::uint64_t>(std::llround(duration / sim.config().physics_dt));
  for (std::uint64_t i = 0; i < steps; ++i) {
    for (auto& line : sim.poll_tracker()) result.datagrams.push_back(std::move(line));
    sim.advance();
  }
  result.log = std::string(Simulator::log_header()) + sim.log();
  return result;
}

}  // namespace dronos::sim
