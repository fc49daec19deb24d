#include "dronos/orchestrator.hpp"

#include <algorithm>
#include <variant>

#include "dronos/error.hpp"

namespace dronos::orch {

using tracking::HealthState;

const char* to_string(ModeKind mode) {
  switch (mode) {
    case ModeKind::Idle: return "idle";
    case ModeKind::Takeoff: return "takeoff";
    case ModeKind::Scripted: return "scripted";
    case ModeKind::Playback: return "demonstrated-playback";
    case ModeKind::Realtime: return "realtime";
    case ModeKind::Hover: return "hover";
    case ModeKind::Landing: return "landing";
    case ModeKind::Failsafe: return "failsafe";
  }
  return "unknown";
}

const char* to_string(Command command) {
  switch (command) {
    case Command::Arm: return "arm";
    case Command::Disarm: return "disarm";
    case Command::Takeoff: return "takeoff";
    case Command::StartPath: return "start_path";
    case Command::StartRealtime: return "start_realtime";
    case Command::Hover: return "hover";
    case Command::Land: return "land";
    case Command::Reset: return "reset";
  }
  return "unknown";
}

Command command_from_string(const std::string& name) {
  for (Command c : {Command::Arm, Command::Disarm, Command::Takeoff, Command::StartPath,
                    Command::StartRealtime, Command::Hover, Command::Land, Command::Reset})
    if (name == to_string(c)) return c;
  throw Error(ErrorCode::InvalidArgument, "unknown command '" + name + "'");
}

void OrchestratorConfig::validate() const {
  if (!(control_period > 0.0)) throw Error(ErrorCode::Config, "control period must be > 0");
  if (!(d_min > 0.0)) throw Error(ErrorCode::Config, "d_min must be > 0");
  if (!(k_rep >= 0.0)) throw Error(ErrorCode::Config, "k_rep must be >= 0");
  if (!(thresholds.stale_after < thresholds.lost_after))
    throw Error(ErrorCode::Config, "stale_after must be below lost_after");
  if (!(failsafe_ramp > 0.0)) throw Error(ErrorCode::Config, "failsafe ramp must be > 0");
  if (!(velocity_filter > 0.0) || velocity_filter > 1.0)
    throw Error(ErrorCode::Config, "velocity filter weight must be in (0, 1]");
  if (!(altitude.z_floor <= altitude.z_ceiling))
    throw Error(ErrorCode::Config, "z_floor must not exceed z_ceiling");
  fence.validate();
}

std::vector<Vec3> resolve_separation(const std::vector<SeparationEntry>& entries, double d_min,
                                     double k_rep, double dt) {
  if (!(d_min > 0.0)) throw Error(ErrorCode::InvalidArgument, "d_min must be > 0");
  std::vector<Vec3> targets;
  targets.reserve(entries.size());
  for (const auto& e : entries) targets.push_back(e.target);
  for (std::size_t hi = 0; hi < entries.size(); ++hi) {
    for (std::size_t lo = hi + 1; lo < entries.size(); ++lo) {
      const Vec3 away = entries[lo].position - entries[hi].position;
      const double d = away.norm();
      if (d >= d_min) continue;
      const Vec3 horizontal{away.x, away.y, 0.0};
      const double h = horizontal.norm();
      if (h < 0.01) {
        // Stacked: step further apart vertically, downward unless already above.
        targets[lo].z += away.z > 0.0 ? 0.2 : -0.2;
      } else {
        targets[lo] += (k_rep * (d_min - d) * dt / h) * horizontal;
      }
    }
  }
  return targets;
}

msp::RcCommand failsafe_command(double last_throttle, double elapsed, double ramp) {
  const double start = std::clamp(last_throttle, 1000.0, 2000.0);
  double throttle = 1000.0;
  if (elapsed < ramp) throttle = std::max(1000.0, start - (start - 1000.0) * (elapsed / ramp));
  return msp::RcCommand::neutral(static_cast<std::uint16_t>(std::lround(throttle)));
}

struct Orchestrator::Session {
  DroneSpec spec;
  ModeKind mode = ModeKind::Idle;
  bool armed = false;
  double mode_since = 0.0;

  Vec3 point;  // takeoff/hover target, landing start
  double hold_yaw = 0.0;
  std::shared_ptr<const path::FlightPath> path;
  double path_t = 0.0;
  std::optional<int> controller_id;
  double pointer_distance = 1.0;

  bool held = false;  // degraded-safety hold
  Vec3 hold_point;

  double failsafe_throttle = 1000.0;

  control::ControllerState controller;
  msp::RcCommand last_command = msp::RcCommand::neutral();

  bool has_estimate = false;
  double estimate_t = 0.0;
  Vec3 estimate_pos;
  Vec3 velocity;

  safety::Verdict verdict = safety::Verdict::Unchanged;
  SessionSummary summary;
};

struct Orchestrator::Pending {
  std::uint64_t ticket = 0;
  std::variant<Request, std::vector<safety::Zone>,
               std::pair<std::optional<int>, control::ControlConfig>>
      body;
};

Orchestrator::Orchestrator(OrchestratorConfig config, std::vector<DroneSpec> drones)
    : config_(std::move(config)) {
  config_.validate();
  std::sort(drones.begin(), drones.end(), [](const DroneSpec& a, const DroneSpec& b) {
    return std::tie(a.priority, a.drone_id) < std::tie(b.priority, b.drone_id);
  });
  for (const DroneSpec& spec : drones) {
    for (const auto& s : sessions_)
      if (s->spec.drone_id == spec.drone_id)
        throw Error(ErrorCode::Config, "duplicate drone id " + std::to_string(spec.drone_id));
    spec.control.validate();
    auto s = std::make_unique<Session>();
    s->spec = spec;
    sessions_.push_back(std::move(s));
  }
  world_.tracking = std::make_shared<const tracking::Snapshot>();
}

Orchestrator::~Orchestrator() = default;

std::vector<int> Orchestrator::drone_ids() const {
  std::vector<int> ids;
  for (const auto& s : sessions_) ids.push_back(s->spec.drone_id);
  return ids;
}

std::uint64_t Orchestrator::submit(const Request& request) {
  std::lock_guard lock(inbox_mutex_);
  const std::uint64_t ticket = next_ticket_++;
  inbox_.push_back({ticket, request});
  return ticket;
}

std::uint64_t Orchestrator::set_zones(std::vector<safety::Zone> zones) {
  for (const auto& z : zones) z.validate();
  std::lock_guard lock(inbox_mutex_);
  const std::uint64_t ticket = next_ticket_++;
  inbox_.push_back({ticket, std::move(zones)});
  return ticket;
}

std::uint64_t Orchestrator::set_gains(std::optional<int> drone_id, control::ControlConfig config) {
  config.validate();
  std::lock_guard lock(inbox_mutex_);
  const std::uint64_t ticket = next_ticket_++;
  inbox_.push_back({ticket, std::make_pair(drone_id, std::move(config))});
  return ticket;
}

void Orchestrator::set_pointer(int drone_id, const path::PointerRay& ray) {
  ray.validate();
  std::lock_guard lock(inbox_mutex_);
  pointers_[drone_id] = ray;
}

void Orchestrator::store_path(std::shared_ptr<const path::FlightPath> path) {
  std::lock_guard lock(inbox_mutex_);
  paths_[path->id()] = std::move(path);
}

std::shared_ptr<const path::FlightPath> Orchestrator::find_path(const std::string& id) const {
  std::lock_guard lock(inbox_mutex_);
  auto it = paths_.find(id);
  return it == paths_.end() ? nullptr : it->second;
}

std::vector<std::string> Orchestrator::path_ids() const {
  std::lock_guard lock(inbox_mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, _] : paths_) ids.push_back(id);
  return ids;
}

void Orchestrator::enter(Session& s, ModeKind mode, double now, TickOutput& out,
                         const std::string& why) {
  if (s.mode == mode && mode != ModeKind::Scripted && mode != ModeKind::Playback) return;
  const ModeKind before = s.mode;
  s.mode = mode;
  s.mode_since = now;
  s.path_t = 0.0;
  std::string detail = std::string(to_string(before)) + "->" + to_string(mode);
  if (!why.empty()) detail += " (" + why + ")";
  out.events.push_back({now, s.spec.drone_id, "mode", detail});
}

namespace {

bool airborne(ModeKind m) {
  return m == ModeKind::Takeoff || m == ModeKind::Scripted || m == ModeKind::Playback ||
         m == ModeKind::Realtime || m == ModeKind::Hover || m == ModeKind::Landing;
}

std::string illegal(Command c, ModeKind m, const std::string& why = {}) {
  std::string msg = std::string("illegal transition: ") + to_string(c) + " in mode " + to_string(m);
  if (!why.empty()) msg += ": " + why;
  return msg;
}

double current_yaw(const tracking::TrackedObject* obj, double fallback) {
  if (!obj || !obj->has_pose()) return fallback;
  try {
    return yaw_of(obj->smoothed.orientation);
  } catch (const Error&) {
    return fallback;
  }
}

}  // namespace

Reply Orchestrator::apply_request(Session& s, const Request& r, const tracking::Snapshot& snapshot,
                                  double now, TickOutput& out) {
  const tracking::TrackedObject* obj = snapshot.find(s.spec.tracked_object_id);
  const auto h = obj ? tracking::health(*obj, now, config_.thresholds)
                     : tracking::TrackingHealth{HealthState::Lost, 0.0};
  const Vec3 here = obj && obj->has_pose() ? obj->smoothed.position : Vec3{};
  Reply reply;
  auto fail = [&](std::string why) {
    reply.ok = false;
    reply.error = std::move(why);
    return reply;
  };

  switch (r.command) {
    case Command::Arm:
      if (s.mode != ModeKind::Idle) return fail(illegal(r.command, s.mode));
      s.armed = true;
      return reply;
    case Command::Disarm:
      if (s.mode != ModeKind::Idle && s.mode != ModeKind::Failsafe)
        return fail(illegal(r.command, s.mode, "land first"));
      s.armed = false;
      return reply;
    case Command::Takeoff: {
      if (s.mode != ModeKind::Idle) return fail(illegal(r.command, s.mode));
      if (!s.armed) return fail(illegal(r.command, s.mode, "not armed"));
      if (h.state != HealthState::Fresh) return fail(illegal(r.command, s.mode, "tracking not fresh"));
      const Vec3 point{here.x, here.y, config_.takeoff_altitude};
      if (!config_.fence.contains(point))
        return fail(illegal(r.command, s.mode, "takeoff position outside the geofence"));
      s.point = point;
      s.hold_yaw = current_yaw(obj, 0.0);
      s.controller = {};
      enter(s, ModeKind::Takeoff, now, out);
      return reply;
    }
    case Command::StartPath: {
      if (!airborne(s.mode) || s.mode == ModeKind::Landing) return fail(illegal(r.command, s.mode));
      auto path = find_path(r.path_id);
      if (!path) return fail("unknown path '" + r.path_id + "'");
      s.path = std::move(path);
      s.held = false;
      const ModeKind next = r.demonstrated ? ModeKind::Playback : ModeKind::Scripted;
      s.mode = ModeKind::Hover;  // force a fresh mode entry so t restarts
      enter(s, next, now, out, s.path->id());
      return reply;
    }
    case Command::StartRealtime:
      if (!airborne(s.mode) || s.mode == ModeKind::Landing) return fail(illegal(r.command, s.mode));
      if (!(r.distance > 0.0)) return fail("pointer distance must be > 0");
      s.controller_id = r.controller_id;
      s.pointer_distance = r.distance;
      s.point = here;
      s.hold_yaw = current_yaw(obj, s.hold_yaw);
      s.held = false;
      enter(s, ModeKind::Realtime, now, out);
      return reply;
    case Command::Hover:
      if (!airborne(s.mode)) return fail(illegal(r.command, s.mode));
      s.point = here;
      s.hold_yaw = current_yaw(obj, s.hold_yaw);
      enter(s, ModeKind::Hover, now, out);
      return reply;
    case Command::Land:
      // Always accepted; idle and failsafe already end on the ground.
      if (airborne(s.mode) && s.mode != ModeKind::Landing) {
        s.point = here;
        s.hold_yaw = current_yaw(obj, s.hold_yaw);
        enter(s, ModeKind::Landing, now, out);
      }
      return reply;
    case Command::Reset:
      if (s.mode == ModeKind::Idle) return reply;
      if (s.mode != ModeKind::Failsafe) return fail(illegal(r.command, s.mode));
      if (s.armed) return fail(illegal(r.command, s.mode, "disarm first"));
      s.controller = {};
      s.has_estimate = false;
      enter(s, ModeKind::Idle, now, out, "reset");
      return reply;
  }
  return fail("unknown command");
}

void Orchestrator::apply_inbox(const tracking::Snapshot& snapshot, double now, TickOutput& out) {
  std::vector<Pending> pending;
  {
    std::lock_guard lock(inbox_mutex_);
    pending.swap(inbox_);
  }
  for (Pending& p : pending) {
    Reply reply{p.ticket, true, {}};
    if (auto* r = std::get_if<Request>(&p.body)) {
      auto it = std::find_if(sessions_.begin(), sessions_.end(),
                             [&](const auto& s) { return s->spec.drone_id == r->drone_id; });
      if (it == sessions_.end()) {
        reply = {p.ticket, false, "unknown drone " + std::to_string(r->drone_id)};
      } else {
        reply = apply_request(**it, *r, snapshot, now, out);
        reply.ticket = p.ticket;
      }
    } else if (auto* zones = std::get_if<std::vector<safety::Zone>>(&p.body)) {
      zones_ = std::move(*zones);
    } else if (auto* gains = std::get_if<std::pair<std::optional<int>, control::ControlConfig>>(&p.body)) {
      bool matched = false;
      for (auto& s : sessions_) {
        if (!gains->first || *gains->first == s->spec.drone_id) {
          s->spec.control = gains->second;
          matched = true;
        }
      }
      if (!matched) reply = {p.ticket, false, "unknown drone " + std::to_string(gains->first.value_or(-1))};
    }
    out.replies.push_back(std::move(reply));
  }
}

TickOutput Orchestrator::tick(std::shared_ptr<const tracking::Snapshot> snapshot_ptr, double now,
                              double dt) {
  if (!snapshot_ptr) snapshot_ptr = std::make_shared<const tracking::Snapshot>();
  if (std::abs(dt - config_.control_period) > 0.2 * config_.control_period)
    throw Error(ErrorCode::InvalidArgument, "tick dt deviates from the control period by more than 20%");
  const tracking::Snapshot& snapshot = *snapshot_ptr;
  TickOutput out;
  out.t = now;
  apply_inbox(snapshot, now, out);

  std::map<int, path::PointerRay> pointers;
  {
    std::lock_guard lock(inbox_mutex_);
    pointers = pointers_;
  }

  const safety::ActiveZones active = safety::active_zones(zones_, snapshot, now, config_.thresholds);
  if (active.degraded != degraded_) {
    degraded_ = active.degraded;
    std::string ids;
    for (const auto& id : active.degraded_ids) ids += (ids.empty() ? "" : ",") + id;
    out.events.push_back({now, 0, "degraded", degraded_ ? "begin " + ids : "end"});
  }

  // Phase 1: health gate, mode target and zone filtering in priority order.
  struct Work {
    Session* s;
    bool control = false;  // closed-loop this tick
    Pose pose;
    Vec3 target;
    double yaw = 0.0;
    safety::FilterResult filtered;
  };
  std::vector<Work> work;
  std::vector<safety::Zone> drone_spheres;
  const double body = config_.d_min / 2.0;

  for (auto& sp : sessions_) {
    Session& s = *sp;
    Work w{&s};
    const tracking::TrackedObject* obj = snapshot.find(s.spec.tracked_object_id);
    const auto h = obj ? tracking::health(*obj, now, config_.thresholds)
                       : tracking::TrackingHealth{HealthState::Lost, 0.0};

    if (airborne(s.mode) && h.state == HealthState::Lost) {
      s.failsafe_throttle = s.last_command.throttle();
      enter(s, ModeKind::Failsafe, now, out, "drone tracking lost");
      out.events.push_back({now, s.spec.drone_id, "failsafe", "drone tracking lost"});
    }

    if (obj && obj->has_pose()) {
      const Pose& p = obj->smoothed;
      if (!s.has_estimate) {
        s.velocity = {};
        s.has_estimate = true;
        s.estimate_t = p.timestamp;
        s.estimate_pos = p.position;
      } else if (p.timestamp > s.estimate_t) {
        const Vec3 raw = (p.position - s.estimate_pos) / (p.timestamp - s.estimate_t);
        s.velocity = config_.velocity_filter * raw + (1.0 - config_.velocity_filter) * s.velocity;
        s.estimate_t = p.timestamp;
        s.estimate_pos = p.position;
      }
      w.pose = p;
    }
    const Vec3 here = w.pose.position;

    switch (s.mode) {
      case ModeKind::Idle:
      case ModeKind::Failsafe:
        break;
      case ModeKind::Takeoff:
        if (distance(here, s.point) < config_.takeoff_tolerance) {
          enter(s, ModeKind::Hover, now, out, "takeoff complete");
        }
        w.target = s.point;
        w.yaw = s.hold_yaw;
        w.control = true;
        break;
      case ModeKind::Hover:
        w.target = s.point;
        w.yaw = s.hold_yaw;
        w.control = true;
        break;
      case ModeKind::Scripted:
      case ModeKind::Playback: {
        if (!active.degraded) s.path_t += dt;
        const path::PathSample ps = path::sample(*s.path, s.path_t);
        w.target = ps.position;
        w.yaw = ps.yaw;
        w.control = true;
        if (ps.done) {
          s.point = ps.position;
          s.hold_yaw = ps.yaw;
          out.events.push_back({now, s.spec.drone_id, "path_done", s.path->id()});
          enter(s, ModeKind::Hover, now, out, "path complete");
        }
        break;
      }
      case ModeKind::Realtime: {
        std::optional<path::PointerRay> ray;
        if (s.controller_id) {
          const auto* ctl = snapshot.find(*s.controller_id);
          if (ctl && tracking::health(*ctl, now, config_.thresholds).state != HealthState::Lost) {
            try {
              ray = path::PointerRay::from_pose(ctl->smoothed, s.pointer_distance);
            } catch (const Error&) {
            }
          }
        } else if (auto it = pointers.find(s.spec.drone_id); it != pointers.end()) {
          ray = it->second;
        }
        if (ray) s.point = path::realtime_target(*ray, config_.altitude);
        w.target = s.point;
        w.yaw = s.hold_yaw;
        w.control = true;
        break;
      }
      case ModeKind::Landing: {
        const double z = std::max(0.0, s.point.z - config_.landing_speed * (now - s.mode_since));
        w.target = {s.point.x, s.point.y, z};
        w.yaw = s.hold_yaw;
        w.control = true;
        if (z <= 0.0 && here.z < config_.landed_height) {
          s.armed = false;
          s.controller = {};
          out.events.push_back({now, s.spec.drone_id, "landed", ""});
          enter(s, ModeKind::Idle, now, out, "landed");
          w.control = false;
        }
        break;
      }
    }

    // Losing a dynamic zone's track freezes every flying drone in place.
    const bool hold = active.degraded && w.control && s.mode != ModeKind::Landing;
    if (hold && !s.held) s.hold_point = here;
    s.held = hold;
    if (hold) w.target = s.hold_point;

    if (w.control) {
      std::vector<safety::Zone> zones = active.zones;
      zones.insert(zones.end(), drone_spheres.begin(), drone_spheres.end());
      w.filtered = safety::filter_target(w.target, here, zones, config_.fence, config_.filter);
      if (w.filtered.verdict != s.verdict) {
        out.events.push_back({now, s.spec.drone_id, "verdict",
                              std::string(safety::to_string(w.filtered.verdict)) +
                                  (w.filtered.zone_id.empty() ? "" : " " + w.filtered.zone_id)});
        s.verdict = w.filtered.verdict;
      }
    } else {
      w.filtered = {here, safety::Verdict::Unchanged, {}};
    }

    // Lower-priority drones keep clear of this one: its position and where it
    // is heading, each a sphere of d_min/2 grown by the other drone's d_min/2.
    if (obj && obj->has_pose()) {
      const std::string id = "drone-" + std::to_string(s.spec.drone_id);
      drone_spheres.push_back({id, safety::Sphere{here, body}, std::nullopt, body});
      if (w.control && distance(w.filtered.safe_target, here) > 1e-6)
        drone_spheres.push_back({id + "-target", safety::Sphere{w.filtered.safe_target, body}, std::nullopt, body});
    }
    work.push_back(std::move(w));
  }

  // Phase 2: pairwise separation over drones with a position.
  std::vector<SeparationEntry> entries;
  std::vector<std::size_t> index;
  for (std::size_t i = 0; i < work.size(); ++i) {
    const auto* obj = snapshot.find(work[i].s->spec.tracked_object_id);
    if (!obj || !obj->has_pose() || work[i].s->mode == ModeKind::Idle) continue;
    entries.push_back({work[i].pose.position, work[i].control ? work[i].filtered.safe_target : work[i].pose.position});
    index.push_back(i);
  }
  const std::vector<Vec3> separated = resolve_separation(entries, config_.d_min, config_.k_rep, dt);
  for (std::size_t k = 0; k < index.size(); ++k) {
    Work& w = work[index[k]];
    if (!w.control || separated[k] == entries[k].target) continue;
    // The push itself must not carry the target into a zone or out of the fence.
    auto refiltered = safety::filter_target(separated[k], w.pose.position, active.zones,
                                            config_.fence, config_.filter);
    w.filtered.safe_target = refiltered.safe_target;
  }

  // Phase 3: control.
  for (Work& w : work) {
    Session& s = *w.s;
    msp::RcCommand cmd;
    if (s.mode == ModeKind::Failsafe) {
      cmd = failsafe_command(s.failsafe_throttle, now - s.mode_since, config_.failsafe_ramp);
    } else if (w.control) {
      auto result = control::control_update(s.spec.control, s.controller, w.pose, s.velocity,
                                            w.filtered.safe_target, w.yaw, dt);
      s.controller = result.state;
      cmd = std::move(result.command);
    } else {
      cmd = msp::RcCommand::neutral();
    }
    cmd.channels[4] = s.armed ? msp::kChannelMax : msp::kChannelMin;
    s.last_command = cmd;
    out.commands.emplace_back(s.spec.drone_id, cmd);

    SessionSummary& sum = s.summary;
    sum.drone_id = s.spec.drone_id;
    sum.tracked_object_id = s.spec.tracked_object_id;
    sum.priority = s.spec.priority;
    sum.mode = s.mode;
    sum.armed = s.armed;
    const auto* obj = snapshot.find(s.spec.tracked_object_id);
    sum.health = obj ? tracking::health(*obj, now, config_.thresholds).state : HealthState::Lost;
    sum.position = w.pose.position;
    sum.velocity = s.velocity;
    sum.target = w.target;
    sum.safe_target = w.filtered.safe_target;
    sum.target_yaw = w.yaw;
    sum.verdict = w.filtered.verdict;
    sum.path_id = s.path && (s.mode == ModeKind::Scripted || s.mode == ModeKind::Playback) ? s.path->id() : "";
    sum.path_t = s.path_t;
    sum.held = s.held;
    sum.command = cmd;
  }

  world_.t = now;
  world_.tracking = snapshot_ptr;
  world_.zones = active.zones;
  world_.degraded = active.degraded;
  world_.sessions.clear();
  for (const auto& s : sessions_) world_.sessions.push_back(s->summary);
  return out;
}

}  // namespace dronos::orch
