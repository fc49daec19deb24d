#include "dronos/flight_path.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dronos/error.hpp"

namespace dronos::path {

namespace {

std::string waypoint_label(std::size_t i) { return "waypoints[" + std::to_string(i) + "]"; }

std::optional<double> heading(const Vec3& from, const Vec3& to) {
  const Vec3 d = to - from;
  if (std::hypot(d.x, d.y) < 1e-9) return std::nullopt;
  return std::atan2(d.y, d.x);
}

}  // namespace

FlightPath::FlightPath(std::string id, std::vector<Waypoint> waypoints, bool loop, double v_max)
    : id_(std::move(id)), waypoints_(std::move(waypoints)), loop_(loop) {
  if (waypoints_.empty())
    throw Error(ErrorCode::InvalidArgument, "flight path needs at least one waypoint");
  for (std::size_t i = 0; i < waypoints_.size(); ++i) {
    const Waypoint& wp = waypoints_[i];
    const std::string label = waypoint_label(i);
    if (!wp.position.is_finite())
      throw Error(ErrorCode::InvalidArgument, label + ": position must be finite");
    if (wp.yaw && !std::isfinite(*wp.yaw))
      throw Error(ErrorCode::InvalidArgument, label + ": yaw must be finite");
    if (!std::isfinite(wp.speed_to) || wp.speed_to <= 0.0)
      throw Error(ErrorCode::InvalidArgument, label + ": speed_to must be positive");
    if (v_max > 0.0 && wp.speed_to > v_max)
      throw Error(ErrorCode::InvalidArgument, label + ": speed_to exceeds v_max");
    if (!std::isfinite(wp.hold) || wp.hold < 0.0)
      throw Error(ErrorCode::InvalidArgument, label + ": hold must be finite and >= 0");
    if (i > 0 && distance(wp.position, waypoints_[i - 1].position) < kDuplicateDistance)
      throw Error(ErrorCode::InvalidArgument, label + ": duplicates the previous waypoint");
  }
  if (loop_ && waypoints_.size() > 1 &&
      distance(waypoints_.back().position, waypoints_.front().position) < kDuplicateDistance)
    throw Error(ErrorCode::InvalidArgument,
                waypoint_label(waypoints_.size() - 1) + ": duplicates the first waypoint of a loop");
  build_timeline();
}

void FlightPath::build_timeline() {
  const std::size_t n = waypoints_.size();
  struct Leg {
    std::size_t from, to;
  };
  std::vector<Leg> legs;
  for (std::size_t i = 1; i < n; ++i) legs.push_back({i - 1, i});
  if (loop_ && n > 1) legs.push_back({n - 1, 0});

  // Auto heading per leg; vertical legs inherit the previous heading.
  std::vector<double> leg_heading(legs.size(), 0.0);
  double start_yaw = 0.0;
  {
    std::optional<double> first;
    for (const Leg& leg : legs) {
      first = heading(waypoints_[leg.from].position, waypoints_[leg.to].position);
      if (first) break;
    }
    double carry = first.value_or(0.0);
    if (loop_) {
      for (auto it = legs.rbegin(); it != legs.rend(); ++it) {
        if (auto h = heading(waypoints_[it->from].position, waypoints_[it->to].position)) {
          carry = *h;
          break;
        }
      }
    }
    const double start_heading = carry;
    carry = first.value_or(0.0);
    for (std::size_t k = 0; k < legs.size(); ++k) {
      if (auto h = heading(waypoints_[legs[k].from].position, waypoints_[legs[k].to].position))
        carry = *h;
      leg_heading[k] = carry;
    }
    start_yaw = start_heading;
  }
  // The first hold faces the leg that leads into it (the closing leg of a
  // loop) or, for open paths, the first leg.
  phases_.clear();
  double t = 0.0;
  const Waypoint& w0 = waypoints_[0];
  phases_.push_back({w0.position, w0.position, t, w0.hold, w0.yaw.value_or(start_yaw)});
  t += w0.hold;
  for (std::size_t k = 0; k < legs.size(); ++k) {
    const Waypoint& a = waypoints_[legs[k].from];
    const Waypoint& b = waypoints_[legs[k].to];
    const double leg_time = distance(a.position, b.position) / b.speed_to;
    const double yaw = b.yaw.value_or(leg_heading[k]);
    phases_.push_back({a.position, b.position, t, leg_time, yaw});
    t += leg_time;
    if (legs[k].to != 0) {
      phases_.push_back({b.position, b.position, t, b.hold, yaw});
      t += b.hold;
    }
  }
  duration_ = t;
}

PathSample sample(const FlightPath& path, double t) {
  const auto& phases = path.phases();
  if (!(t > 0.0)) t = 0.0;
  if (path.loop() && path.duration() > 0.0) {
    t = std::fmod(t, path.duration());
  } else if (t >= path.duration()) {
    const PathPhase& last = phases.back();
    return {last.to, last.yaw, !path.loop()};
  }
  // Last phase whose start <= t.
  auto it = std::upper_bound(phases.begin(), phases.end(), t,
                             [](double value, const PathPhase& p) { return value < p.start; });
  const PathPhase& phase = *std::prev(it);
  const double u = phase.duration > 0.0 ? std::clamp((t - phase.start) / phase.duration, 0.0, 1.0)
                                        : 1.0;
  return {phase.from + u * (phase.to - phase.from), phase.yaw, false};
}

Recorder::Recorder(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 2)) {}

void Recorder::start() {
  trace_.clear();
  has_last_ = false;
  dropped_ = 0;
  active_ = true;
}

bool Recorder::record(const Pose& pose) {
  if (!active_ || !pose.position.is_finite() || (has_last_ && pose.timestamp <= last_timestamp_)) {
    ++dropped_;
    return false;
  }
  if (trace_.size() == capacity_) trace_.pop_front();
  trace_.push_back(pose.position);
  last_timestamp_ = pose.timestamp;
  has_last_ = true;
  return true;
}

FlightPath Recorder::finish(double epsilon, double default_speed, std::string id) const {
  if (trace_.size() < 2)
    throw Error(ErrorCode::RecordingTooShort,
                "recording has " + std::to_string(trace_.size()) + " poses, need at least 2");
  const std::vector<Vec3> raw(trace_.begin(), trace_.end());
  std::vector<Waypoint> waypoints;
  for (const Vec3& p : simplify(raw, epsilon)) {
    // A trace that doubles back on itself can leave coincident neighbours.
    if (!waypoints.empty() && distance(waypoints.back().position, p) < kDuplicateDistance)
      continue;
    waypoints.push_back({p, std::nullopt, default_speed, 0.0});
  }
  return FlightPath(std::move(id), std::move(waypoints));
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squared_norm();
  if (len2 == 0.0) return distance(p, a);
  const double u = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + u * ab);
}

std::vector<std::size_t> simplify_indices(std::span<const Vec3> points, double epsilon) {
  if (!(epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
  const std::size_t n = points.size();
  if (n <= 2) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  std::vector<bool> keep(n, false);
  keep.front() = keep.back() = true;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, n - 1}};
  while (!stack.empty()) {
    auto [first, last] = stack.back();
    stack.pop_back();
    double worst = -1.0;
    std::size_t index = first;
    for (std::size_t i = first + 1; i < last; ++i) {
      const double d = point_segment_distance(points[i], points[first], points[last]);
      if (d > worst) {
        worst = d;
        index = i;
      }
    }
    if (worst > epsilon) {
      keep[index] = true;
      stack.emplace_back(index, last);
      stack.emplace_back(first, index);
    }
  }
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) kept.push_back(i);
  return kept;
}

std::vector<Vec3> simplify(std::span<const Vec3> points, double epsilon) {
  std::vector<Vec3> out;
  for (std::size_t i : simplify_indices(points, epsilon)) out.push_back(points[i]);
  return out;
}

void PointerRay::validate() const {
  if (!origin.is_finite() || !forward.is_finite() || !std::isfinite(distance))
    throw Error(ErrorCode::InvalidArgument, "pointer ray must be finite");
  if (std::abs(forward.norm() - 1.0) > 1e-6)
    throw Error(ErrorCode::InvalidArgument, "pointer ray forward must be a unit vector");
  if (!(distance > 0.0)) throw Error(ErrorCode::InvalidArgument, "pointer distance must be > 0");
}

PointerRay PointerRay::from_pose(const Pose& controller, double distance) {
  PointerRay ray{controller.position, rotate(controller.orientation, {1.0, 0.0, 0.0}), distance};
  ray.validate();
  return ray;
}

Vec3 realtime_target(const PointerRay& ray, const AltitudeLimits& limits) {
  Vec3 target = ray.origin + ray.distance * ray.forward;
  target.z = std::clamp(target.z, limits.z_floor, limits.z_ceiling);
  return target;
}

namespace {

double number_at(const nlohmann::json& obj, const char* key, const std::string& where,
                 std::optional<double> fallback = std::nullopt) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (fallback) return *fallback;
    throw ParseError(where + "." + key, where + "." + key + " is missing");
  }
  if (!it->is_number()) throw ParseError(where + "." + key, where + "." + key + " must be a number");
  return it->get<double>();
}

}  // namespace

FlightPath path_from_json(const nlohmann::json& doc, double v_max) {
  if (!doc.is_object()) throw ParseError(std::string("$"), "flight path must be a JSON object");
  if (auto f = doc.find("format"); f != doc.end() && (!f->is_number_integer() || *f != kFileFormat))
    throw ParseError(std::string("format"), "unsupported flight path format");
  std::string id = "path";
  if (auto it = doc.find("id"); it != doc.end()) {
    if (!it->is_string()) throw ParseError(std::string("id"), "id must be a string");
    id = it->get<std::string>();
  }
  bool loop = false;
  if (auto it = doc.find("loop"); it != doc.end()) {
    if (!it->is_boolean()) throw ParseError(std::string("loop"), "loop must be a boolean");
    loop = it->get<bool>();
  }
  auto wps = doc.find("waypoints");
  if (wps == doc.end() || !wps->is_array() || wps->empty())
    throw ParseError(std::string("waypoints"), "waypoints must be a non-empty array");

  std::vector<Waypoint> waypoints;
  for (std::size_t i = 0; i < wps->size(); ++i) {
    const auto& w = (*wps)[i];
    const std::string where = waypoint_label(i);
    if (!w.is_object()) throw ParseError(where, where + " must be an object");
    Waypoint wp;
    wp.position = {number_at(w, "x", where), number_at(w, "y", where), number_at(w, "z", where)};
    if (auto y = w.find("yaw"); y != w.end()) {
      if (y->is_string() && *y == "auto") {
        wp.yaw.reset();
      } else if (y->is_number()) {
        wp.yaw = wrap_angle(deg_to_rad(y->get<double>()));
      } else {
        throw ParseError(where + ".yaw", where + ".yaw must be degrees or \"auto\"");
      }
    }
    wp.speed_to = number_at(w, "speed_to", where, 0.5);
    wp.hold = number_at(w, "hold", where, 0.0);
    if (!(wp.speed_to > 0.0) || (v_max > 0.0 && wp.speed_to > v_max))
      throw ParseError(where + ".speed_to", where + ".speed_to must be in (0, v_max]");
    if (!(wp.hold >= 0.0)) throw ParseError(where + ".hold", where + ".hold must be >= 0");
    if (i > 0 && distance(wp.position, waypoints.back().position) < kDuplicateDistance)
      throw ParseError(where, where + " duplicates the previous waypoint");
    waypoints.push_back(wp);
  }
  try {
    return FlightPath(std::move(id), std::move(waypoints), loop, v_max);
  } catch (const Error& e) {
    throw ParseError(std::string("waypoints"), e.what());
  }
}

nlohmann::json path_to_json(const FlightPath& path) {
  nlohmann::json wps = nlohmann::json::array();
  for (const Waypoint& wp : path.waypoints()) {
    nlohmann::json w{{"x", wp.position.x}, {"y", wp.position.y}, {"z", wp.position.z},
                     {"speed_to", wp.speed_to}, {"hold", wp.hold}};
    if (wp.yaw)
      w["yaw"] = rad_to_deg(*wp.yaw);
    else
      w["yaw"] = "auto";
    wps.push_back(std::move(w));
  }
  return {{"format", kFileFormat}, {"id", path.id()}, {"loop", path.loop()}, {"waypoints", wps}};
}

FlightPath load_path(const std::string& file, double v_max) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + file);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("$"), file + ": " + e.what());
  }
  return path_from_json(doc, v_max);
}

void save_path(const FlightPath& path, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + file);
  out << path_to_json(path).dump(2) << '\n';
}

}  // namespace dronos::path
