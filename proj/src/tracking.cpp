#include "dronos/tracking.hpp"

#include <array>
#include <charconv>
#include <cstdio>

#include "dronos/error.hpp"

namespace dronos::tracking {

const char* to_string(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::Drone: return "drone";
    case ObjectKind::Controller: return "controller";
    case ObjectKind::User: return "user";
  }
  return "unknown";
}

ObjectKind object_kind_from_string(std::string_view name) {
  if (name == "drone") return ObjectKind::Drone;
  if (name == "controller") return ObjectKind::Controller;
  if (name == "user") return ObjectKind::User;
  throw Error(ErrorCode::InvalidArgument, "unknown object kind '" + std::string(name) + "'");
}

const char* to_string(HealthState state) {
  switch (state) {
    case HealthState::Fresh: return "fresh";
    case HealthState::Stale: return "stale";
    case HealthState::Lost: return "lost";
  }
  return "unknown";
}

namespace {

template <typename T>
T parse_number(std::string_view text, int field) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw ParseError(field, "field " + std::to_string(field) + " is not a number: '" +
                                std::string(text) + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value))
      throw ParseError(field, "field " + std::to_string(field) + " is not finite");
  }
  return value;
}

}  // namespace

Datagram parse_datagram(std::string_view line) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);

  std::array<std::string_view, 10> fields;
  std::size_t count = 0;
  std::size_t pos = 0;
  while (pos < line.size()) {
    if (line[pos] == ' ') {
      ++pos;
      continue;
    }
    std::size_t end = line.find(' ', pos);
    if (end == std::string_view::npos) end = line.size();
    if (count == fields.size())
      throw ParseError(static_cast<int>(count), "too many fields in datagram");
    fields[count++] = line.substr(pos, end - pos);
    pos = end;
  }
  if (count != fields.size())
    throw ParseError(static_cast<int>(count),
                     "expected 10 fields, got " + std::to_string(count));
  if (fields[0] != "TRK") throw ParseError(0, "datagram must start with TRK");

  Datagram d;
  d.id = parse_number<int>(fields[1], 1);
  const auto t_us = parse_number<std::int64_t>(fields[2], 2);
  if (t_us < 0) throw ParseError(2, "timestamp must be non-negative");
  d.pose.timestamp = static_cast<double>(t_us) * 1e-6;
  d.pose.position = {parse_number<double>(fields[3], 3), parse_number<double>(fields[4], 4),
                     parse_number<double>(fields[5], 5)};
  const Quat q{parse_number<double>(fields[6], 6), parse_number<double>(fields[7], 7),
               parse_number<double>(fields[8], 8), parse_number<double>(fields[9], 9)};
  if (!(q.norm() > 1e-12)) throw ParseError(6, "zero-norm quaternion");
  d.pose.orientation = q.normalized();
  return d;
}

std::string format_datagram(int id, const Pose& pose) {
  const auto t_us = static_cast<long long>(std::llround(pose.timestamp * 1e6));
  char buf[256];
  std::snprintf(buf, sizeof buf, "TRK %d %lld %.6f %.6f %.6f %.9f %.9f %.9f %.9f\n", id, t_us,
                pose.position.x, pose.position.y, pose.position.z, pose.orientation.w,
                pose.orientation.x, pose.orientation.y, pose.orientation.z);
  return buf;
}

TrackedObject update(TrackedObject obj, const Pose& pose, double alpha,
                     std::optional<double> received_at) {
  if (obj.has_pose() && pose.timestamp < obj.latest.timestamp) {
    ++obj.dropped_stale;
    return obj;
  }
  if (!obj.has_pose()) {
    obj.smoothed = pose;
  } else {
    obj.smoothed.position = alpha * pose.position + (1.0 - alpha) * obj.smoothed.position;
    obj.smoothed.orientation = pose.orientation;
    obj.smoothed.timestamp = pose.timestamp;
  }
  obj.latest = pose;
  obj.last_update = received_at.value_or(pose.timestamp);
  ++obj.updates;
  return obj;
}

TrackingHealth health(const TrackedObject& obj, double now, double stale_after,
                      double lost_after) {
  if (!obj.has_pose()) return {HealthState::Lost, std::numeric_limits<double>::infinity()};
  const double age = now - obj.last_update;
  if (age >= lost_after) return {HealthState::Lost, age};
  if (age >= stale_after) return {HealthState::Stale, age};
  return {HealthState::Fresh, age};
}

double SmoothingConfig::alpha_for(ObjectKind kind) const {
  switch (kind) {
    case ObjectKind::Drone: return drone;
    case ObjectKind::Controller: return controller;
    case ObjectKind::User: return user;
  }
  return kDefaultAlpha;
}

Registry::Registry(SmoothingConfig smoothing)
    : smoothing_(smoothing), published_(std::make_shared<const Snapshot>()) {}

void Registry::register_object(int id, ObjectKind kind) {
  auto it = working_.objects.find(id);
  if (it != working_.objects.end()) {
    if (it->second.kind != kind)
      throw Error(ErrorCode::InvalidArgument,
                  "object " + std::to_string(id) + " already registered as " +
                      to_string(it->second.kind));
    return;
  }
  TrackedObject obj;
  obj.id = id;
  obj.kind = kind;
  working_.objects.emplace(id, obj);
  publish();
}

bool Registry::ingest(std::string_view line, double received_at) {
  Datagram d;
  try {
    d = parse_datagram(line);
  } catch (const ParseError&) {
    ++working_.parse_errors;
    publish();
    return false;
  }
  if (!working_.objects.contains(d.id)) {
    ++working_.unknown_ids;
    publish();
    return false;
  }
  ingest(d, received_at);
  return true;
}

void Registry::ingest(const Datagram& datagram, double received_at) {
  auto it = working_.objects.find(datagram.id);
  if (it == working_.objects.end()) {
    ++working_.unknown_ids;
  } else {
    it->second = update(std::move(it->second), datagram.pose,
                        smoothing_.alpha_for(it->second.kind), received_at);
  }
  publish();
}

void Registry::publish() {
  auto next = std::make_shared<const Snapshot>(working_);
  std::lock_guard lock(publish_mutex_);
  published_ = std::move(next);
}

std::shared_ptr<const Snapshot> Registry::snapshot() const {
  std::lock_guard lock(publish_mutex_);
  return published_;
}

}  // namespace dronos::tracking
