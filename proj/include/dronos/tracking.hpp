#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "dronos/geometry.hpp"

namespace dronos::tracking {

inline constexpr int kDefaultPort = 47800;
inline constexpr double kDefaultAlpha = 0.35;
inline constexpr double kDefaultStaleAfter = 0.1;
inline constexpr double kDefaultLostAfter = 0.2;

enum class ObjectKind { Drone, Controller, User };
const char* to_string(ObjectKind kind);
ObjectKind object_kind_from_string(std::string_view name);

struct Datagram {
  int id = 0;
  Pose pose;
};

// "TRK <id> <t_us> <x> <y> <z> <qw> <qx> <qy> <qz>" with an optional trailing
// newline. The quaternion is normalized. Throws ParseError carrying the
// zero-based field index ("TRK" is field 0).
Datagram parse_datagram(std::string_view line);

// Inverse of parse_datagram; always newline-terminated.
std::string format_datagram(int id, const Pose& pose);

struct TrackedObject {
  int id = 0;
  ObjectKind kind = ObjectKind::Drone;
  Pose latest;
  Pose smoothed;
  double last_update = -1.0;  // negative until the first pose arrives
  std::uint64_t updates = 0;
  std::uint64_t dropped_stale = 0;

  bool has_pose() const { return updates > 0; }
};

// Exponential smoothing of position; orientation is replaced. Datagrams older
// than the latest accepted one are dropped and counted. received_at defaults
// to the pose timestamp.
TrackedObject update(TrackedObject obj, const Pose& pose, double alpha,
                     std::optional<double> received_at = std::nullopt);

enum class HealthState { Fresh, Stale, Lost };
const char* to_string(HealthState state);

struct TrackingHealth {
  HealthState state = HealthState::Lost;
  double age = 0.0;
};

struct HealthThresholds {
  double stale_after = kDefaultStaleAfter;
  double lost_after = kDefaultLostAfter;
};

TrackingHealth health(const TrackedObject& obj, double now, double stale_after,
                      double lost_after);
inline TrackingHealth health(const TrackedObject& obj, double now, const HealthThresholds& t) {
  return health(obj, now, t.stale_after, t.lost_after);
}

// Immutable view of every tracked object at one instant.
struct Snapshot {
  std::map<int, TrackedObject> objects;
  std::uint64_t unknown_ids = 0;
  std::uint64_t parse_errors = 0;

  const TrackedObject* find(int id) const {
    auto it = objects.find(id);
    return it == objects.end() ? nullptr : &it->second;
  }
};

struct SmoothingConfig {
  double drone = kDefaultAlpha;
  double controller = kDefaultAlpha;
  double user = kDefaultAlpha;
  double alpha_for(ObjectKind kind) const;
};

// Registry of known objects. One ingestion context calls ingest(); any number
// of readers take snapshots without blocking it for longer than a pointer swap.
class Registry {
 public:
  explicit Registry(SmoothingConfig smoothing = {});

  // Kind is fixed at registration; re-registering with another kind throws.
  void register_object(int id, ObjectKind kind);

  // Returns false if the line failed to parse or names an unregistered id.
  bool ingest(std::string_view line, double received_at);
  void ingest(const Datagram& datagram, double received_at);

  std::shared_ptr<const Snapshot> snapshot() const;

 private:
  void publish();

  SmoothingConfig smoothing_;
  Snapshot working_;
  mutable std::mutex publish_mutex_;
  std::shared_ptr<const Snapshot> published_;
};

}  // namespace dronos::tracking
