#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dronos/geometry.hpp"

namespace dronos::path {

inline constexpr double kDuplicateDistance = 1e-3;
inline constexpr double kDefaultEpsilon = 0.05;
inline constexpr std::size_t kMaxRecording = 10'000;
inline constexpr int kFileFormat = 1;

struct Waypoint {
  Vec3 position;
  std::optional<double> yaw;  // radians; empty means face the direction of travel
  double speed_to = 0.5;      // cruise speed on the leg arriving here, m/s
  double hold = 0.0;          // seconds

  friend bool operator==(const Waypoint&, const Waypoint&) = default;
};

// One segment of the timeline a path is flown along: a hold at a waypoint or
// a constant-speed leg between two waypoints.
struct PathPhase {
  Vec3 from;
  Vec3 to;
  double start = 0.0;
  double duration = 0.0;
  double yaw = 0.0;
};

// Immutable after construction.
class FlightPath {
 public:
  // Throws InvalidArgument naming the offending waypoint. v_max <= 0 skips the
  // speed bound.
  FlightPath(std::string id, std::vector<Waypoint> waypoints, bool loop = false,
             double v_max = 0.0);

  const std::string& id() const { return id_; }
  const std::vector<Waypoint>& waypoints() const { return waypoints_; }
  bool loop() const { return loop_; }

  // Time to fly once through every waypoint including all holds. For a loop
  // this is one full cycle back to the first waypoint.
  double duration() const { return duration_; }

  const std::vector<PathPhase>& phases() const { return phases_; }

  friend bool operator==(const FlightPath& a, const FlightPath& b) {
    return a.id_ == b.id_ && a.loop_ == b.loop_ && a.waypoints_ == b.waypoints_;
  }

 private:
  void build_timeline();

  std::string id_;
  std::vector<Waypoint> waypoints_;
  bool loop_;
  double duration_ = 0.0;
  std::vector<PathPhase> phases_;
};

struct PathSample {
  Vec3 position;
  double yaw = 0.0;
  bool done = false;
};

PathSample sample(const FlightPath& path, double t);

// Programming by demonstration: collects controller positions, then
// simplifies them into a path.
class Recorder {
 public:
  explicit Recorder(std::size_t capacity = kMaxRecording);

  void start();
  void stop() { active_ = false; }
  bool active() const { return active_; }

  // Returns false (and counts a drop) for non-increasing timestamps or when
  // not recording.
  bool record(const Pose& pose);

  std::size_t size() const { return trace_.size(); }
  std::size_t dropped() const { return dropped_; }
  std::vector<Vec3> trace() const { return {trace_.begin(), trace_.end()}; }

  // Throws RecordingTooShort when fewer than two poses were recorded.
  FlightPath finish(double epsilon = kDefaultEpsilon, double default_speed = 0.5,
                    std::string id = "demonstration") const;

 private:
  std::size_t capacity_;
  std::deque<Vec3> trace_;
  double last_timestamp_ = 0.0;
  bool has_last_ = false;
  std::size_t dropped_ = 0;
  bool active_ = false;
};

// Indices of the vertices kept by Ramer-Douglas-Peucker with point-to-segment
// distance. First and last indices are always kept.
std::vector<std::size_t> simplify_indices(std::span<const Vec3> points, double epsilon);
std::vector<Vec3> simplify(std::span<const Vec3> points, double epsilon);

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);

struct PointerRay {
  Vec3 origin;
  Vec3 forward{1.0, 0.0, 0.0};
  double distance = 1.0;

  // Throws InvalidArgument unless |forward| = 1 within 1e-6 and distance > 0.
  void validate() const;
  static PointerRay from_pose(const Pose& controller, double distance);
};

struct AltitudeLimits {
  double z_floor = 0.3;
  double z_ceiling = 2.5;
};

Vec3 realtime_target(const PointerRay& ray, const AltitudeLimits& limits = {});

// JSON file format (yaw in degrees inside files only).
FlightPath path_from_json(const nlohmann::json& doc, double v_max = 0.0);
nlohmann::json path_to_json(const FlightPath& path);
FlightPath load_path(const std::string& file, double v_max = 0.0);
void save_path(const FlightPath& path, const std::string& file);

}  // namespace dronos::path
