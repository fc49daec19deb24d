#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "dronos/flight_path.hpp"
#include "dronos/geometry.hpp"
#include "dronos/tracking.hpp"

namespace dronos::safety {

inline constexpr double kDefaultStandoff = 0.05;
inline constexpr double kStaleInflation = 0.1;

struct Sphere {
  Vec3 center;
  double radius = 0.0;
};

struct Box {
  Vec3 min;
  Vec3 max;
};

using Shape = std::variant<Sphere, Box>;

// A dynamic zone is a sphere that follows a tracked object.
struct DynamicBinding {
  int tracked_object_id = 0;
  double radius = 0.2;
};

struct Zone {
  std::string id;
  Shape shape;
  std::optional<DynamicBinding> dynamic;
  double margin = 0.0;

  bool is_dynamic() const { return dynamic.has_value(); }
  // Throws InvalidArgument on radius <= 0, inverted boxes or negative margin.
  void validate() const;
};

// The permitted flight volume.
struct Geofence {
  Vec3 min{-3.0, -3.0, 0.0};
  Vec3 max{3.0, 3.0, 2.5};

  void validate() const;
  bool contains(const Vec3& p) const;
  Vec3 clamp(const Vec3& p) const;
  Vec3 center() const { return 0.5 * (min + max); }
};

// True iff p lies strictly inside the shape inflated by the margin.
bool is_violating(const Zone& zone, const Vec3& p);

// Signed distance from p to the inflated surface (negative inside).
double surface_distance(const Zone& zone, const Vec3& p);

// Parameter s in [0, 1) where the segment a -> b first enters the open
// inflated shape, if it does.
std::optional<double> segment_entry(const Zone& zone, const Vec3& a, const Vec3& b);

// Nearest point outside the inflated shape, pushed out by standoff. A point at
// the exact center of a sphere leaves along +x, then +y, then +z.
Vec3 exit_point(const Zone& zone, const Vec3& p, double standoff);

enum class Verdict { Unchanged, Clamped, Retreat };
const char* to_string(Verdict v);

struct FilterOptions {
  double standoff = kDefaultStandoff;
  // Stop in place instead of diverting when a dynamic zone blocks the way.
  bool hold_instead = false;
};

struct FilterResult {
  Vec3 safe_target;
  Verdict verdict = Verdict::Unchanged;
  std::string zone_id;  // zone responsible for a clamp or retreat, if any
};

FilterResult filter_target(const Vec3& target, const Vec3& current, const std::vector<Zone>& zones,
                           const Geofence& fence, const FilterOptions& options = {});

struct ActiveZones {
  std::vector<Zone> zones;  // every zone positioned as a plain sphere or box
  bool degraded = false;    // some dynamic zone has lost (or never had) tracking
  std::vector<std::string> degraded_ids;
};

ActiveZones active_zones(const std::vector<Zone>& definitions, const tracking::Snapshot& snapshot,
                         double now, const tracking::HealthThresholds& thresholds = {});

struct PathIssue {
  std::string where;  // "waypoints[i]" or "leg i->j"
  std::string zone_id;
  std::string message;
};

struct PathReport {
  std::vector<PathIssue> issues;
  bool ok() const { return issues.empty(); }
  std::string to_text() const;
};

// Static check: waypoints inside the fence, waypoints and legs clear of every
// static zone. Dynamic zones have no fixed position and are skipped.
PathReport validate_path(const path::FlightPath& path, const std::vector<Zone>& zones,
                         const Geofence& fence);

Vec3 vec_from_json(const nlohmann::json& j, const std::string& where);
nlohmann::json vec_to_json(const Vec3& v);
Zone zone_from_json(const nlohmann::json& j, const std::string& where = "zones[0]");
nlohmann::json zone_to_json(const Zone& zone);
std::vector<Zone> zones_from_json(const nlohmann::json& doc);
nlohmann::json zones_to_json(const std::vector<Zone>& zones);
std::vector<Zone> load_zones(const std::string& file);
Geofence fence_from_json(const nlohmann::json& j);
nlohmann::json fence_to_json(const Geofence& fence);

}  // namespace dronos::safety
