#include "dronos/safety.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <sstream>

#include "dronos/error.hpp"

namespace dronos::safety {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

struct Inflated {
  bool sphere;
  Vec3 center;
  double radius;
  Vec3 lo;
  Vec3 hi;
};

Inflated inflate(const Zone& zone) {
  return std::visit(
      overloaded{
          [&](const Sphere& s) { return Inflated{true, s.center, s.radius + zone.margin, {}, {}}; },
          [&](const Box& b) {
            const Vec3 m{zone.margin, zone.margin, zone.margin};
            return Inflated{false, {}, 0.0, b.min - m, b.max + m};
          },
      },
      zone.shape);
}

double axis(const Vec3& v, int i) { return i == 0 ? v.x : (i == 1 ? v.y : v.z); }
void set_axis(Vec3& v, int i, double value) { (i == 0 ? v.x : (i == 1 ? v.y : v.z)) = value; }

// Walks outward along a fan of directions and returns the closest point that
// clears every zone by the standoff while staying inside the inset fence.
std::optional<Vec3> march_out(const std::vector<Zone>& zones, const Geofence& fence,
                              const Vec3& from, const Vec3& preferred, double standoff) {
  std::vector<Vec3> dirs;
  if (preferred.norm() > 1e-12) dirs.push_back(preferred / preferred.norm());
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dz = -1; dz <= 1; ++dz)
        if (dx || dy || dz) {
          const Vec3 d{double(dx), double(dy), double(dz)};
          dirs.push_back(d / d.norm());
        }
  const Vec3 lo = fence.min + Vec3{standoff, standoff, standoff};
  const Vec3 hi = fence.max - Vec3{standoff, standoff, standoff};
  std::optional<Vec3> best;
  double best_travel = 0.0;
  constexpr double kStep = 0.005;
  for (const Vec3& d : dirs) {
    for (double s = kStep; !best || s < best_travel; s += kStep) {
      const Vec3 p = from + s * d;
      if (p.x < lo.x || p.y < lo.y || p.z < lo.z || p.x > hi.x || p.y > hi.y || p.z > hi.z) break;
      bool clear = true;
      for (const Zone& z : zones) clear = clear && surface_distance(z, p) >= standoff;
      if (clear) {
        best = p;
        best_travel = s;
        break;
      }
    }
  }
  return best;
}

}  // namespace

void Zone::validate() const {
  if (!std::isfinite(margin) || margin < 0.0)
    throw Error(ErrorCode::InvalidArgument, "zone '" + id + "': margin must be >= 0");
  if (dynamic && !(dynamic->radius > 0.0))
    throw Error(ErrorCode::InvalidArgument, "zone '" + id + "': radius must be > 0");
  std::visit(overloaded{
                 [&](const Sphere& s) {
                   if (!s.center.is_finite() || !(s.radius > 0.0))
                     throw Error(ErrorCode::InvalidArgument, "zone '" + id + "': radius must be > 0");
                 },
                 [&](const Box& b) {
                   if (!b.min.is_finite() || !b.max.is_finite() || !(b.min.x < b.max.x) ||
                       !(b.min.y < b.max.y) || !(b.min.z < b.max.z))
                     throw Error(ErrorCode::InvalidArgument,
                                 "zone '" + id + "': box min must be below max on every axis");
                 },
             },
             shape);
}

void Geofence::validate() const {
  if (!min.is_finite() || !max.is_finite() || !(min.x < max.x) || !(min.y < max.y) ||
      !(min.z < max.z))
    throw Error(ErrorCode::InvalidArgument, "geofence min must be below max on every axis");
}

bool Geofence::contains(const Vec3& p) const {
  return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
         p.z <= max.z;
}

Vec3 Geofence::clamp(const Vec3& p) const {
  return {std::clamp(p.x, min.x, max.x), std::clamp(p.y, min.y, max.y),
          std::clamp(p.z, min.z, max.z)};
}

bool is_violating(const Zone& zone, const Vec3& p) {
  const Inflated z = inflate(zone);
  if (z.sphere) return (p - z.center).squared_norm() < z.radius * z.radius;
  return p.x > z.lo.x && p.x < z.hi.x && p.y > z.lo.y && p.y < z.hi.y && p.z > z.lo.z &&
         p.z < z.hi.z;
}

double surface_distance(const Zone& zone, const Vec3& p) {
  const Inflated z = inflate(zone);
  if (z.sphere) return distance(p, z.center) - z.radius;
  // Signed distance to an axis-aligned box.
  const Vec3 c = 0.5 * (z.lo + z.hi);
  const Vec3 h = 0.5 * (z.hi - z.lo);
  const Vec3 q{std::abs(p.x - c.x) - h.x, std::abs(p.y - c.y) - h.y, std::abs(p.z - c.z) - h.z};
  const Vec3 outside{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
  return outside.norm() + std::min(std::max({q.x, q.y, q.z}), 0.0);
}

std::optional<double> segment_entry(const Zone& zone, const Vec3& a, const Vec3& b) {
  const Inflated z = inflate(zone);
  const Vec3 d = b - a;
  if (z.sphere) {
    const Vec3 f = a - z.center;
    const double qa = d.squared_norm();
    const double qc = f.squared_norm() - z.radius * z.radius;
    if (qa == 0.0) return qc < 0.0 ? std::optional<double>(0.0) : std::nullopt;
    const double qb = 2.0 * dot(f, d);
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc <= 0.0) return std::nullopt;
    const double root = std::sqrt(disc);
    const double s1 = (-qb - root) / (2.0 * qa);
    const double s2 = (-qb + root) / (2.0 * qa);
    if (s2 <= 0.0 || s1 >= 1.0) return std::nullopt;
    return std::max(s1, 0.0);
  }
  double enter = -std::numeric_limits<double>::infinity();
  double leave = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const double ai = axis(a, i);
    const double di = axis(d, i);
    const double lo = axis(z.lo, i);
    const double hi = axis(z.hi, i);
    if (di == 0.0) {
      if (ai <= lo || ai >= hi) return std::nullopt;
      continue;
    }
    double t0 = (lo - ai) / di;
    double t1 = (hi - ai) / di;
    if (t0 > t1) std::swap(t0, t1);
    enter = std::max(enter, t0);
    leave = std::min(leave, t1);
  }
  if (!(enter < leave) || leave <= 0.0 || enter >= 1.0) return std::nullopt;
  return std::max(enter, 0.0);
}

Vec3 exit_point(const Zone& zone, const Vec3& p, double standoff) {
  const Inflated z = inflate(zone);
  if (z.sphere) {
    Vec3 dir = p - z.center;
    const double n = dir.norm();
    dir = n > 1e-12 ? dir / n : Vec3{1.0, 0.0, 0.0};
    return z.center + (z.radius + standoff) * dir;
  }
  // Leave through the nearest face; ties go +x, -x, +y, -y, +z, -z.
  double best = std::numeric_limits<double>::infinity();
  int best_axis = 0;
  bool best_positive = true;
  for (int i = 0; i < 3; ++i) {
    const double up = axis(z.hi, i) - axis(p, i);
    const double down = axis(p, i) - axis(z.lo, i);
    if (up < best) {
      best = up;
      best_axis = i;
      best_positive = true;
    }
    if (down < best) {
      best = down;
      best_axis = i;
      best_positive = false;
    }
  }
  Vec3 out = p;
  set_axis(out, best_axis,
           best_positive ? axis(z.hi, best_axis) + standoff : axis(z.lo, best_axis) - standoff);
  return out;
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Unchanged: return "unchanged";
    case Verdict::Clamped: return "clamped";
    case Verdict::Retreat: return "retreat";
  }
  return "unknown";
}

namespace {

Vec3 inset_clamp(const Geofence& fence, const Vec3& p, double inset) {
  Vec3 lo = fence.min + Vec3{inset, inset, inset};
  Vec3 hi = fence.max - Vec3{inset, inset, inset};
  const Vec3 c = fence.center();
  if (lo.x > hi.x) lo.x = hi.x = c.x;
  if (lo.y > hi.y) lo.y = hi.y = c.y;
  if (lo.z > hi.z) lo.z = hi.z = c.z;
  return {std::clamp(p.x, lo.x, hi.x), std::clamp(p.y, lo.y, hi.y), std::clamp(p.z, lo.z, hi.z)};
}

const Zone* first_violated(const std::vector<Zone>& zones, const Vec3& p) {
  for (const Zone& z : zones)
    if (is_violating(z, p)) return &z;
  return nullptr;
}

}  // namespace

FilterResult filter_target(const Vec3& target, const Vec3& current, const std::vector<Zone>& zones,
                           const Geofence& fence, const FilterOptions& options) {
  if (const Zone* inside = first_violated(zones, current)) {
    FilterResult r{current, Verdict::Retreat, inside->id};
    // Overlapping zones can push the exit point into a neighbour; keep exiting.
    for (std::size_t pass = 0; pass <= zones.size(); ++pass) {
      const Zone* z = first_violated(zones, r.safe_target);
      if (!z) break;
      r.safe_target = exit_point(*z, r.safe_target, options.standoff);
    }
    r.safe_target = inset_clamp(fence, r.safe_target, options.standoff);
    if (first_violated(zones, r.safe_target)) {
      const Vec3 radial = exit_point(*inside, current, options.standoff) - current;
      if (auto p = march_out(zones, fence, current, radial, options.standoff)) r.safe_target = *p;
    }
    return r;
  }

  FilterResult r{fence.clamp(target), Verdict::Unchanged, {}};
  if (!fence.contains(current)) {
    r.verdict = Verdict::Retreat;
    r.safe_target = inset_clamp(fence, current, options.standoff);
  } else if (!(r.safe_target == target)) {
    r.verdict = Verdict::Clamped;
  }

  const Vec3 seg = r.safe_target - current;
  const double length = seg.norm();
  std::optional<double> first;
  const Zone* blocker = nullptr;
  for (const Zone& z : zones) {
    if (auto s = segment_entry(z, current, r.safe_target); s && (!first || *s < *first)) {
      first = s;
      blocker = &z;
    }
  }
  if (first) {
    const double travel = std::max(0.0, *first * length - options.standoff);
    if (options.hold_instead && blocker->is_dynamic())
      r.safe_target = current;
    else
      r.safe_target = length > 0.0 ? current + (travel / length) * seg : current;
    if (r.verdict == Verdict::Unchanged) r.verdict = Verdict::Clamped;
    r.zone_id = blocker->id;
  }
  return r;
}

ActiveZones active_zones(const std::vector<Zone>& definitions, const tracking::Snapshot& snapshot,
                         double now, const tracking::HealthThresholds& thresholds) {
  ActiveZones out;
  for (const Zone& def : definitions) {
    if (!def.is_dynamic()) {
      out.zones.push_back(def);
      continue;
    }
    const tracking::TrackedObject* obj = snapshot.find(def.dynamic->tracked_object_id);
    if (!obj || !obj->has_pose()) {
      out.degraded = true;
      out.degraded_ids.push_back(def.id);
      continue;
    }
    const auto h = tracking::health(*obj, now, thresholds);
    double radius = def.dynamic->radius;
    if (h.state != tracking::HealthState::Fresh) radius += kStaleInflation;
    if (h.state == tracking::HealthState::Lost) {
      out.degraded = true;
      out.degraded_ids.push_back(def.id);
    }
    Zone positioned = def;
    positioned.shape = Sphere{obj->smoothed.position, radius};
    out.zones.push_back(std::move(positioned));
  }
  return out;
}

std::string PathReport::to_text() const {
  if (issues.empty()) return "ok: path is clear of the fence and all static zones\n";
  std::ostringstream os;
  for (const PathIssue& issue : issues) {
    os << "violation: " << issue.where;
    if (!issue.zone_id.empty()) os << " zone '" << issue.zone_id << "'";
    os << ": " << issue.message << '\n';
  }
  return os.str();
}

PathReport validate_path(const path::FlightPath& path, const std::vector<Zone>& zones,
                         const Geofence& fence) {
  PathReport report;
  const auto& wps = path.waypoints();
  for (std::size_t i = 0; i < wps.size(); ++i) {
    const std::string where = "waypoints[" + std::to_string(i) + "]";
    if (!fence.contains(wps[i].position))
      report.issues.push_back({where, "", "outside the geofence"});
    for (const Zone& z : zones) {
      if (!z.is_dynamic() && is_violating(z, wps[i].position))
        report.issues.push_back({where, z.id, "inside no-fly zone"});
    }
  }
  auto check_leg = [&](std::size_t a, std::size_t b) {
    for (const Zone& z : zones) {
      if (z.is_dynamic()) continue;
      if (segment_entry(z, wps[a].position, wps[b].position))
        report.issues.push_back(
            {"leg " + std::to_string(a) + "->" + std::to_string(b), z.id, "crosses no-fly zone"});
    }
  };
  for (std::size_t i = 1; i < wps.size(); ++i) check_leg(i - 1, i);
  if (path.loop() && wps.size() > 1) check_leg(wps.size() - 1, 0);
  return report;
}

Vec3 vec_from_json(const nlohmann::json& j, const std::string& where) {
  auto num = [&](const nlohmann::json& v, const std::string& field) {
    if (!v.is_number()) throw ParseError(where + field, where + field + " must be a number");
    return v.get<double>();
  };
  if (j.is_array() && j.size() == 3) return {num(j[0], "[0]"), num(j[1], "[1]"), num(j[2], "[2]")};
  if (j.is_object()) {
    for (const char* k : {"x", "y", "z"})
      if (!j.contains(k)) throw ParseError(where + "." + k, where + "." + k + " is missing");
    return {num(j["x"], ".x"), num(j["y"], ".y"), num(j["z"], ".z")};
  }
  throw ParseError(where, where + " must be {x, y, z} or [x, y, z]");
}

nlohmann::json vec_to_json(const Vec3& v) { return {{"x", v.x}, {"y", v.y}, {"z", v.z}}; }

Zone zone_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where, where + " must be an object");
  auto number = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number())
      throw ParseError(where + "." + key, where + "." + key + " must be a number");
    return it->get<double>();
  };
  Zone z;
  z.id = j.value("id", where);
  z.margin = j.contains("margin") ? number("margin") : 0.0;
  const std::string kind = j.value("kind", "static");
  if (kind == "dynamic") {
    auto it = j.find("tracked_object_id");
    if (it == j.end() || !it->is_number_integer())
      throw ParseError(where + ".tracked_object_id", where + ".tracked_object_id must be an integer");
    z.dynamic = DynamicBinding{it->get<int>(), number("radius")};
    z.shape = Sphere{{}, z.dynamic->radius};
  } else if (kind == "static") {
    const std::string shape = j.value("shape", "sphere");
    if (shape == "sphere") {
      if (!j.contains("center")) throw ParseError(where + ".center", where + ".center is missing");
      z.shape = Sphere{vec_from_json(j["center"], where + ".center"), number("radius")};
    } else if (shape == "box") {
      if (!j.contains("min") || !j.contains("max"))
        throw ParseError(where, where + " box needs min and max");
      z.shape = Box{vec_from_json(j["min"], where + ".min"), vec_from_json(j["max"], where + ".max")};
    } else {
      throw ParseError(where + ".shape", where + ".shape must be \"sphere\" or \"box\"");
    }
  } else {
    throw ParseError(where + ".kind", where + ".kind must be \"static\" or \"dynamic\"");
  }
  try {
    z.validate();
  } catch (const Error& e) {
    throw ParseError(where, e.what());
  }
  return z;
}

nlohmann::json zone_to_json(const Zone& zone) {
  nlohmann::json j{{"id", zone.id}, {"margin", zone.margin}};
  if (zone.dynamic) {
    j["kind"] = "dynamic";
    j["tracked_object_id"] = zone.dynamic->tracked_object_id;
    j["radius"] = zone.dynamic->radius;
    return j;
  }
  j["kind"] = "static";
  std::visit(overloaded{
                 [&](const Sphere& s) {
                   j["shape"] = "sphere";
                   j["center"] = vec_to_json(s.center);
                   j["radius"] = s.radius;
                 },
                 [&](const Box& b) {
                   j["shape"] = "box";
                   j["min"] = vec_to_json(b.min);
                   j["max"] = vec_to_json(b.max);
                 },
             },
             zone.shape);
  return j;
}

std::vector<Zone> zones_from_json(const nlohmann::json& doc) {
  const nlohmann::json* list = &doc;
  if (doc.is_object() && doc.contains("zones")) list = &doc["zones"];
  if (!list->is_array()) throw ParseError(std::string("zones"), "zones must be a JSON array");
  std::vector<Zone> zones;
  for (std::size_t i = 0; i < list->size(); ++i)
    zones.push_back(zone_from_json((*list)[i], "zones[" + std::to_string(i) + "]"));
  return zones;
}

nlohmann::json zones_to_json(const std::vector<Zone>& zones) {
  nlohmann::json list = nlohmann::json::array();
  for (const Zone& z : zones) list.push_back(zone_to_json(z));
  return list;
}

std::vector<Zone> load_zones(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::Io, "cannot open zones file " + file);
  try {
    return zones_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("$"), file + ": " + e.what());
  }
}

Geofence fence_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("min") || !j.contains("max"))
    throw ParseError(std::string("fence"), "fence needs min and max");
  Geofence f{vec_from_json(j["min"], "fence.min"), vec_from_json(j["max"], "fence.max")};
  try {
    f.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("fence"), e.what());
  }
  return f;
}

nlohmann::json fence_to_json(const Geofence& fence) {
  return {{"min", vec_to_json(fence.min)}, {"max", vec_to_json(fence.max)}};
}

}  // namespace dronos::safety
