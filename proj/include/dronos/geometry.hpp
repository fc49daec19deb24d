#pragma once

#include <cmath>
#include <numbers>

namespace dronos {

inline constexpr double kGravity = 9.81;
inline constexpr double kPi = std::numbers::pi;

// World frame: right-handed, z up, meters.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  constexpr Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  constexpr Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

  friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
  friend constexpr Vec3 operator/(const Vec3& a, double s) { return {a.x / s, a.y / s, a.z / s}; }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  constexpr double squared_norm() const { return x * x + y * y + z * z; }
  bool is_finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
// Component-wise product.
constexpr Vec3 hadamard(const Vec3& a, const Vec3& b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }
inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

struct Quat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quat identity() { return {}; }
  static Quat from_axis_angle(const Vec3& axis, double angle);

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  bool is_finite() const {
    return std::isfinite(w) && std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
  Quat conjugate() const { return {w, -x, -y, -z}; }
  // Throws InvalidArgument on zero-norm or non-finite input.
  Quat normalized() const;

  friend bool operator==(const Quat&, const Quat&) = default;
};

// Hamilton product; (a * b) applies b first, then a.
Quat operator*(const Quat& a, const Quat& b);

// Pure rotation about +z.
Quat yaw_quat(double yaw);

// Rotates v by the unit quaternion q. Throws InvalidArgument on non-finite
// input or when q is not unit-norm within 1e-6.
Vec3 rotate(const Quat& q, const Vec3& v);

// Heading of the local +x axis projected into the world xy-plane, in (-pi, pi].
// Throws DegenerateOrientation when local +x points along +-z.
double yaw_of(const Quat& q);

// Maps an angle to (-pi, pi].
double wrap_angle(double angle);

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

struct Pose {
  Vec3 position;
  Quat orientation;
  double timestamp = 0.0;  // seconds, microsecond resolution
};

}  // namespace dronos
