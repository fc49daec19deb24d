#include "dronos/geometry.hpp"

#include "dronos/error.hpp"

namespace dronos {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::DegenerateOrientation: return "degenerate orientation";
    case ErrorCode::Range: return "range error";
    case ErrorCode::Shape: return "shape error";
    case ErrorCode::CorruptFrame: return "corrupt frame";
    case ErrorCode::Protocol: return "protocol error";
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::RecordingTooShort: return "recording too short";
    case ErrorCode::IllegalTransition: return "illegal transition";
    case ErrorCode::Config: return "configuration error";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::Violation: return "safety violation";
    case ErrorCode::Timeout: return "timed out";
  }
  return "unknown error";
}

Quat Quat::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0) || !std::isfinite(n) || !std::isfinite(angle))
    throw Error(ErrorCode::InvalidArgument, "axis-angle needs a finite non-zero axis");
  const double s = std::sin(angle / 2.0) / n;
  return {std::cos(angle / 2.0), axis.x * s, axis.y * s, axis.z * s};
}

Quat Quat::normalized() const {
  const double n = norm();
  if (!is_finite() || !(n > 0.0))
    throw Error(ErrorCode::InvalidArgument, "cannot normalize a zero or non-finite quaternion");
  return {w / n, x / n, y / n, z / n};
}

Quat operator*(const Quat& a, const Quat& b) {
  return {
      a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
      a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
      a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
      a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
  };
}

Quat yaw_quat(double yaw) { return {std::cos(yaw / 2.0), 0.0, 0.0, std::sin(yaw / 2.0)}; }

Vec3 rotate(const Quat& q, const Vec3& v) {
  if (!q.is_finite() || !v.is_finite())
    throw Error(ErrorCode::InvalidArgument, "rotate: non-finite input");
  if (std::abs(q.norm() - 1.0) > 1e-6)
    throw Error(ErrorCode::InvalidArgument, "rotate: quaternion is not unit-norm");
  // v' = v + 2w(u x v) + 2 u x (u x v), u = vector part.
  const Vec3 u{q.x, q.y, q.z};
  const Vec3 t = 2.0 * cross(u, v);
  return v + q.w * t + cross(u, t);
}

double yaw_of(const Quat& q) {
  const Vec3 forward = rotate(q, {1.0, 0.0, 0.0});
  if (std::hypot(forward.x, forward.y) < 1e-9)
    throw Error(ErrorCode::DegenerateOrientation, "yaw undefined: forward axis is vertical");
  return wrap_angle(std::atan2(forward.y, forward.x));
}

double wrap_angle(double angle) {
  double a = std::remainder(angle, 2.0 * kPi);  // [-pi, pi]
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

}  // namespace dronos
