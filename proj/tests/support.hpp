#pragma once

#include <cstdint>
#include <random>

#include "dronos/geometry.hpp"

namespace testing {

inline dronos::Vec3 random_vec(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

inline dronos::Quat random_unit_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    dronos::Quat q{n(rng), n(rng), n(rng), n(rng)};
    const double norm = std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
    if (norm > 1e-3) return {q.w / norm, q.x / norm, q.y / norm, q.z / norm};
  }
}

// Rotation matrix of a unit quaternion, written out independently of rotate().
inline dronos::Vec3 matrix_rotate(const dronos::Quat& q, const dronos::Vec3& v) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  const double m[3][3] = {
      {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
      {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
      {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)},
  };
  return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z, m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
          m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

}  // namespace testing
