#include <cmath>
#include <limits>

#include "doctest.h"
#include "dronos/error.hpp"
#include "dronos/geometry.hpp"
#include "support.hpp"

using namespace dronos;

namespace {

void check_vec(const Vec3& a, const Vec3& b, double tol = 1e-12) {
  CHECK(std::abs(a.x - b.x) <= tol);
  CHECK(std::abs(a.y - b.y) <= tol);
  CHECK(std::abs(a.z - b.z) <= tol);
}

}  // namespace

TEST_CASE("rotate by identity leaves the vector alone") {
  check_vec(rotate(Quat::identity(), {1, 2, 3}), {1, 2, 3});
}

TEST_CASE("quarter turn about +z maps +x to +y") {
  check_vec(rotate(Quat::from_axis_angle({0, 0, 1}, kPi / 2), {1, 0, 0}), {0, 1, 0});
}

TEST_CASE("quarter turn about +y matches the rotation matrix") {
  const Quat q = Quat::from_axis_angle({0, 1, 0}, kPi / 2);
  const Vec3 expected = testing::matrix_rotate(q, {1, 0, 0});
  check_vec(expected, {0, 0, -1});
  check_vec(rotate(q, {1, 0, 0}), expected);
}

TEST_CASE("rotate agrees with the matrix form on random input") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Quat q = testing::random_unit_quat(rng);
    const Vec3 v = testing::random_vec(rng, -10, 10);
    check_vec(rotate(q, v), testing::matrix_rotate(q, v), 1e-9);
    CHECK(std::abs(rotate(q, v).norm() - v.norm()) <= 1e-9 * std::max(1.0, v.norm()));
  }
}

TEST_CASE("rotate then rotate by the conjugate is the identity") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 1000; ++i) {
    const Quat q = testing::random_unit_quat(rng);
    const Vec3 v = testing::random_vec(rng, -5, 5);
    check_vec(rotate(q, rotate(q.conjugate(), v)), v, 1e-9);
  }
}

TEST_CASE("rotate rejects bad input") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(rotate(Quat::identity(), {nan, 0, 0}), Error);
  CHECK_THROWS_AS(rotate(Quat{2, 0, 0, 0}, {1, 0, 0}), Error);
  CHECK_THROWS_AS(rotate(Quat{nan, 0, 0, 0}, {1, 0, 0}), Error);
  try {
    rotate(Quat::identity(), {std::numeric_limits<double>::infinity(), 0, 0});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("yaw_of") {
  CHECK(yaw_of(Quat::identity()) == doctest::Approx(0.0));
  CHECK(yaw_of(Quat::from_axis_angle({0, 0, 1}, kPi / 2)) == doctest::Approx(kPi / 2));

  SUBCASE("composition of two turns about +z adds the angles") {
    const Quat q = Quat::from_axis_angle({0, 0, 1}, deg_to_rad(40)) * Quat::from_axis_angle({0, 0, 1}, deg_to_rad(30));
    CHECK(std::abs(yaw_of(q) - 70.0 * kPi / 180.0) < 1e-12);
  }
  SUBCASE("pitched straight up is degenerate") {
    try {
      yaw_of(Quat::from_axis_angle({0, 1, 0}, -kPi / 2));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateOrientation);
    }
  }
  SUBCASE("roundtrip through yaw_quat over (-pi, pi]") {
    for (int i = -999; i <= 1000; ++i) {
      const double theta = kPi * i / 1000.0;
      CHECK(std::abs(yaw_of(yaw_quat(theta)) - theta) < 1e-9);
    }
  }
}

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(kPi + 0.1) == doctest::Approx(-kPi + 0.1));
  CHECK(wrap_angle(3 * kPi / 2) == doctest::Approx(-kPi / 2));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng);
    const double w = wrap_angle(a);
    CHECK(w > -kPi);
    CHECK(w <= kPi);
    CHECK(std::abs(std::remainder(a - w, 2 * kPi)) < 1e-9);
  }
}

TEST_CASE("normalized") {
  const Quat q = Quat{2, 0, 0, 2}.normalized();
  CHECK(std::abs(q.norm() - 1.0) < 1e-12);
  CHECK_THROWS_AS(Quat({0, 0, 0, 0}).normalized(), Error);
}

TEST_CASE("vector helpers") {
  CHECK(dot({1, 2, 3}, {4, 5, 6}) == 32);
  const Vec3 c = cross({1, 0, 0}, {0, 1, 0});
  CHECK(c == Vec3{0, 0, 1});
  CHECK(hadamard({1, 2, 3}, {2, 2, 2}) == Vec3{2, 4, 6});
  CHECK(distance({0, 0, 0}, {3, 4, 0}) == doctest::Approx(5.0));
}
