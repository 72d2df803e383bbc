#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "lics/geometry.hpp"

using namespace lics;

TEST_SUITE("geometry") {

TEST_CASE("normalize_angle keeps (-pi, pi]") {
  constexpr double pi = std::numbers::pi;
  CHECK(normalize_angle(pi) == pi);
  CHECK(normalize_angle(-pi) == doctest::Approx(pi));
  CHECK(normalize_angle(3 * pi / 2) == doctest::Approx(-pi / 2));
  CHECK(normalize_angle(0.25) == 0.25);
  for (double a = -20.0; a < 20.0; a += 0.37) {
    const double n = normalize_angle(a);
    CHECK(n > -pi);
    CHECK(n <= pi);
    CHECK(std::remainder(n - a, 2 * pi) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("frame transforms invert each other") {
  const Pose2 pose{1.5, -0.5, 0.7};
  const Vec2 p(0.3, 2.0);
  const Vec2 back = to_world_frame(pose, to_robot_frame(pose, p));
  CHECK((back - p).norm() < 1e-12);
  const Vec2 ahead = to_robot_frame({0, 0, std::numbers::pi / 2}, {0, 1});
  CHECK(ahead.x() == doctest::Approx(1.0));
  CHECK(std::abs(ahead.y()) < 1e-12);
}

TEST_CASE("integrate_arc closed form") {
  const Pose2 a = integrate_arc({}, 1.0, 1.0, std::numbers::pi / 2);
  CHECK(a.x == doctest::Approx(1.0));
  CHECK(a.y == doctest::Approx(1.0));
  CHECK(a.theta == doctest::Approx(std::numbers::pi / 2));

  const Pose2 s = integrate_arc({1, 2, 0.3}, 2.0, 0.0, 0.5);
  CHECK(s.x == doctest::Approx(1 + std::cos(0.3)));
  CHECK(s.y == doctest::Approx(2 + std::sin(0.3)));
  CHECK(s.theta == 0.3);
}

TEST_CASE("symmetric_sample is antisymmetric on symmetric ranges") {
  for (int n : {2, 3, 11, 21}) {
    for (int i = 0; i < n; ++i) {
      CHECK(symmetric_sample(-0.6, 0.6, i, n) == -symmetric_sample(-0.6, 0.6, n - 1 - i, n));
    }
    CHECK(symmetric_sample(-0.6, 0.6, 0, n) == -0.6);
    CHECK(symmetric_sample(-0.6, 0.6, n - 1, n) == 0.6);
  }
  CHECK(symmetric_sample(-1.0, 1.0, 10, 21) == 0.0);
}

TEST_CASE("derive_seed separates streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 50; ++a)
    for (std::uint64_t b = 0; b < 4; ++b) seen.insert(derive_seed(7, a, b));
  CHECK(seen.size() == 200);
  CHECK(derive_seed(7, 3, 1) == derive_seed(7, 3, 1));
  CHECK(derive_seed(7, 3) != derive_seed(8, 3));
}

TEST_CASE("circumscribed radius of the default body") {
  CHECK(Footprint{}.circumscribed_radius() == doctest::Approx(std::hypot(0.25, 0.215)));
}

}
