#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace lics {

using Vec2 = Eigen::Vector2d;

/// Planar pose in the world frame. theta is kept in (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Vec2 position() const { return {x, y}; }
  bool operator==(const Pose2&) const = default;
};

/// Velocity command for a differential-drive base.
struct Action {
  double v = 0.0;  // m/s
  double w = 0.0;  // rad/s

  bool operator==(const Action&) const = default;
};

/// Wraps an angle into (-pi, pi]. Angles already in range are returned untouched.
double normalize_angle(double angle);

Vec2 to_robot_frame(const Pose2& pose, const Vec2& world_point);
Vec2 to_world_frame(const Pose2& pose, const Vec2& robot_point);

/// Exact constant-twist integration of the unicycle model.
/// Falls back to straight-line motion when |w| < 1e-9.
Pose2 integrate_arc(const Pose2& pose, double v, double w, double dt);

/// Rectangular robot body centered at the axle midpoint.
struct Footprint {
  double length = 0.50;  // extent along robot x
  double width = 0.43;   // extent along robot y

  double circumscribed_radius() const;
};

/// Index i of `count` samples spread symmetrically over [lo, hi]; the result is
/// exactly antisymmetric when lo == -hi.
double symmetric_sample(double lo, double hi, int i, int count);

/// Deterministic sub-seed derivation (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

}  // namespace lics
