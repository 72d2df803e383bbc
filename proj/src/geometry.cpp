#include "lics/geometry.hpp"

#include <cmath>
#include <numbers>

namespace lics {

double normalize_angle(double angle) {
  constexpr double pi = std::numbers::pi;
  if (angle > -pi && angle <= pi) return angle;
  double wrapped = std::remainder(angle, 2.0 * pi);
  if (wrapped <= -pi) wrapped += 2.0 * pi;
  return wrapped;
}

Vec2 to_robot_frame(const Pose2& pose, const Vec2& world_point) {
  const double c = std::cos(pose.theta);
  const double s = std::sin(pose.theta);
  const double dx = world_point.x() - pose.x;
  const double dy = world_point.y() - pose.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

Vec2 to_world_frame(const Pose2& pose, const Vec2& robot_point) {
  const double c = std::cos(pose.theta);
  const double s = std::sin(pose.theta);
  return {pose.x + c * robot_point.x() - s * robot_point.y(),
          pose.y + s * robot_point.x() + c * robot_point.y()};
}

Pose2 integrate_arc(const Pose2& pose, double v, double w, double dt) {
  Pose2 next = pose;
  if (std::abs(w) < 1e-9) {
    next.x += v * dt * std::cos(pose.theta);
    next.y += v * dt * std::sin(pose.theta);
    return next;
  }
  const double theta_end = pose.theta + w * dt;
  const double radius = v / w;
  next.x += radius * (std::sin(theta_end) - std::sin(pose.theta));
  next.y -= radius * (std::cos(theta_end) - std::cos(pose.theta));
  next.theta = normalize_angle(theta_end);
  return next;
}

double Footprint::circumscribed_radius() const {
  return std::hypot(0.5 * length, 0.5 * width);
}

double symmetric_sample(double lo, double hi, int i, int count) {
  if (count <= 1) return 0.5 * (lo + hi);
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double s = static_cast<double>(2 * i - (count - 1)) / static_cast<double>(count - 1);
  return mid + half * s;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

}  // namespace lics
