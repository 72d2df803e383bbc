#pragma once

#include <random>
#include <vector>

#include "lics/geometry.hpp"
#include "lics/world.hpp"

namespace lics {

struct RobotState {
  Pose2 pose;
  double v = 0.0;  // m/s
  double w = 0.0;  // rad/s
  double t = 0.0;  // s
};

struct VelocityLimits {
  double v_max = 2.0;      // m/s
  double w_max = 3.14;     // rad/s
  double a_max = 2.0;      // m/s^2
  double alpha_max = 6.0;  // rad/s^2

  Action clamp(const Action& a) const;
};

struct LidarConfig {
  int beam_count = 720;
  double angle_min = -0.75 * 3.14159265358979323846;
  double angle_max = 0.75 * 3.14159265358979323846;
  double max_range = 20.0;
  Vec2 mount_offset = Vec2::Zero();  // robot frame

  void validate() const;
  /// Beam angle in the robot frame.
  double beam_angle(int i) const {
    return symmetric_sample(angle_min, angle_max, i, beam_count);
  }
};

using LidarScan = std::vector<double>;

inline constexpr double kControlPeriod = 0.1;    // 10 Hz
inline constexpr double kPhysicsSubstep = 0.002;  // 2 ms

/// Clamps the command to the velocity and acceleration limits, then advances the
/// pose by exact constant-twist integration.
RobotState step_dynamics(const RobotState& state, const Action& cmd, double dt,
                         const VelocityLimits& limits);

/// Grid traversal raycast. Rays leaving the grid report max_range.
/// Throws OutOfBounds when the sensor origin is outside the world.
LidarScan render_scan(const World& world, const Pose2& pose, const LidarConfig& cfg);

/// True iff the oriented l x h rectangle overlaps an occupied (or out-of-bounds) cell.
bool footprint_collides(const World& world, const Pose2& pose, const Footprint& fp);

/// Linear interpolation over normalized beam index; endpoints preserved.
LidarScan resample_scan(const LidarScan& scan, int out_count);

struct OdometryNoise {
  double v_std = 0.0;
  double w_std = 0.0;
};

/// Dead-reckoned pose estimate integrating noisy wheel velocities.
class Odometry {
 public:
  Odometry(const Pose2& initial, OdometryNoise noise, std::uint64_t seed)
      : estimate_(initial), noise_(noise), rng_(seed) {}

  /// Integrates the velocities applied over one substep of length dt.
  const Pose2& update(double v, double w, double dt);
  const Pose2& estimate() const { return estimate_; }
  void reset(const Pose2& pose) { estimate_ = pose; }

 private:
  Pose2 estimate_;
  OdometryNoise noise_;
  std::mt19937_64 rng_;
};

}  // namespace lics
