#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lics/geometry.hpp"
#include "lics/simulator.hpp"

namespace lics {

struct SafetyConfig {
  Footprint footprint;
  double epsilon_w = 1e-3;  // |w| at or below this counts as straight motion
  double horizon = 1.0;     // s
  double margin = 0.05;     // m
  double a_max = 2.0;       // braking deceleration used for the ROI extent
  double recovery_w = 1.0;  // rad/s for rotate-in-place recovery
};

enum class MotionClass { kStationary, kLinear, kRadial, kRotationInPlace };

std::string to_string(MotionClass c);

/// Region swept by the footprint under a candidate command. `polygon` is a
/// drawable outline; the remaining fields describe the exact test region.
struct RoiDescriptor {
  std::vector<Vec2> polygon;
  double length = 0.0;  // linear: travel + braking distance
  Vec2 center = Vec2::Zero();  // radial: turn center
  double r_inner = 0.0;
  double r_outer = 0.0;
  double start_bearing = 0.0;
  double sweep = 0.0;  // signed, radians
};

struct SafetyVerdict {
  bool safe = true;
  MotionClass motion = MotionClass::kStationary;
  std::vector<Vec2> offending;  // robot frame
  RoiDescriptor roi;
};

/// Beam i -> (r cos a_i, r sin a_i) plus the mount offset; max-range beams dropped.
std::vector<Vec2> scan_to_points(const LidarScan& scan, const LidarConfig& cfg);

MotionClass classify_motion(const Action& action, double epsilon_w);

/// Travel over the horizon plus braking distance at a_max.
double roi_travel(const Action& action, const SafetyConfig& cfg);

SafetyVerdict check_linear(const std::vector<Vec2>& points, const Action& action,
                           const SafetyConfig& cfg);
/// Unsafe when a point lies in the start or end footprint, in the annulus
/// sector between R_i and R_o swept from the start bearing, or on the path the
/// body sweeps over it. All regions are grown by the margin.
SafetyVerdict check_radial(const std::vector<Vec2>& points, const Action& action,
                           const SafetyConfig& cfg);
SafetyVerdict check_rotation(const std::vector<Vec2>& points, const Action& action,
                             const SafetyConfig& cfg);

/// Dispatches on classify_motion.
SafetyVerdict check_action(const std::vector<Vec2>& points, const Action& action,
                           const SafetyConfig& cfg);

/// Returns `proposed` if safe, else the first safe of: half speed on the same
/// curvature, rotate in place towards the goal side, stop.
Action filter_action(const std::vector<Vec2>& points, const Action& proposed,
                     const SafetyConfig& cfg, const std::optional<Vec2>& goal = std::nullopt);

nlohmann::json verdict_to_json(const SafetyVerdict& verdict);

}  // namespace lics
