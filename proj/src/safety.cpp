#include "lics/safety.hpp"

#include <cmath>
#include <numbers>

namespace lics {

namespace {

constexpr double kStill = 1e-6;

bool in_rect(const Vec2& p, double half_l, double half_h) {
  return std::abs(p.x()) <= half_l && std::abs(p.y()) <= half_h;
}

double wrap_positive(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  return a < 0.0 ? a + two_pi : a;
}

/// Whether a point, carried around `center` by the body rotation, passes
/// through the rectangle |x| <= half_l, |y| <= half_h within `sweep` radians.
/// The path enters the convex rectangle at an end point or across an edge, so
/// those are the only places that need testing.
bool arc_meets_rect(const Vec2& p, const Vec2& center, double turn, double sweep, double half_l,
                    double half_h) {
  constexpr double kTol = 1e-9;
  const Vec2 q = p - center;
  const double rho = q.norm();
  const double phi0 = std::atan2(q.y(), q.x());
  auto inside = [&](const Vec2& v) {
    return std::abs(v.x()) <= half_l + kTol && std::abs(v.y()) <= half_h + kTol;
  };
  auto at = [&](double theta) {
    const double phi = phi0 - turn * theta;
    return Vec2(center.x() + rho * std::cos(phi), center.y() + rho * std::sin(phi));
  };
  if (inside(p) || inside(at(sweep))) return true;
  auto crossing = [&](double phi) {
    const double theta = wrap_positive(turn * (phi0 - phi));
    return (sweep >= 2.0 * std::numbers::pi || theta <= sweep) && inside(at(theta));
  };
  for (double x : {-half_l, half_l}) {
    const double d = x - center.x();
    if (std::abs(d) > rho) continue;
    const double s = std::sqrt(rho * rho - d * d);
    if (crossing(std::atan2(s, d)) || crossing(std::atan2(-s, d))) return true;
  }
  for (double y : {-half_h, half_h}) {
    const double d = y - center.y();
    if (std::abs(d) > rho) continue;
    const double s = std::sqrt(rho * rho - d * d);
    if (crossing(std::atan2(d, s)) || crossing(std::atan2(d, -s))) return true;
  }
  return false;
}

}  // namespace

std::string to_string(MotionClass c) {
  switch (c) {
    case MotionClass::kStationary: return "stationary";
    case MotionClass::kLinear: return "linear";
    case MotionClass::kRadial: return "radial";
    case MotionClass::kRotationInPlace: return "rotation_in_place";
  }
  return "unknown";
}

std::vector<Vec2> scan_to_points(const LidarScan& scan, const LidarConfig& cfg) {
  std::vector<Vec2> points;
  points.reserve(scan.size());
  for (int i = 0; i < static_cast<int>(scan.size()); ++i) {
    const double r = scan[static_cast<std::size_t>(i)];
    if (!(r < cfg.max_range)) continue;
    const double a = cfg.beam_angle(i);
    points.emplace_back(cfg.mount_offset.x() + r * std::cos(a),
                        cfg.mount_offset.y() + r * std::sin(a));
  }
  return points;
}

MotionClass classify_motion(const Action& action, double epsilon_w) {
  const bool still = std::abs(action.v) <= kStill;
  const bool straight = std::abs(action.w) <= epsilon_w;
  if (still && straight) return MotionClass::kStationary;
  if (straight) return MotionClass::kLinear;
  if (still) return MotionClass::kRotationInPlace;
  return MotionClass::kRadial;
}

double roi_travel(const Action& action, const SafetyConfig& cfg) {
  const double speed = std::abs(action.v);
  return speed * cfg.horizon + speed * speed / (2.0 * cfg.a_max);
}

SafetyVerdict check_linear(const std::vector<Vec2>& points, const Action& action,
                           const SafetyConfig& cfg) {
  SafetyVerdict verdict;
  verdict.motion = MotionClass::kLinear;
  const double half_h = 0.5 * cfg.footprint.width + cfg.margin;
  const double reach = 0.5 * cfg.footprint.length + roi_travel(action, cfg);
  const double dir = action.v >= 0.0 ? 1.0 : -1.0;
  verdict.roi.length = roi_travel(action, cfg);
  verdict.roi.polygon = {{0.0, -half_h}, {dir * reach, -half_h}, {dir * reach, half_h}, {0.0, half_h}};
  for (const auto& p : points) {
    if (p.x() * action.v > 0.0 && std::abs(p.y()) <= half_h && std::abs(p.x()) <= reach)
      verdict.offending.push_back(p);
  }
  verdict.safe = verdict.offending.empty();
  return verdict;
}

SafetyVerdict check_radial(const std::vector<Vec2>& points, const Action& action,
                           const SafetyConfig& cfg) {
  SafetyVerdict verdict;
  verdict.motion = MotionClass::kRadial;
  const double half_l = 0.5 * cfg.footprint.length;
  const double half_h = 0.5 * cfg.footprint.width;
  const double m = cfg.margin;

  // Instantaneous center of rotation in the robot frame; the body rotates about
  // it at rate w whatever the sign of v.
  const Vec2 center(0.0, action.v / action.w);
  const double radius = std::abs(action.v / action.w);
  const double r_outer = std::sqrt((radius + half_h) * (radius + half_h) + half_l * half_l);
  const double r_inner = std::max(radius - half_h, 0.0);
  const double duration = cfg.horizon + std::abs(action.v) / (2.0 * cfg.a_max);
  const double sweep = std::abs(action.w) * duration;
  const double turn = action.w > 0.0 ? 1.0 : -1.0;
  const double start_bearing = std::atan2(-center.y(), -center.x());
  const Pose2 end_pose = integrate_arc({}, action.v, action.w, duration);

  auto& roi = verdict.roi;
  roi.center = center;
  roi.r_inner = r_inner;
  roi.r_outer = r_outer;
  roi.start_bearing = start_bearing;
  roi.sweep = turn * sweep;
  roi.length = std::abs(action.v) * duration;
  {
    const double drawn = std::min(sweep, 2.0 * std::numbers::pi);
    constexpr int kArc = 24;
    for (int k = 0; k <= kArc; ++k) {
      const double b = start_bearing + turn * drawn * k / kArc;
      roi.polygon.push_back(center + r_outer * Vec2(std::cos(b), std::sin(b)));
    }
    for (int k = kArc; k >= 0; --k) {
      const double b = start_bearing + turn * drawn * k / kArc;
      roi.polygon.push_back(center + r_inner * Vec2(std::cos(b), std::sin(b)));
    }
  }

  for (const auto& p : points) {
    bool hit = in_rect(p, half_l + m, half_h + m) ||
               in_rect(to_robot_frame(end_pose, p), half_l + m, half_h + m);
    if (!hit) {
      const Vec2 rel = p - center;
      const double rho = rel.norm();
      if (rho >= r_inner - m && rho <= r_outer + m) {
        const double bearing = std::atan2(rel.y(), rel.x());
        const double offset = wrap_positive(turn * (bearing - start_bearing));
        hit = sweep >= 2.0 * std::numbers::pi || offset <= sweep;
      }
    }
    // The annulus sector starts at the body center's bearing, so on tight turns
    // it misses what the trailing half of the body sweeps.
    if (!hit) hit = arc_meets_rect(p, center, turn, sweep, half_l + m, half_h + m);
    if (hit) verdict.offending.push_back(p);
  }
  verdict.safe = verdict.offending.empty();
  return verdict;
}

SafetyVerdict check_rotation(const std::vector<Vec2>& points, const Action& action,
                             const SafetyConfig& cfg) {
  SafetyVerdict verdict;
  verdict.motion = MotionClass::kRotationInPlace;
  const double r = cfg.footprint.circumscribed_radius() + cfg.margin;
  verdict.roi.r_outer = r;
  verdict.roi.sweep = action.w * cfg.horizon;
  constexpr int kSides = 32;
  for (int k = 0; k < kSides; ++k) {
    const double b = 2.0 * std::numbers::pi * k / kSides;
    verdict.roi.polygon.emplace_back(r * std::cos(b), r * std::sin(b));
  }
  for (const auto& p : points) {
    if (p.norm() <= r) verdict.offending.push_back(p);
  }
  verdict.safe = verdict.offending.empty();
  return verdict;
}

SafetyVerdict check_action(const std::vector<Vec2>& points, const Action& action,
                           const SafetyConfig& cfg) {
  switch (classify_motion(action, cfg.epsilon_w)) {
    case MotionClass::kLinear: return check_linear(points, action, cfg);
    case MotionClass::kRadial: return check_radial(points, action, cfg);
    case MotionClass::kRotationInPlace: return check_rotation(points, action, cfg);
    case MotionClass::kStationary: break;
  }
  return SafetyVerdict{};
}

Action filter_action(const std::vector<Vec2>& points, const Action& proposed,
                     const SafetyConfig& cfg, const std::optional<Vec2>& goal) {
  if (check_action(points, proposed, cfg).safe) return proposed;

  const Action slower{0.5 * proposed.v, 0.5 * proposed.w};
  if (check_action(points, slower, cfg).safe) return slower;

  double side = proposed.w < 0.0 ? -1.0 : 1.0;
  if (goal && goal->y() != 0.0) side = goal->y() > 0.0 ? 1.0 : -1.0;
  const Action rotate{0.0, side * cfg.recovery_w};
  if (check_action(points, rotate, cfg).safe) return rotate;

  return {0.0, 0.0};
}

nlohmann::json verdict_to_json(const SafetyVerdict& verdict) {
  auto pts = [](const std::vector<Vec2>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : v) arr.push_back({p.x(), p.y()});
    return arr;
  };
  nlohmann::json j;
  j["safe"] = verdict.safe;
  j["class"] = to_string(verdict.motion);
  j["offending"] = pts(verdict.offending);
  j["roi"] = pts(verdict.roi.polygon);
  j["roi_descriptor"] = {{"length", verdict.roi.length},
                         {"center", {verdict.roi.center.x(), verdict.roi.center.y()}},
                         {"r_inner", verdict.roi.r_inner},
                         {"r_outer", verdict.roi.r_outer},
                         {"start_bearing", verdict.roi.start_bearing},
                         {"sweep", verdict.roi.sweep}};
  return j;
}

}  // namespace lics
