#include "lics/expert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "lics/error.hpp"
#include "lics/safety.hpp"

namespace lics {

void DwaConfig::validate() const {
  if (v_samples < 2 || w_samples < 2) throw InvalidConfig("dwa needs >= 2 samples per axis");
  if (!(horizon > 0.0) || !(sim_step > 0.0) || !(period > 0.0))
    throw InvalidConfig("dwa horizon, sim_step and period must be > 0");
  if (!(clearance_cap > 0.0)) throw InvalidConfig("dwa clearance_cap must be > 0");
}

namespace {

double rect_distance(const Vec2& local, double half_l, double half_h) {
  const double dx = std::max(std::abs(local.x()) - half_l, 0.0);
  const double dy = std::max(std::abs(local.y()) - half_h, 0.0);
  return std::hypot(dx, dy);
}

double sample(double lo, double hi, int i, int n) {
  if (hi - lo <= 0.0) return lo;
  if (i == 0) return lo;
  if (i == n - 1) return hi;
  return lo + (hi - lo) * i / (n - 1);
}

}  // namespace

Vec2 point_along(const std::vector<Vec2>& path, double distance) {
  if (path.empty()) throw InvalidConfig("point_along needs a non-empty path");
  double left = distance;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const double seg = (path[i] - path[i - 1]).norm();
    if (seg >= left && seg > 0.0) return path[i - 1] + (path[i] - path[i - 1]) * (left / seg);
    left -= seg;
  }
  return path.back();
}

Vec2 path_carrot(const std::vector<Vec2>& path, const Vec2& from, double distance) {
  if (path.empty()) throw InvalidConfig("path_carrot needs a non-empty path");
  if (path.size() == 1) return path.front();
  std::size_t seg = 0;
  Vec2 foot = path.front();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Vec2 d = path[i + 1] - path[i];
    const double len2 = d.squaredNorm();
    const double u = len2 > 0.0 ? std::clamp((from - path[i]).dot(d) / len2, 0.0, 1.0) : 0.0;
    const Vec2 q = path[i] + u * d;
    const double dist = (q - from).norm();
    if (dist < best) {
      best = dist;
      seg = i;
      foot = q;
    }
  }
  std::vector<Vec2> rest{foot};
  rest.insert(rest.end(), path.begin() + static_cast<std::ptrdiff_t>(seg) + 1, path.end());
  return point_along(rest, distance);
}

DwaDecision dwa_decide(const Observation& obs, const DwaConfig& cfg) {
  const VelocityLimits& lim = obs.limits;
  const double half_l = 0.5 * obs.footprint.length;
  const double half_h = 0.5 * obs.footprint.width;
  const double m = cfg.collision_margin;

  const double v_lo = std::max(obs.current.v - lim.a_max * cfg.period, 0.0);
  const double v_hi = std::min(std::max(obs.current.v, 0.0) + lim.a_max * cfg.period, lim.v_max);
  const double w_lo = std::max(obs.current.w - lim.alpha_max * cfg.period, -lim.w_max);
  const double w_hi = std::min(obs.current.w + lim.alpha_max * cfg.period, lim.w_max);

  const double body = obs.footprint.circumscribed_radius();
  const double reach = v_hi * cfg.horizon + body + m + cfg.clearance_cap;
  // Sorted by range so the per-pose scan can stop once no farther point can
  // collide or lower the clearance.
  std::vector<std::pair<double, Vec2>> points;
  for (const auto& p : scan_to_points(obs.scan, obs.lidar)) {
    const double r = p.norm();
    if (r <= reach) points.emplace_back(r, p);
  }
  std::sort(points.begin(), points.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  const int steps = static_cast<int>(std::ceil(cfg.horizon / cfg.sim_step - 1e-9));

  // Clearance along the arc, or nothing when the inflated footprint touches a point.
  const Vec2 final_goal = obs.path.empty() ? obs.goal.point : obs.path.back();
  auto simulate = [&](double v, double w, Pose2& end, bool* arrives = nullptr) -> std::optional<double> {
    double clearance = cfg.clearance_cap;
    for (int k = 1; k <= steps; ++k) {
      const double t = std::min(k * cfg.sim_step, cfg.horizon);
      end = integrate_arc({}, v, w, t);
      if (arrives && (end.position() - final_goal).norm() <= cfg.goal_reach) *arrives = true;
      const double travelled = std::abs(v) * t;
      for (const auto& [r, p] : points) {
        if (r - travelled - body > clearance) break;
        const double d = rect_distance(to_robot_frame(end, p), half_l, half_h);
        if (d <= m) return std::nullopt;
        clearance = std::min(clearance, d);
      }
    }
    return clearance;
  };
  auto target_from = [&](const Vec2& p) {
    return obs.path.empty() ? obs.goal.point : path_carrot(obs.path, p, cfg.carrot_distance);
  };

  struct Candidate {
    double v, w, heading, clearance;
  };
  std::vector<Candidate> candidates;
  for (int iv = 0; iv < cfg.v_samples; ++iv) {
    const double v = sample(v_lo, v_hi, iv, cfg.v_samples);
    for (int iw = 0; iw < cfg.w_samples; ++iw) {
      const double w = w_hi > w_lo ? symmetric_sample(w_lo, w_hi, iw, cfg.w_samples) : w_lo;
      Pose2 end;
      bool arrives = false;
      const auto clearance = simulate(v, w, end, &arrives);
      if (!clearance) continue;
      const Vec2 to_goal = to_robot_frame(end, target_from(end.position()));
      // An arc that passes through the goal region needs no better heading.
      const double heading =
          arrives ? 1.0 : 1.0 - std::abs(std::atan2(to_goal.y(), to_goal.x())) / std::numbers::pi;
      candidates.push_back({v, w, heading, *clearance});
    }
  }

  DwaDecision best;
  best.admissible = static_cast<int>(candidates.size());
  bool have = false;
  for (const auto& c : candidates) {
    const double score = cfg.heading_weight * c.heading +
                         cfg.clearance_weight * c.clearance / cfg.clearance_cap +
                         cfg.velocity_weight * c.v;
    bool better = !have || score > best.score;
    if (have && score == best.score) {
      const Action& b = best.action;
      if (c.v != b.v) better = c.v > b.v;
      else if (std::abs(c.w) != std::abs(b.w)) better = std::abs(c.w) < std::abs(b.w);
      else better = c.w > b.w;
    }
    if (better) {
      have = true;
      best.score = score;
      best.action = {c.v, c.w};
    }
  }
  // Standing still while already at rest is a deadlock; it gets the recovery turn too.
  constexpr double kRest = 1e-6;
  const bool stalled = have && std::abs(best.action.v) < kRest && std::abs(best.action.w) < kRest &&
                       std::abs(obs.current.v) < kRest && std::abs(obs.current.w) < kRest;
  if (!have || stalled) {
    best.recovery = true;
    // Toward the goal side unless only the other direction is free.
    const double side = target_from(Vec2::Zero()).y() < 0.0 ? -1.0 : 1.0;
    Pose2 end;
    const bool toward = simulate(0.0, side * cfg.recover_w, end).has_value();
    const bool away = simulate(0.0, -side * cfg.recover_w, end).has_value();
    best.action = {0.0, (toward || !away ? side : -side) * cfg.recover_w};
  }
  return best;
}

Action dwa_expert_action(const Observation& obs, const DwaConfig& cfg) {
  return dwa_decide(obs, cfg).action;
}

}  // namespace lics
