#pragma once

// Slow, obviously-correct reference implementations used only by tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "lics/geometry.hpp"
#include "lics/planning.hpp"
#include "lics/safety.hpp"
#include "lics/world.hpp"

namespace oracle {

using lics::Cell;
using lics::Costmap;
using lics::Footprint;
using lics::Pose2;
using lics::Vec2;
using lics::World;

/// Minimum (straight, diagonal) move counts by plain Dijkstra over an ordered set.
/// Returns the cost in cells, or +inf when unreachable.
inline double dijkstra_cost(const Costmap& map, const Cell& start, const Cell& goal) {
  const double inf = std::numeric_limits<double>::infinity();
  if (map.blocked(start) || map.blocked(goal)) return inf;
  const auto n = map.cost.size();
  std::vector<double> dist(n, inf);
  std::vector<int> s(n, 0), d(n, 0);
  std::set<std::pair<double, int>> frontier;
  const int si = static_cast<int>(map.index(start));
  dist[si] = 0.0;
  frontier.insert({0.0, si});
  while (!frontier.empty()) {
    const auto [cost, idx] = *frontier.begin();
    frontier.erase(frontier.begin());
    const Cell cur{idx % map.width, idx / map.width};
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const Cell next{cur.col + dx, cur.row + dy};
        if (map.blocked(next)) continue;
        const bool diag = dx != 0 && dy != 0;
        if (diag && map.blocked({cur.col + dx, cur.row}) && map.blocked({cur.col, cur.row + dy}))
          continue;
        const int ni = static_cast<int>(map.index(next));
        const int ns = s[idx] + (diag ? 0 : 1);
        const int nd = d[idx] + (diag ? 1 : 0);
        const double nc = ns + std::numbers::sqrt2 * nd;
        if (nc < dist[ni]) {
          frontier.erase({dist[ni], ni});
          dist[ni] = nc;
          s[ni] = ns;
          d[ni] = nd;
          frontier.insert({nc, ni});
        }
      }
    }
  }
  return dist[map.index(goal)];
}

/// Marches a ray in fixed steps until it enters an occupied cell.
inline double ray_march(const World& world, const Vec2& origin, double angle, double max_range,
                        double step = 1e-3) {
  const Vec2 dir(std::cos(angle), std::sin(angle));
  for (double t = 0.0; t < max_range; t += step) {
    const Vec2 p = origin + t * dir;
    if (!world.contains(p)) return max_range;
    const Cell c = world.cell_of(p);
    if (world.occupied(c.col, c.row)) return t;
  }
  return max_range;
}

/// Samples the rectangle on a regular grid and reports any sample in an occupied cell.
inline bool raster_collides(const World& world, const Pose2& pose, const Footprint& fp,
                            double step = 1e-3) {
  const double hl = 0.5 * fp.length;
  const double hh = 0.5 * fp.width;
  const int nl = static_cast<int>(std::ceil(fp.length / step));
  const int nh = static_cast<int>(std::ceil(fp.width / step));
  for (int i = 0; i <= nl; ++i) {
    for (int j = 0; j <= nh; ++j) {
      const Vec2 local(-hl + fp.length * i / nl, -hh + fp.width * j / nh);
      const Vec2 p = lics::to_world_frame(pose, local);
      if (!world.contains(p)) return true;
      const Cell c = world.cell_of(p);
      if (world.occupied(c.col, c.row)) return true;
    }
  }
  return false;
}

/// Distance between an oriented rectangle and an axis-aligned cell square,
/// estimated by dense sampling of the cell boundary and interior.
inline double rect_point_distance(const Pose2& pose, const Footprint& fp, const Vec2& p) {
  const Vec2 local = lics::to_robot_frame(pose, p);
  const double dx = std::max(std::abs(local.x()) - 0.5 * fp.length, 0.0);
  const double dy = std::max(std::abs(local.y()) - 0.5 * fp.width, 0.0);
  return std::hypot(dx, dy);
}

inline double clearance_to_occupied(const World& world, const Pose2& pose, const Footprint& fp,
                                    double step = 2e-3) {
  double best = std::numeric_limits<double>::infinity();
  const double res = world.resolution;
  for (int row = -1; row <= world.height; ++row) {
    for (int col = -1; col <= world.width; ++col) {
      if (!world.occupied(col, row)) continue;
      const Vec2 center((col + 0.5) * res, (row + 0.5) * res);
      if ((center - pose.position()).norm() > fp.circumscribed_radius() + 2 * res) continue;
      const int n = static_cast<int>(std::ceil(res / step));
      for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j) {
          const Vec2 p(col * res + res * i / n, row * res + res * j / n);
          best = std::min(best, rect_point_distance(pose, fp, p));
        }
    }
  }
  return best;
}

/// Brute-force swept footprint: moves the rectangle (inflated by `margin`)
/// along the commanded arc in 1 cm / 0.5 degree increments over the horizon
/// plus the braking time and tests every point for containment.
inline bool swept_unsafe(const std::vector<Vec2>& points, const lics::Action& a,
                         const lics::SafetyConfig& cfg, double margin) {
  const double duration = cfg.horizon + std::abs(a.v) / (2.0 * cfg.a_max);
  const double dist = std::abs(a.v) * duration;
  const double turn = std::abs(a.w) * duration;
  const int steps = std::max({1, static_cast<int>(std::ceil(dist / 0.01)),
                              static_cast<int>(std::ceil(turn / (0.5 * std::numbers::pi / 180)))});
  const double hl = 0.5 * cfg.footprint.length + margin;
  const double hh = 0.5 * cfg.footprint.width + margin;
  const bool straight = std::abs(a.w) <= cfg.epsilon_w;
  for (int k = 0; k <= steps; ++k) {
    const double t = duration * k / steps;
    const Pose2 pose = straight ? Pose2{a.v * t, 0.0, 0.0} : lics::integrate_arc({}, a.v, a.w, t);
    for (const auto& p : points) {
      const Vec2 local = lics::to_robot_frame(pose, p);
      if (std::abs(local.x()) <= hl && std::abs(local.y()) <= hh) return true;
    }
  }
  return false;
}

/// Mean squared error of a closed-form constant predictor: the per-channel variance.
inline double target_variance(const std::vector<lics::Action>& targets) {
  double mv = 0, mw = 0;
  for (const auto& a : targets) {
    mv += a.v;
    mw += a.w;
  }
  mv /= targets.size();
  mw /= targets.size();
  double var = 0;
  for (const auto& a : targets) var += (a.v - mv) * (a.v - mv) + (a.w - mw) * (a.w - mw);
  return var / (2.0 * targets.size());
}

}  // namespace oracle
