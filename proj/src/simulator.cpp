#include "lics/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lics/error.hpp"

namespace lics {

Action VelocityLimits::clamp(const Action& a) const {
  return {std::clamp(a.v, -v_max, v_max), std::clamp(a.w, -w_max, w_max)};
}

void LidarConfig::validate() const {
  if (beam_count < 2) throw InvalidConfig("lidar beam_count must be >= 2");
  if (!(angle_max > angle_min)) throw InvalidConfig("lidar angle_max must exceed angle_min");
  if (!(max_range > 0.0)) throw InvalidConfig("lidar max_range must be > 0");
}

RobotState step_dynamics(const RobotState& state, const Action& cmd, double dt,
                         const VelocityLimits& limits) {
  const Action target = limits.clamp(cmd);
  RobotState next = state;
  next.v = std::clamp(target.v, state.v - limits.a_max * dt, state.v + limits.a_max * dt);
  next.w = std::clamp(target.w, state.w - limits.alpha_max * dt,
                      state.w + limits.alpha_max * dt);
  next.pose = integrate_arc(state.pose, next.v, next.w, dt);
  next.t = state.t + dt;
  return next;
}

LidarScan render_scan(const World& world, const Pose2& pose, const LidarConfig& cfg) {
  const Vec2 origin = to_world_frame(pose, cfg.mount_offset);
  if (!world.contains(origin)) throw OutOfBounds("lidar origin outside the world");

  const double res = world.resolution;
  const Cell origin_cell = world.cell_of(origin);
  constexpr double inf = std::numeric_limits<double>::infinity();

  LidarScan scan(static_cast<std::size_t>(cfg.beam_count), cfg.max_range);
  for (int i = 0; i < cfg.beam_count; ++i) {
    const double angle = pose.theta + cfg.beam_angle(i);
    const double dx = std::cos(angle);
    const double dy = std::sin(angle);

    int col = origin_cell.col;
    int row = origin_cell.row;
    if (world.occupied(col, row)) {
      scan[static_cast<std::size_t>(i)] = 1e-6;
      continue;
    }
    const int step_c = dx > 0 ? 1 : -1;
    const int step_r = dy > 0 ? 1 : -1;
    const double delta_c = dx != 0.0 ? std::abs(res / dx) : inf;
    const double delta_r = dy != 0.0 ? std::abs(res / dy) : inf;
    const double next_c = (dx > 0 ? (col + 1) * res - origin.x() : origin.x() - col * res);
    const double next_r = (dy > 0 ? (row + 1) * res - origin.y() : origin.y() - row * res);
    double t_c = dx != 0.0 ? next_c / std::abs(dx) : inf;
    double t_r = dy != 0.0 ? next_r / std::abs(dy) : inf;

    double range = cfg.max_range;
    while (true) {
      double t;
      if (t_c < t_r) {
        t = t_c;
        col += step_c;
        t_c += delta_c;
      } else {
        t = t_r;
        row += step_r;
        t_r += delta_r;
      }
      if (t > cfg.max_range || !world.in_bounds(col, row)) break;
      if (world.occupied(col, row)) {
        range = std::max(t, 1e-6);
        break;
      }
    }
    scan[static_cast<std::size_t>(i)] = range;
  }
  return scan;
}

namespace {

// Separating-axis test between an oriented rectangle and an axis-aligned square.
bool rect_overlaps_square(const Vec2& center, double c, double s, double half_l, double half_h,
                          const Vec2& sq_min, double side) {
  const Vec2 corners[4] = {
      center + Vec2(c * half_l - s * half_h, s * half_l + c * half_h),
      center + Vec2(c * half_l + s * half_h, s * half_l - c * half_h),
      center + Vec2(-c * half_l + s * half_h, -s * half_l - c * half_h),
      center + Vec2(-c * half_l - s * half_h, -s * half_l + c * half_h)};
  // Square axes.
  double min_x = corners[0].x(), max_x = corners[0].x();
  double min_y = corners[0].y(), max_y = corners[0].y();
  for (const auto& p : corners) {
    min_x = std::min(min_x, p.x());
    max_x = std::max(max_x, p.x());
    min_y = std::min(min_y, p.y());
    max_y = std::max(max_y, p.y());
  }
  if (max_x <= sq_min.x() || min_x >= sq_min.x() + side) return false;
  if (max_y <= sq_min.y() || min_y >= sq_min.y() + side) return false;
  // Rectangle axes.
  const Vec2 axes[2] = {Vec2(c, s), Vec2(-s, c)};
  const double halves[2] = {half_l, half_h};
  const Vec2 sq[4] = {sq_min, sq_min + Vec2(side, 0), sq_min + Vec2(0, side),
                      sq_min + Vec2(side, side)};
  for (int a = 0; a < 2; ++a) {
    const double mid = axes[a].dot(center);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : sq) {
      const double proj = axes[a].dot(p);
      lo = std::min(lo, proj);
      hi = std::max(hi, proj);
    }
    if (hi <= mid - halves[a] || lo >= mid + halves[a]) return false;
  }
  return true;
}

}  // namespace

bool footprint_collides(const World& world, const Pose2& pose, const Footprint& fp) {
  const double c = std::cos(pose.theta);
  const double s = std::sin(pose.theta);
  const double half_l = 0.5 * fp.length;
  const double half_h = 0.5 * fp.width;
  const double ext_x = std::abs(c) * half_l + std::abs(s) * half_h;
  const double ext_y = std::abs(s) * half_l + std::abs(c) * half_h;
  const double res = world.resolution;
  const int c0 = static_cast<int>(std::floor((pose.x - ext_x) / res));
  const int c1 = static_cast<int>(std::floor((pose.x + ext_x) / res));
  const int r0 = static_cast<int>(std::floor((pose.y - ext_y) / res));
  const int r1 = static_cast<int>(std::floor((pose.y + ext_y) / res));
  const Vec2 center = pose.position();
  for (int row = r0; row <= r1; ++row) {
    for (int col = c0; col <= c1; ++col) {
      if (!world.occupied(col, row)) continue;
      if (rect_overlaps_square(center, c, s, half_l, half_h, Vec2(col * res, row * res), res))
        return true;
    }
  }
  return false;
}

LidarScan resample_scan(const LidarScan& scan, int out_count) {
  const int in_count = static_cast<int>(scan.size());
  if (in_count < 2 || out_count < 2) throw InvalidConfig("resample_scan needs >= 2 beams");
  LidarScan out(static_cast<std::size_t>(out_count));
  const double scale = static_cast<double>(in_count - 1) / static_cast<double>(out_count - 1);
  for (int j = 0; j < out_count; ++j) {
    const double u = j * scale;
    int i0 = static_cast<int>(std::floor(u));
    if (i0 >= in_count - 1) i0 = in_count - 1;
    const double frac = u - i0;
    const double a = scan[static_cast<std::size_t>(i0)];
    out[static_cast<std::size_t>(j)] =
        (frac == 0.0 || i0 == in_count - 1) ? a
                                            : a + frac * (scan[static_cast<std::size_t>(i0 + 1)] - a);
  }
  out.back() = scan.back();
  return out;
}

const Pose2& Odometry::update(double v, double w, double dt) {
  if (noise_.v_std > 0.0) v += std::normal_distribution<double>(0.0, noise_.v_std)(rng_);
  if (noise_.w_std > 0.0) w += std::normal_distribution<double>(0.0, noise_.w_std)(rng_);
  estimate_ = integrate_arc(estimate_, v, w, dt);
  return estimate_;
}

}  // namespace lics
