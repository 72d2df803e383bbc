#include "lics/session.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lics/error.hpp"

namespace lics {

namespace {

constexpr int kSubsteps = static_cast<int>(kControlPeriod / kPhysicsSubstep + 0.5);

}  // namespace

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::kRunning: return "running";
    case Outcome::kSuccess: return "success";
    case Outcome::kCollision: return "collision";
    case Outcome::kTimeout: return "timeout";
  }
  return "unknown";
}

void SessionConfig::validate() const {
  lidar.validate();
  if (!(limits.v_max > 0.0) || !(limits.w_max > 0.0) || !(limits.a_max > 0.0) ||
      !(limits.alpha_max > 0.0))
    throw InvalidConfig("velocity limits must be > 0");
  if (!(lookahead > 0.0)) throw InvalidConfig("lookahead must be > 0");
  if (!(goal_tolerance > 0.0)) throw InvalidConfig("goal_tolerance must be > 0");
  if (!(timeout > 0.0)) throw InvalidConfig("timeout must be > 0");
  if (!(replan_period > 0.0)) throw InvalidConfig("replan_period must be > 0");
  if (odometry.v_std < 0.0 || odometry.w_std < 0.0)
    throw InvalidConfig("odometry noise must be >= 0");
}

NavSession::NavSession(World world, SessionConfig cfg)
    : world_(std::move(world)),
      cfg_(cfg),
      costmap_(inflate(world_, cfg.inflation_radius)),
      odometry_(world_.start, cfg.odometry, cfg.seed) {
  cfg_.validate();
  state_.pose = world_.start;
}

void NavSession::reset() {
  state_ = RobotState{};
  state_.pose = world_.start;
  odometry_ = Odometry(world_.start, cfg_.odometry, cfg_.seed);
  path_ = Path{};
  last_replan_ = -1.0;
  ticks_ = 0;
  outcome_ = Outcome::kRunning;
}

void NavSession::replan() {
  const Pose2& est = odometry_.estimate();
  Cell start = world_.cell_of(est.position());
  start.col = std::clamp(start.col, 0, world_.width - 1);
  start.row = std::clamp(start.row, 0, world_.height - 1);
  if (costmap_.blocked(start)) {
    const auto free = nearest_free_cell(costmap_, start);
    if (!free) return;
    start = *free;
  }
  Cell goal = world_.cell_of(world_.goal);
  if (costmap_.blocked(goal)) {
    const auto free = nearest_free_cell(costmap_, goal);
    if (!free) return;
    goal = *free;
  }
  try {
    path_ = plan_astar(costmap_, start, goal, world_.goal);
    last_replan_ = state_.t;
  } catch (const NoPath&) {
    // keep the previous path
  }
}

std::vector<Vec2> NavSession::remaining_path() const {
  const Pose2& est = odometry_.estimate();
  if (path_.points.empty()) return {world_.goal};
  std::size_t nearest = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < path_.points.size(); ++i) {
    const double d = (path_.points[i] - est.position()).squaredNorm();
    if (d < best) {
      best = d;
      nearest = i;
    }
  }
  return {path_.points.begin() + static_cast<std::ptrdiff_t>(nearest), path_.points.end()};
}

LocalGoal NavSession::local_goal(const std::vector<Vec2>& remaining) const {
  try {
    return extract_local_goal(remaining, odometry_.estimate(), cfg_.lookahead);
  } catch (const DegenerateGoal&) {
    LocalGoal g;
    g.lookahead = cfg_.lookahead;
    g.fallback = true;
    g.point = Vec2(1e-6, 0.0);
    g.unit = Vec2::UnitX();
    return g;
  }
}

Observation NavSession::observe() {
  if (path_.points.empty() || state_.t - last_replan_ >= cfg_.replan_period - 1e-9) replan();
  Observation obs;
  obs.scan = render_scan(world_, state_.pose, cfg_.lidar);
  const std::vector<Vec2> remaining = remaining_path();
  obs.goal = local_goal(remaining);
  obs.path.reserve(remaining.size());
  for (const auto& p : remaining) obs.path.push_back(to_robot_frame(odometry_.estimate(), p));
  obs.current = {state_.v, state_.w};
  obs.footprint = cfg_.footprint;
  obs.limits = cfg_.limits;
  obs.lidar = cfg_.lidar;
  return obs;
}

Outcome NavSession::apply(const Action& cmd) {
  if (outcome_ != Outcome::kRunning) return outcome_;
  for (int k = 1; k <= kSubsteps; ++k) {
    state_ = step_dynamics(state_, cmd, kPhysicsSubstep, cfg_.limits);
    state_.t = static_cast<double>(ticks_) * kControlPeriod + k * kPhysicsSubstep;
    odometry_.update(state_.v, state_.w, kPhysicsSubstep);
    if (footprint_collides(world_, state_.pose, cfg_.footprint)) {
      outcome_ = Outcome::kCollision;
      break;
    }
    if ((state_.pose.position() - world_.goal).norm() <= cfg_.goal_tolerance) {
      outcome_ = Outcome::kSuccess;
      break;
    }
  }
  ++ticks_;
  if (outcome_ == Outcome::kRunning && state_.t >= cfg_.timeout - 1e-9) outcome_ = Outcome::kTimeout;
  return outcome_;
}

}  // namespace lics
