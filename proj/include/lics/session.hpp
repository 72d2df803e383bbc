#pragma once

#include <cstdint>
#include <string>

#include "lics/expert.hpp"
#include "lics/planning.hpp"
#include "lics/simulator.hpp"
#include "lics/world.hpp"

namespace lics {

enum class Outcome { kRunning, kSuccess, kCollision, kTimeout };

std::string to_string(Outcome o);

struct SessionConfig {
  VelocityLimits limits;
  LidarConfig lidar;
  Footprint footprint;
  double lookahead = kDefaultLookahead;
  double inflation_radius = default_inflation_radius();
  double replan_period = 1.0;   // s
  double goal_tolerance = 0.3;  // m
  double timeout = 60.0;        // s
  OdometryNoise odometry{0.05, 0.05};
  std::uint64_t seed = 0;

  void validate() const;
};

/// One robot in one world, advanced a control period at a time. The global
/// path is replanned from the odometry estimate; collisions and goal arrival
/// are judged on the true pose at every physics substep.
class NavSession {
 public:
  NavSession(World world, SessionConfig cfg);

  /// Scan and local goal for the current tick; replans when due.
  Observation observe();

  /// Runs one control period with `cmd` and returns the outcome so far.
  Outcome apply(const Action& cmd);

  /// Puts the robot back at the start with fresh odometry.
  void reset();

  const World& world() const { return world_; }
  const SessionConfig& config() const { return cfg_; }
  const RobotState& state() const { return state_; }
  const Pose2& estimate() const { return odometry_.estimate(); }
  const Path& path() const { return path_; }
  const Costmap& costmap() const { return costmap_; }
  Outcome outcome() const { return outcome_; }
  std::int64_t ticks() const { return ticks_; }
  double time() const { return state_.t; }

 private:
  void replan();
  std::vector<Vec2> remaining_path() const;
  LocalGoal local_goal(const std::vector<Vec2>& remaining) const;

  World world_;
  SessionConfig cfg_;
  Costmap costmap_;
  RobotState state_;
  Odometry odometry_;
  Path path_;
  double last_replan_ = -1.0;
  std::int64_t ticks_ = 0;
  Outcome outcome_ = Outcome::kRunning;
};

}  // namespace lics
