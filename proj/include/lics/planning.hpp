#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lics/geometry.hpp"
#include "lics/world.hpp"

namespace lics {

enum class CellCost : std::uint8_t { kFree = 0, kInflated = 1, kLethal = 2 };

/// Grid with the World geometry. Only lethal cells block planning; kInflated
/// marks a passable one-cell band around the lethal region.
struct Costmap {
  double resolution = 0.0;
  int width = 0;
  int height = 0;
  std::vector<CellCost> cost;

  bool in_bounds(const Cell& c) const {
    return c.col >= 0 && c.row >= 0 && c.col < width && c.row < height;
  }
  bool blocked(const Cell& c) const {
    return !in_bounds(c) || cost[index(c)] == CellCost::kLethal;
  }
  std::size_t index(const Cell& c) const {
    return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(c.col);
  }
  Vec2 cell_center(const Cell& c) const {
    return {(c.col + 0.5) * resolution, (c.row + 0.5) * resolution};
  }
};

/// A cell becomes lethal iff its center is within `radius` of an occupied cell center.
Costmap inflate(const World& world, double radius);

inline double default_inflation_radius(const Footprint& fp = {}) {
  return fp.circumscribed_radius() + 0.05;
}

/// World-frame polyline from the robot towards the goal.
struct Path {
  std::vector<Vec2> points;
  std::vector<Cell> cells;
  int straight_moves = 0;
  int diagonal_moves = 0;

  /// Grid cost in meters: (straight + sqrt(2) * diagonal) * resolution.
  double cost(double resolution) const;
};

/// 8-connected A* with octile heuristic. Diagonal moves between two blocked
/// orthogonal neighbours are forbidden. Ties go to the earlier heap insertion.
/// When `goal_point` is given it is appended after the goal cell center.
Path plan_astar(const Costmap& costmap, const Cell& start, const Cell& goal,
                const std::optional<Vec2>& goal_point = std::nullopt);

/// Nearest free cell to `from` by breadth-first search, or nullopt.
std::optional<Cell> nearest_free_cell(const Costmap& costmap, const Cell& from);

struct LocalGoal {
  Vec2 point = Vec2::Zero();  // robot frame
  Vec2 unit = Vec2::UnitX();
  double lookahead = 2.0;
  bool fallback = false;
  int index = 0;  // index of the selected path point
};

inline constexpr double kDefaultLookahead = 2.0;

/// Among path points at least `lookahead` from the robot, picks the closest
/// (smallest index on ties). Without such a point the last path point is used
/// and `fallback` is set. Throws DegenerateGoal when the pick coincides with
/// the robot position.
LocalGoal extract_local_goal(const std::vector<Vec2>& path, const Pose2& robot,
                             double lookahead = kDefaultLookahead);

}  // namespace lics
