#include "lics/planning.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <queue>

#include "lics/error.hpp"

namespace lics {

namespace {

constexpr std::array<std::array<int, 2>, 8> kNeighbours{{
    {1, 0}, {0, 1}, {-1, 0}, {0, -1}, {1, 1}, {-1, 1}, {-1, -1}, {1, -1}}};

double octile(const Cell& a, const Cell& b) {
  const int dx = std::abs(a.col - b.col);
  const int dy = std::abs(a.row - b.row);
  const int lo = std::min(dx, dy);
  const int hi = std::max(dx, dy);
  return static_cast<double>(hi - lo) + std::numbers::sqrt2 * lo;
}

}  // namespace

Costmap inflate(const World& world, double radius) {
  Costmap map;
  map.resolution = world.resolution;
  map.width = world.width;
  map.height = world.height;
  map.cost.assign(world.cells.size(), CellCost::kFree);

  const double band = radius + std::numbers::sqrt2 * world.resolution;
  const int reach = static_cast<int>(std::ceil(band / world.resolution));
  for (int row = 0; row < world.height; ++row) {
    for (int col = 0; col < world.width; ++col) {
      if (!world.occupied(col, row)) continue;
      for (int dy = -reach; dy <= reach; ++dy) {
        for (int dx = -reach; dx <= reach; ++dx) {
          const Cell c{col + dx, row + dy};
          if (!map.in_bounds(c)) continue;
          const double d = std::hypot(dx, dy) * world.resolution;
          auto& cost = map.cost[map.index(c)];
          if (d <= radius + 1e-9) {
            cost = CellCost::kLethal;
          } else if (d <= band + 1e-9 && cost == CellCost::kFree) {
            cost = CellCost::kInflated;
          }
        }
      }
    }
  }
  return map;
}

double Path::cost(double resolution) const {
  return (straight_moves + std::numbers::sqrt2 * diagonal_moves) * resolution;
}

Path plan_astar(const Costmap& costmap, const Cell& start, const Cell& goal,
                const std::optional<Vec2>& goal_point) {
  if (costmap.blocked(start)) throw NoPath("start cell is lethal or out of bounds");
  if (costmap.blocked(goal)) throw NoPath("goal cell is lethal or out of bounds");

  struct Entry {
    double f;
    std::uint64_t order;
    int index;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.f != b.f) return a.f > b.f;
      return a.order > b.order;
    }
  };

  const std::size_t n = costmap.cost.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> g(n, inf);
  std::vector<int> straight(n, 0), diagonal(n, 0), parent(n, -1);
  std::vector<char> closed(n, 0);
  std::priority_queue<Entry, std::vector<Entry>, Later> open;
  std::uint64_t order = 0;

  const auto start_idx = static_cast<int>(costmap.index(start));
  const auto goal_idx = static_cast<int>(costmap.index(goal));
  g[start_idx] = 0.0;
  open.push({octile(start, goal), order++, start_idx});

  while (!open.empty()) {
    const Entry top = open.top();
    open.pop();
    if (closed[top.index]) continue;
    closed[top.index] = 1;
    if (top.index == goal_idx) break;

    const Cell cur{top.index % costmap.width, top.index / costmap.width};
    for (const auto& [dx, dy] : kNeighbours) {
      const Cell next{cur.col + dx, cur.row + dy};
      if (costmap.blocked(next)) continue;
      const bool diag = dx != 0 && dy != 0;
      if (diag && costmap.blocked({cur.col + dx, cur.row}) &&
          costmap.blocked({cur.col, cur.row + dy})) {
        continue;
      }
      const auto ni = static_cast<int>(costmap.index(next));
      if (closed[ni]) continue;
      const int s = straight[top.index] + (diag ? 0 : 1);
      const int d = diagonal[top.index] + (diag ? 1 : 0);
      const double cost = s + std::numbers::sqrt2 * d;
      if (cost < g[ni]) {
        g[ni] = cost;
        straight[ni] = s;
        diagonal[ni] = d;
        parent[ni] = top.index;
        open.push({cost + octile(next, goal), order++, ni});
      }
    }
  }

  if (!closed[goal_idx]) throw NoPath("goal unreachable from start");

  Path path;
  path.straight_moves = straight[goal_idx];
  path.diagonal_moves = diagonal[goal_idx];
  for (int i = goal_idx; i != -1; i = parent[i]) {
    path.cells.push_back({i % costmap.width, i / costmap.width});
  }
  std::reverse(path.cells.begin(), path.cells.end());
  path.points.reserve(path.cells.size() + 1);
  for (const auto& c : path.cells) path.points.push_back(costmap.cell_center(c));
  if (goal_point) {
    if (path.points.size() == 1) {
      path.points.back() = *goal_point;
    } else if ((path.points.back() - *goal_point).norm() > 0.0) {
      path.points.push_back(*goal_point);
    }
  }
  return path;
}

std::optional<Cell> nearest_free_cell(const Costmap& costmap, const Cell& from) {
  if (!costmap.in_bounds(from)) return std::nullopt;
  if (!costmap.blocked(from)) return from;
  std::vector<char> seen(costmap.cost.size(), 0);
  std::deque<Cell> queue{from};
  seen[costmap.index(from)] = 1;
  while (!queue.empty()) {
    const Cell cur = queue.front();
    queue.pop_front();
    for (const auto& [dx, dy] : kNeighbours) {
      const Cell next{cur.col + dx, cur.row + dy};
      if (!costmap.in_bounds(next) || seen[costmap.index(next)]) continue;
      if (!costmap.blocked(next)) return next;
      seen[costmap.index(next)] = 1;
      queue.push_back(next);
    }
  }
  return std::nullopt;
}

LocalGoal extract_local_goal(const std::vector<Vec2>& path, const Pose2& robot,
                             double lookahead) {
  if (path.empty()) throw DegenerateGoal("empty path");
  LocalGoal goal;
  goal.lookahead = lookahead;
  double best = std::numeric_limits<double>::infinity();
  int best_index = -1;
  Vec2 best_point = Vec2::Zero();
  for (std::size_t i = 0; i < path.size(); ++i) {
    const Vec2 p = to_robot_frame(robot, path[i]);
    const double d = p.norm();
    if (d >= lookahead && d < best) {
      best = d;
      best_index = static_cast<int>(i);
      best_point = p;
    }
  }
  if (best_index < 0) {
    best_index = static_cast<int>(path.size()) - 1;
    best_point = to_robot_frame(robot, path.back());
    goal.fallback = true;
  }
  const double norm = best_point.norm();
  if (norm < 1e-6) throw DegenerateGoal("local goal coincides with robot position");
  goal.point = best_point;
  goal.unit = best_point / norm;
  goal.index = best_index;
  return goal;
}

}  // namespace lics
