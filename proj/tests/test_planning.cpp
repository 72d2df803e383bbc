#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "doctest.h"
#include "lics/error.hpp"
#include "lics/planning.hpp"
#include "experiments.hpp"
#include "oracles.hpp"

using namespace lics;

TEST_SUITE("planning") {

TEST_CASE("zero radius inflation marks exactly the occupied cells") {
  WorldgenConfig cfg;
  cfg.seed = 3;
  const World w = generate_world(cfg);
  const Costmap map = inflate(w, 0.0);
  for (int row = 0; row < w.height; ++row)
    for (int col = 0; col < w.width; ++col)
      CHECK((map.cost[map.index({col, row})] == CellCost::kLethal) == w.occupied(col, row));
}

TEST_CASE("single cell inflated by one resolution is a plus") {
  World w = World::empty("one", 9, 9, 0.15);
  w.set(4, 4, true);
  const Costmap map = inflate(w, 0.15);
  int lethal = 0;
  for (int row = 0; row < 9; ++row) {
    for (int col = 0; col < 9; ++col) {
      const double d = (w.cell_center({col, row}) - w.cell_center({4, 4})).norm();
      const bool expect = d <= 0.15 + 1e-9;
      CHECK((map.cost[map.index({col, row})] == CellCost::kLethal) == expect);
      lethal += expect;
    }
  }
  CHECK(lethal == 5);
  CHECK(map.cost[map.index({5, 5})] == CellCost::kInflated);
}

TEST_CASE("huge radius makes everything lethal") {
  World w = World::empty("one", 8, 6, 0.15);
  w.set(0, 0, true);
  const Costmap map = inflate(w, std::hypot(8, 6) * 0.15);
  for (auto c : map.cost) CHECK(c == CellCost::kLethal);
}

TEST_CASE("A* corner to corner of a 3x3 grid") {
  const Costmap map = inflate(World::empty("open", 3, 3, 1.0), 0.0);
  const Path p = plan_astar(map, {0, 0}, {2, 2});
  CHECK(p.diagonal_moves == 2);
  CHECK(p.straight_moves == 0);
  CHECK(p.cost(1.0) == doctest::Approx(2 * std::numbers::sqrt2));
  CHECK(p.cost(1.0) == doctest::Approx(oracle::dijkstra_cost(map, {0, 0}, {2, 2})));
  CHECK(p.points.size() == 3);
}

TEST_CASE("A* with start equal to goal") {
  const Costmap map = inflate(World::empty("open", 5, 5, 0.15), 0.0);
  const Path p = plan_astar(map, {2, 3}, {2, 3});
  CHECK(p.points.size() == 1);
  CHECK(p.cost(0.15) == 0.0);
  const Path q = plan_astar(map, {2, 3}, {2, 3}, Vec2(0.4, 0.5));
  CHECK(q.points.back() == Vec2(0.4, 0.5));
}

TEST_CASE("A* refuses blocked endpoints and cut corners") {
  World w = World::empty("diag", 2, 2, 1.0);
  w.set(1, 0, true);
  w.set(0, 1, true);
  const Costmap map = inflate(w, 0.0);
  CHECK_THROWS_AS(plan_astar(map, {0, 0}, {1, 1}), NoPath);
  CHECK_THROWS_AS(plan_astar(map, {0, 0}, {1, 0}), NoPath);
  CHECK(std::isinf(oracle::dijkstra_cost(map, {0, 0}, {1, 1})));
}

TEST_CASE("A* cost equals Dijkstra on random 30x30 maps") {
  const auto r = experiment::planner_exactness(100, 2024);
  CHECK(r.maps == 100);
  CHECK(r.solved > 50);
  CHECK(r.cost_mismatches == 0);
  CHECK(r.bad_paths == 0);
  CHECK(r.no_path_mismatches == 0);
}


TEST_CASE("A* is deterministic") {
  WorldgenConfig cfg;
  cfg.seed = 8;
  const World w = generate_world(cfg);
  const Costmap map = inflate(w, default_inflation_radius());
  const Path a = plan_astar(map, w.cell_of(w.start.position()), w.cell_of(w.goal), w.goal);
  const Path b = plan_astar(map, w.cell_of(w.start.position()), w.cell_of(w.goal), w.goal);
  CHECK(a.cells == b.cells);
  CHECK(a.points.back() == w.goal);
}

TEST_CASE("nearest free cell") {
  World w = World::empty("n", 5, 5, 1.0);
  w.set(2, 2, true);
  const Costmap map = inflate(w, 0.0);
  CHECK(nearest_free_cell(map, {0, 0}) == Cell{0, 0});
  const auto c = nearest_free_cell(map, {2, 2});
  REQUIRE(c.has_value());
  CHECK(std::abs(c->col - 2) + std::abs(c->row - 2) == 1);
  CHECK_FALSE(nearest_free_cell(map, {9, 9}).has_value());
}

TEST_CASE("local goal picks the closest point beyond the lookahead") {
  const std::vector<Vec2> path{{0.5, 0}, {1.5, 0}, {2.5, 0}};
  const LocalGoal g = extract_local_goal(path, {}, 2.0);
  CHECK(g.point == Vec2(2.5, 0));
  CHECK(g.unit == Vec2(1, 0));
  CHECK(g.index == 2);
  CHECK_FALSE(g.fallback);

  const LocalGoal single = extract_local_goal({{0, 3}}, {}, 2.0);
  CHECK(single.point == Vec2(0, 3));
  CHECK(single.unit.x() == doctest::Approx(0.0));
  CHECK(single.unit.y() == doctest::Approx(1.0));

  const LocalGoal near = extract_local_goal({{0.2, 0.1}, {0.5, 0.5}, {0.9, -0.3}}, {}, 2.0);
  CHECK(near.fallback);
  CHECK(near.index == 2);
  CHECK(near.point == Vec2(0.9, -0.3));
}

TEST_CASE("local goal ties go to the smaller index") {
  const LocalGoal g = extract_local_goal({{0, 2.5}, {2.5, 0}}, {}, 2.0);
  CHECK(g.index == 0);
}

TEST_CASE("local goal on the robot is degenerate") {
  CHECK_THROWS_AS(extract_local_goal({{1.0, 1.0}}, {1.0, 1.0, 0.3}, 2.0), DegenerateGoal);
  CHECK_THROWS_AS(extract_local_goal({}, {}, 2.0), DegenerateGoal);
}

TEST_CASE("local goal invariants on random cases") {
  const auto r = experiment::local_goal_invariants(1000, 99);
  CHECK(r.cases == 1000);
  CHECK(r.fallbacks < 500);
  CHECK(r.worst_unit_error <= 1e-9);
  CHECK(r.short_goals == 0);
  CHECK(r.worst_equivariance <= 1e-9);
  CHECK(r.index_changes == 0);
}


}
