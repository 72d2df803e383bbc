#pragma once

// Small hand-built worlds shared by several suites.

#include <cmath>
#include <numbers>
#include <string>

#include "lics/geometry.hpp"
#include "lics/world.hpp"

namespace fixture {

using lics::Footprint;
using lics::World;

// Walled box with the goal `distance` meters straight ahead of the start.
inline World open_box(const std::string& id, double distance) {
  const double res = 0.15;
  const int w = 30;
  const int h = static_cast<int>(std::ceil((distance + 2.0) / res));
  World world = World::empty(id, w, h, res);
  for (int c = 0; c < w; ++c) {
    world.set(c, 0, true);
    world.set(c, h - 1, true);
  }
  for (int r = 0; r < h; ++r) {
    world.set(0, r, true);
    world.set(w - 1, r, true);
  }
  world.start = {2.325, 0.975, std::numbers::pi / 2};
  world.goal = {2.325, 0.975 + distance};
  world.shortest_path_length = shortest_path_length(world, Footprint{}.circumscribed_radius());
  return world;
}

// Same box with a solid wall between start and goal.
inline World blocked_box() {
  World world = open_box("blocked", 4.0);
  for (int c = 0; c < world.width; ++c) world.set(c, 15, true);
  return world;
}

}  // namespace fixture
