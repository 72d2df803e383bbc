#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "lics/geometry.hpp"

namespace lics {

struct Cell {
  int col = 0;
  int row = 0;
  bool operator==(const Cell&) const = default;
};

/// Occupancy-grid world with start/goal metadata. Row 0 is the smallest y;
/// the world frame origin sits at the lower-left grid corner.
struct World {
  std::string id;
  double resolution = 0.15;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> cells;  // row-major, 1 = occupied
  Pose2 start;
  Vec2 goal = Vec2::Zero();
  double shortest_path_length = 0.0;  // L*, meters

  static World empty(std::string id, int width, int height, double resolution);

  bool in_bounds(int col, int row) const {
    return col >= 0 && row >= 0 && col < width && row < height;
  }
  /// Out-of-bounds cells report as occupied.
  bool occupied(int col, int row) const {
    return !in_bounds(col, row) || cells[index(col, row)] != 0;
  }
  void set(int col, int row, bool occ) { cells[index(col, row)] = occ ? 1 : 0; }
  std::size_t index(int col, int row) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(col);
  }
  Cell cell_of(const Vec2& p) const;
  Vec2 cell_center(const Cell& c) const {
    return {(c.col + 0.5) * resolution, (c.row + 0.5) * resolution};
  }
  bool contains(const Vec2& p) const {
    return p.x() >= 0.0 && p.y() >= 0.0 && p.x() < width * resolution &&
           p.y() < height * resolution;
  }

  bool operator==(const World& other) const;
};

struct WorldgenConfig {
  std::uint64_t seed = 0;
  double fill_probability = 0.35;
  int smoothing_iterations = 1;
  int width = 30;
  int height = 30;
  double resolution = 0.15;
  double corridor_margin = 0.55;   // obstacle-free disk around start and goal
  // inflation used for the connectivity check; matches the planner default
  double connectivity_radius = Footprint{}.circumscribed_radius() + 0.05;
  double footprint_radius = Footprint{}.circumscribed_radius();  // used for L*
  int retry_budget = 100;
  std::string id;

  void validate() const;
};

/// Cellular-automaton clutter (random fill, majority smoothing) inside a walled
/// border. Regenerates with derived seeds until start and goal are connected.
World generate_world(const WorldgenConfig& cfg);

/// Minimum 8-connected path length from start to goal over the grid inflated by
/// `footprint_radius`. Throws NoPath.
double shortest_path_length(const World& world, double footprint_radius);

void save_world(const World& world, std::ostream& out);
World load_world(std::istream& in);
void save_world_file(const World& world, const std::filesystem::path& path);
World load_world_file(const std::filesystem::path& path);
/// Loads every `*.world` file in a directory, sorted by file name.
std::vector<World> load_world_dir(const std::filesystem::path& dir);

struct WorldSplit {
  std::vector<World> train;
  std::vector<World> test;
};

inline constexpr double kDefaultTrainFraction = 234.0 / 300.0;

/// Seeded disjoint partition; round(n * train_fraction) worlds go to train.
/// Each side keeps the original relative order.
WorldSplit split_worlds(const std::vector<World>& worlds,
                        double train_fraction = kDefaultTrainFraction,
                        std::uint64_t seed = 0);

}  // namespace lics
