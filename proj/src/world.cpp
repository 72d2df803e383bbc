#include "lics/world.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "lics/error.hpp"
#include "lics/planning.hpp"

namespace lics {

World World::empty(std::string id, int width, int height, double resolution) {
  World w;
  w.id = std::move(id);
  w.width = width;
  w.height = height;
  w.resolution = resolution;
  w.cells.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
  return w;
}

Cell World::cell_of(const Vec2& p) const {
  return {static_cast<int>(std::floor(p.x() / resolution)),
          static_cast<int>(std::floor(p.y() / resolution))};
}

bool World::operator==(const World& other) const {
  return id == other.id && resolution == other.resolution && width == other.width &&
         height == other.height && cells == other.cells && start == other.start &&
         goal == other.goal && shortest_path_length == other.shortest_path_length;
}

void WorldgenConfig::validate() const {
  if (!(fill_probability >= 0.0 && fill_probability <= 1.0))
    throw InvalidConfig("fill_probability must lie in [0, 1]");
  if (width < 10 || height < 10) throw InvalidConfig("width and height must be >= 10");
  if (smoothing_iterations < 0) throw InvalidConfig("smoothing_iterations must be >= 0");
  if (!(resolution > 0.0)) throw InvalidConfig("resolution must be > 0");
  if (corridor_margin < 0.0) throw InvalidConfig("corridor_margin must be >= 0");
  if (retry_budget < 1) throw InvalidConfig("retry_budget must be >= 1");
}

namespace {

void fill_and_smooth(World& world, const WorldgenConfig& cfg, std::mt19937_64& rng) {
  std::bernoulli_distribution fill(cfg.fill_probability);
  for (int row = 0; row < world.height; ++row) {
    for (int col = 0; col < world.width; ++col) {
      const bool border =
          row == 0 || col == 0 || row == world.height - 1 || col == world.width - 1;
      world.set(col, row, border || fill(rng));
    }
  }
  // Majority rule over the interior part of the 3x3 neighbourhood. The border
  // wall is fixed and does not vote, so an empty fill stays empty.
  auto interior = [&](int col, int row) {
    return col > 0 && row > 0 && col < world.width - 1 && row < world.height - 1;
  };
  for (int it = 0; it < cfg.smoothing_iterations; ++it) {
    std::vector<std::uint8_t> next = world.cells;
    for (int row = 1; row < world.height - 1; ++row) {
      for (int col = 1; col < world.width - 1; ++col) {
        int count = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            count += interior(col + dx, row + dy) && world.occupied(col + dx, row + dy);
        next[world.index(col, row)] = count >= 5 ? 1 : 0;
      }
    }
    world.cells = std::move(next);
  }
}

void clear_disk(World& world, const Vec2& center, double radius) {
  for (int row = 1; row < world.height - 1; ++row) {
    for (int col = 1; col < world.width - 1; ++col) {
      if ((world.cell_center({col, row}) - center).norm() <= radius) world.set(col, row, false);
    }
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

World generate_world(const WorldgenConfig& cfg) {
  cfg.validate();
  World world = World::empty(cfg.id, cfg.width, cfg.height, cfg.resolution);
  const Cell start_cell{cfg.width / 2, 3};
  const Cell goal_cell{cfg.width / 2, cfg.height - 4};
  world.start = {world.cell_center(start_cell).x(), world.cell_center(start_cell).y(),
                 std::numbers::pi / 2.0};
  world.goal = world.cell_center(goal_cell);

  for (int attempt = 0; attempt < cfg.retry_budget; ++attempt) {
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(attempt)));
    fill_and_smooth(world, cfg, rng);
    clear_disk(world, world.start.position(), cfg.corridor_margin);
    clear_disk(world, world.goal, cfg.corridor_margin);
    try {
      const Costmap map = inflate(world, cfg.connectivity_radius);
      plan_astar(map, start_cell, goal_cell);
      world.shortest_path_length = shortest_path_length(world, cfg.footprint_radius);
      return world;
    } catch (const NoPath&) {
      continue;
    }
  }
  throw ConnectivityFailure("no connected world after " + std::to_string(cfg.retry_budget) +
                            " attempts; fill_probability is too high");
}

double shortest_path_length(const World& world, double footprint_radius) {
  const Costmap map = inflate(world, footprint_radius);
  const Path path =
      plan_astar(map, world.cell_of(world.start.position()), world.cell_of(world.goal));
  const double length = path.cost(world.resolution);
  // A path between distinct cells is never shorter than the straight line.
  return std::max(length, (world.goal - world.start.position()).norm());
}

void save_world(const World& world, std::ostream& out) {
  out << "id: " << world.id << '\n';
  out << "resolution: " << format_double(world.resolution) << '\n';
  out << "width: " << world.width << '\n';
  out << "height: " << world.height << '\n';
  out << "start: " << format_double(world.start.x) << ' ' << format_double(world.start.y)
      << ' ' << format_double(world.start.theta) << '\n';
  out << "goal: " << format_double(world.goal.x()) << ' ' << format_double(world.goal.y())
      << '\n';
  out << "lstar: " << format_double(world.shortest_path_length) << '\n';
  out << '\n';
  for (int row = 0; row < world.height; ++row) {
    std::string line(static_cast<std::size_t>(world.width), '.');
    for (int col = 0; col < world.width; ++col) {
      if (world.occupied(col, row)) line[static_cast<std::size_t>(col)] = '#';
    }
    out << line << '\n';
  }
}

namespace {

[[noreturn]] void parse_fail(int line, const std::string& what) {
  throw ParseError("line " + std::to_string(line) + ": " + what);
}

std::vector<double> parse_numbers(const std::string& text, std::size_t expected, int line,
                                  const std::string& key) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string token;
  while (in >> token) {
    double v = 0.0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
      parse_fail(line, "field '" + key + "': bad number '" + token + "'");
    out.push_back(v);
  }
  if (out.size() != expected)
    parse_fail(line, "field '" + key + "': expected " + std::to_string(expected) +
                         " values, got " + std::to_string(out.size()));
  return out;
}

}  // namespace

World load_world(std::istream& in) {
  std::map<std::string, std::pair<std::string, int>> header;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) break;
    const auto colon = line.find(':');
    if (colon == std::string::npos) parse_fail(line_no, "expected 'key: value'");
    std::string key = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    const auto first = value.find_first_not_of(' ');
    value = first == std::string::npos ? "" : value.substr(first);
    header[key] = {value, line_no};
  }

  auto field = [&](const std::string& key) -> const std::pair<std::string, int>& {
    auto it = header.find(key);
    if (it == header.end()) parse_fail(line_no, "missing header field '" + key + "'");
    return it->second;
  };
  auto number = [&](const std::string& key) {
    const auto& [text, at] = field(key);
    return parse_numbers(text, 1, at, key)[0];
  };
  auto integer = [&](const std::string& key) {
    const double v = number(key);
    if (v != std::floor(v) || v < 1.0) parse_fail(field(key).second, "field '" + key + "' must be a positive integer");
    return static_cast<int>(v);
  };

  World world;
  world.id = field("id").first;
  world.resolution = number("resolution");
  if (!(world.resolution > 0.0)) parse_fail(field("resolution").second, "resolution must be > 0");
  world.width = integer("width");
  world.height = integer("height");
  const auto start = parse_numbers(field("start").first, 3, field("start").second, "start");
  world.start = {start[0], start[1], start[2]};
  const auto goal = parse_numbers(field("goal").first, 2, field("goal").second, "goal");
  world.goal = {goal[0], goal[1]};
  world.shortest_path_length = number("lstar");

  world.cells.reserve(static_cast<std::size_t>(world.width) * world.height);
  int rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    for (char ch : line) {
      if (ch != '#' && ch != '.') parse_fail(line_no, std::string("bad cell character '") + ch + "'");
      world.cells.push_back(ch == '#' ? 1 : 0);
    }
    ++rows;
  }
  const std::size_t expected = static_cast<std::size_t>(world.width) * world.height;
  if (world.cells.size() != expected) {
    parse_fail(line_no, "cells length " + std::to_string(world.cells.size()) +
                            " != width*height " + std::to_string(expected) + " (" +
                            std::to_string(rows) + " rows)");
  }
  return world;
}

void save_world_file(const World& world, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  save_world(world, out);
}

World load_world_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return load_world(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<World> load_world_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".world")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<World> worlds;
  worlds.reserve(files.size());
  for (const auto& f : files) worlds.push_back(load_world_file(f));
  return worlds;
}

WorldSplit split_worlds(const std::vector<World>& worlds, double train_fraction,
                        std::uint64_t seed) {
  const std::size_t n = worlds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates by hand: std::shuffle's draw pattern is implementation-defined.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  const auto n_train = static_cast<std::size_t>(
      std::llround(std::clamp(train_fraction, 0.0, 1.0) * static_cast<double>(n)));
  std::vector<char> in_train(n, 0);
  for (std::size_t k = 0; k < n_train; ++k) in_train[order[k]] = 1;
  WorldSplit split;
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? split.train : split.test).push_back(worlds[i]);
  return split;
}

}  // namespace lics
