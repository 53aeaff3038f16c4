#include "dhlight/sim/network.hpp"

#include <cmath>

#include "dhlight/error.hpp"

namespace dhlight::sim {

std::optional<Movement> movement_between(Side approach, Side exit) {
  const int delta = ((side_index(exit) - side_index(approach)) % 4 + 4) % 4;
  if (delta == 0) return std::nullopt;
  return static_cast<Movement>(delta - 1);
}

char side_letter(Side s) {
  static constexpr char kLetters[] = {'E', 'S', 'W', 'N'};
  return kLetters[side_index(s)];
}

char movement_letter(Movement m) {
  static constexpr char kLetters[] = {'L', 'T', 'R'};
  return kLetters[static_cast<int>(m)];
}

RoadNetwork::RoadNetwork(std::vector<Intersection> intersections, std::vector<Road> roads,
                         LaneConfig lanes, std::size_t rows, std::size_t cols)
    : intersections_(std::move(intersections)),
      roads_(std::move(roads)),
      lanes_(lanes),
      rows_(rows),
      cols_(cols) {
  for (std::size_t i = 0; i < roads_.size(); ++i) {
    if (!road_lookup_.emplace(roads_[i].id, i).second) {
      throw ConfigError("duplicate road id '" + roads_[i].id + "'");
    }
  }
  for (std::size_t i = 0; i < intersections_.size(); ++i) {
    if (!intersection_lookup_.emplace(intersections_[i].id, i).second) {
      throw ConfigError("duplicate intersection id '" + intersections_[i].id + "'");
    }
  }
  validate();
}

const Intersection& RoadNetwork::intersection(std::size_t i) const {
  if (i >= intersections_.size()) {
    throw LookupError("unknown intersection index " + std::to_string(i) + " (network has " +
                      std::to_string(intersections_.size()) + ")");
  }
  return intersections_[i];
}

std::optional<std::size_t> RoadNetwork::find_road(const std::string& id) const {
  if (auto it = road_lookup_.find(id); it != road_lookup_.end()) return it->second;
  return std::nullopt;
}

std::size_t RoadNetwork::road_index(const std::string& id) const {
  if (auto r = find_road(id)) return *r;
  throw ReferenceError("unknown road '" + id + "'");
}

std::optional<std::size_t> RoadNetwork::find_intersection(const std::string& id) const {
  if (auto it = intersection_lookup_.find(id); it != intersection_lookup_.end()) return it->second;
  return std::nullopt;
}

std::vector<std::size_t> RoadNetwork::entry_roads() const {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < roads_.size(); ++r)
    if (roads_[r].from == kBoundary && roads_[r].to != kBoundary) out.push_back(r);
  return out;
}

std::vector<std::size_t> RoadNetwork::exit_roads() const {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < roads_.size(); ++r)
    if (roads_[r].to == kBoundary) out.push_back(r);
  return out;
}

std::size_t RoadNetwork::lane_capacity(std::size_t road) const {
  const double cap = std::floor(roads_.at(road).length_m / lanes_.vehicle_spacing_m);
  return cap < 1.0 ? 1 : static_cast<std::size_t>(cap);
}

void RoadNetwork::validate() const {
  const int n = static_cast<int>(intersections_.size());
  for (std::size_t r = 0; r < roads_.size(); ++r) {
    const Road& road = roads_[r];
    if (road.from < kBoundary || road.from >= n || road.to < kBoundary || road.to >= n) {
      throw ConfigError("road '" + road.id + "' references a missing intersection");
    }
    if (!(road.length_m > 0.0) || !(road.speed_mps > 0.0)) {
      throw ConfigError("road '" + road.id + "' needs positive length and speed");
    }
    if (road.to != kBoundary &&
        intersections_[road.to].incoming[side_index(road.to_side)] != static_cast<int>(r)) {
      throw ConfigError("road '" + road.id + "' is not registered as an approach of its end intersection");
    }
    if (road.from != kBoundary &&
        intersections_[road.from].outgoing[side_index(road.from_side)] != static_cast<int>(r)) {
      throw ConfigError("road '" + road.id + "' is not registered as an exit of its start intersection");
    }
  }
  for (const Intersection& in : intersections_) {
    for (std::size_t s = 0; s < kSides; ++s) {
      const int rin = in.incoming[s];
      const int rout = in.outgoing[s];
      if (rin >= static_cast<int>(roads_.size()) || rout >= static_cast<int>(roads_.size())) {
        throw ConfigError("intersection '" + in.id + "' references a missing road");
      }
    }
  }
}

namespace {

std::string grid_id(int r, int c) {
  return "intersection_" + std::to_string(r) + "_" + std::to_string(c);
}

}  // namespace

RoadNetwork build_grid(int rows, int cols, const LaneConfig& lanes) {
  if (rows < 1 || cols < 1) {
    throw ConfigError("grid dimensions must be positive, got " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
  std::vector<Intersection> nodes(static_cast<std::size_t>(rows * cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      Intersection& in = nodes[static_cast<std::size_t>(r * cols + c)];
      in.id = grid_id(r, c);
      in.x = c * lanes.length_m;
      in.y = -r * lanes.length_m;
    }
  }
  auto neighbour = [&](int r, int c, Side s) -> int {
    switch (s) {
      case Side::kEast: return c + 1 < cols ? r * cols + c + 1 : kBoundary;
      case Side::kWest: return c - 1 >= 0 ? r * cols + c - 1 : kBoundary;
      case Side::kNorth: return r - 1 >= 0 ? (r - 1) * cols + c : kBoundary;
      case Side::kSouth: return r + 1 < rows ? (r + 1) * cols + c : kBoundary;
    }
    return kBoundary;
  };

  std::vector<Road> roads;
  auto add_road = [&](Road road) {
    roads.push_back(std::move(road));
    return static_cast<int>(roads.size() - 1);
  };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int idx = r * cols + c;
      for (int s = 0; s < 4; ++s) {
        const Side side = side_from_index(s);
        const int nb = neighbour(r, c, side);
        const std::string here = std::to_string(r) + "_" + std::to_string(c);
        // Outgoing road through `side`.
        Road out;
        out.from = idx;
        out.from_side = side;
        out.to = nb;
        out.to_side = opposite(side);
        out.length_m = lanes.length_m;
        out.speed_mps = lanes.speed_mps;
        if (nb == kBoundary) {
          out.id = std::string("exit_") + here + "_" + side_letter(side);
        } else {
          out.id = "road_" + here + "_" + nodes[nb].id.substr(13);
        }
        const int out_idx = add_road(out);
        nodes[idx].outgoing[s] = out_idx;
        if (nb != kBoundary) nodes[nb].incoming[side_index(opposite(side))] = out_idx;
        if (nb == kBoundary) {
          Road in;
          in.id = std::string("entry_") + here + "_" + side_letter(side);
          in.from = kBoundary;
          in.to = idx;
          in.to_side = side;
          in.from_side = opposite(side);
          in.length_m = lanes.length_m;
          in.speed_mps = lanes.speed_mps;
          nodes[idx].incoming[s] = add_road(in);
        }
      }
    }
  }
  return RoadNetwork(std::move(nodes), std::move(roads), lanes, static_cast<std::size_t>(rows),
                     static_cast<std::size_t>(cols));
}

}  // namespace dhlight::sim
