#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace dhlight::sim {

// Side of an intersection a road attaches to. Clockwise order, so for a
// vehicle approaching from side a the left/through/right exits are a+1, a+2, a+3.
enum class Side : int { kEast = 0, kSouth = 1, kWest = 2, kNorth = 3 };
enum class Movement : int { kLeft = 0, kThrough = 1, kRight = 2 };

inline constexpr std::size_t kSides = 4;
inline constexpr std::size_t kLanesPerRoad = 3;
inline constexpr std::size_t kApproachLanes = kSides * kLanesPerRoad;  // 12
inline constexpr std::size_t kPhaseCount = 4;
inline constexpr std::size_t kObservationDim = kPhaseCount + kApproachLanes;  // 16

constexpr int side_index(Side s) { return static_cast<int>(s); }
constexpr Side side_from_index(int i) { return static_cast<Side>(((i % 4) + 4) % 4); }
constexpr Side opposite(Side s) { return side_from_index(side_index(s) + 2); }
// Exit side for a vehicle arriving from `approach` and performing `m`.
constexpr Side exit_side(Side approach, Movement m) {
  return side_from_index(side_index(approach) + 1 + static_cast<int>(m));
}
// Movement implied by arriving from `approach` and leaving through `exit`;
// nullopt for a U-turn.
std::optional<Movement> movement_between(Side approach, Side exit);

char side_letter(Side s);
char movement_letter(Movement m);

struct LaneConfig {
  double length_m = 300.0;
  double speed_mps = 11.11;
  double saturation_vps = 0.5;
  double vehicle_spacing_m = 7.5;
};

inline constexpr int kBoundary = -1;

struct Road {
  std::string id;
  int from = kBoundary;  // intersection index, or kBoundary for an entry road
  int to = kBoundary;    // intersection index, or kBoundary for an exit road
  Side from_side = Side::kEast;  // side of `from` the road leaves through
  Side to_side = Side::kEast;    // approach side at `to`
  double length_m = 300.0;
  double speed_mps = 11.11;

  double travel_time() const { return length_m / speed_mps; }
};

struct Intersection {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  // Indexed by side; -1 when the approach does not exist.
  std::array<int, kSides> incoming{-1, -1, -1, -1};
  std::array<int, kSides> outgoing{-1, -1, -1, -1};
};

// Directed road graph. Every road carries three lanes (L, T, R); lane index is
// road * 3 + movement. Intersections are the signal-controlled agents.
class RoadNetwork {
 public:
  RoadNetwork() = default;
  RoadNetwork(std::vector<Intersection> intersections, std::vector<Road> roads, LaneConfig lanes,
              std::size_t rows = 0, std::size_t cols = 0);

  const std::vector<Intersection>& intersections() const { return intersections_; }
  const std::vector<Road>& roads() const { return roads_; }
  const Intersection& intersection(std::size_t i) const;
  const Road& road(std::size_t r) const { return roads_.at(r); }
  std::size_t intersection_count() const { return intersections_.size(); }
  std::size_t road_count() const { return roads_.size(); }
  std::size_t lane_count() const { return roads_.size() * kLanesPerRoad; }
  const LaneConfig& lane_config() const { return lanes_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::optional<std::size_t> find_road(const std::string& id) const;
  std::size_t road_index(const std::string& id) const;  // throws ReferenceError
  std::optional<std::size_t> find_intersection(const std::string& id) const;

  std::vector<std::size_t> entry_roads() const;
  std::vector<std::size_t> exit_roads() const;

  static std::size_t lane_of(std::size_t road, Movement m) {
    return road * kLanesPerRoad + static_cast<std::size_t>(m);
  }
  // Lane capacity in vehicles: floor(length / spacing), at least 1.
  std::size_t lane_capacity(std::size_t road) const;

  // Checks structural invariants; throws ConfigError describing the first
  // violation.
  void validate() const;

 private:
  std::vector<Intersection> intersections_;
  std::vector<Road> roads_;
  LaneConfig lanes_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::unordered_map<std::string, std::size_t> road_lookup_;
  std::unordered_map<std::string, std::size_t> intersection_lookup_;
};

// rows × cols grid with row 0 on the north edge and intersection ids
// "intersection_<row>_<col>" in row-major order. Each peripheral approach gets
// a boundary entry and exit road.
RoadNetwork build_grid(int rows, int cols, const LaneConfig& lanes = {});

}  // namespace dhlight::sim
