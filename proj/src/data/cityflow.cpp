#include "dhlight/data/cityflow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dhlight/error.hpp"
#include "dhlight/sim/simulator.hpp"

namespace dhlight::data {

using json = nlohmann::json;
using sim::kBoundary;
using sim::Movement;
using sim::Side;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source + ": at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing field '" + key + "'");
  return *it;
}

std::string string_field(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_string()) throw ParseError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

double number_field(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number()) throw ParseError(where + "." + key + ": expected a number");
  return v.get<double>();
}

const json& array_field(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_array()) throw ParseError(where + "." + key + ": expected an array");
  return v;
}

// Direction from (x0, y0) towards (x1, y1) quantised to a side.
Side direction_side(double x0, double y0, double x1, double y1) {
  const double deg = std::atan2(y1 - y0, x1 - x0) * 180.0 / M_PI;
  if (deg >= -45.0 && deg < 45.0) return Side::kEast;
  if (deg >= 45.0 && deg < 135.0) return Side::kNorth;
  if (deg >= -135.0 && deg < -45.0) return Side::kSouth;
  return Side::kWest;
}

std::optional<Movement> link_movement(const std::string& type) {
  if (type == "turn_left") return Movement::kLeft;
  if (type == "go_straight") return Movement::kThrough;
  if (type == "turn_right") return Movement::kRight;
  return std::nullopt;
}

struct RawIntersection {
  std::string id;
  double x = 0.0, y = 0.0;
  bool is_virtual = false;
  const json* source = nullptr;
};

}  // namespace

sim::RoadNetwork parse_roadnet(const std::string& text, const std::string& source, const sim::LaneConfig& defaults) {
  const json doc = parse_json(text, source);
  const json& jints = array_field(doc, "intersections", source);
  const json& jroads = array_field(doc, "roads", source);

  std::vector<RawIntersection> raw;
  std::map<std::string, std::size_t> raw_index;
  for (std::size_t i = 0; i < jints.size(); ++i) {
    const std::string where = source + ": intersections[" + std::to_string(i) + "]";
    const json& j = jints[i];
    RawIntersection r;
    r.id = string_field(j, "id", where);
    const json& point = field(j, "point", where);
    r.x = number_field(point, "x", where + ".point");
    r.y = number_field(point, "y", where + ".point");
    if (auto v = j.find("virtual"); v != j.end() && v->is_boolean()) {
      r.is_virtual = v->get<bool>();
    } else {
      auto links = j.find("roadLinks");
      r.is_virtual = links == j.end() || !links->is_array() || links->empty();
    }
    r.source = &j;
    if (!raw_index.emplace(r.id, raw.size()).second) throw ParseError(where + ": duplicate id '" + r.id + "'");
    raw.push_back(std::move(r));
  }

  std::vector<sim::Intersection> nodes;
  std::map<std::string, int> node_index;
  for (const RawIntersection& r : raw) {
    if (r.is_virtual) continue;
    sim::Intersection n;
    n.id = r.id;
    n.x = r.x;
    n.y = r.y;
    node_index.emplace(r.id, static_cast<int>(nodes.size()));
    nodes.push_back(std::move(n));
  }

  std::vector<sim::Road> roads;
  for (std::size_t i = 0; i < jroads.size(); ++i) {
    const std::string where = source + ": roads[" + std::to_string(i) + "]";
    const json& j = jroads[i];
    sim::Road road;
    road.id = string_field(j, "id", where);
    const std::string start = string_field(j, "startIntersection", where);
    const std::string end = string_field(j, "endIntersection", where);
    const json& lanes = array_field(j, "lanes", where);
    auto si = raw_index.find(start);
    auto ei = raw_index.find(end);
    if (si == raw_index.end()) throw ReferenceError(where + ": unknown startIntersection '" + start + "'");
    if (ei == raw_index.end()) throw ReferenceError(where + ": unknown endIntersection '" + end + "'");
    const RawIntersection& a = raw[si->second];
    const RawIntersection& b = raw[ei->second];
    road.from = a.is_virtual ? kBoundary : node_index.at(a.id);
    road.to = b.is_virtual ? kBoundary : node_index.at(b.id);
    road.from_side = direction_side(a.x, a.y, b.x, b.y);
    road.to_side = direction_side(b.x, b.y, a.x, a.y);
    road.length_m = std::hypot(b.x - a.x, b.y - a.y);
    if (!(road.length_m > 0.0)) throw ParseError(where + ": zero-length road");
    road.speed_mps = defaults.speed_mps;
    if (!lanes.empty()) {
      if (auto ms = lanes[0].find("maxSpeed"); ms != lanes[0].end() && ms->is_number()) {
        road.speed_mps = ms->get<double>();
      }
    }
    const int ridx = static_cast<int>(roads.size());
    if (road.to != kBoundary) {
      int& slot = nodes[road.to].incoming[sim::side_index(road.to_side)];
      if (slot >= 0) {
        throw UnsupportedFeatureError(source + ": intersection '" + nodes[road.to].id + "' has two approaches from side " +
                                      sim::side_letter(road.to_side) + " (only 4-approach layouts are supported)");
      }
      slot = ridx;
    }
    if (road.from != kBoundary) {
      int& slot = nodes[road.from].outgoing[sim::side_index(road.from_side)];
      if (slot >= 0) {
        throw UnsupportedFeatureError(source + ": intersection '" + nodes[road.from].id + "' has two exits towards side " +
                                      sim::side_letter(road.from_side) + " (only 4-approach layouts are supported)");
      }
      slot = ridx;
    }
    roads.push_back(std::move(road));
  }

  std::map<std::string, std::size_t> road_lookup;
  for (std::size_t r = 0; r < roads.size(); ++r) road_lookup.emplace(roads[r].id, r);

  // Map light phases onto the internal four-phase model.
  for (const RawIntersection& r : raw) {
    if (r.is_virtual) continue;
    const std::string where = source + ": intersection '" + r.id + "'";
    const json& j = *r.source;
    const json& links = array_field(j, "roadLinks", where);
    std::vector<std::optional<std::pair<Side, Movement>>> link_keys;
    std::set<std::pair<Side, Movement>> existing;
    for (std::size_t k = 0; k < links.size(); ++k) {
      const std::string lw = where + ".roadLinks[" + std::to_string(k) + "]";
      const auto type = link_movement(string_field(links[k], "type", lw));
      const std::string start_road = string_field(links[k], "startRoad", lw);
      auto it = road_lookup.find(start_road);
      if (it == road_lookup.end()) throw ReferenceError(lw + ": unknown startRoad '" + start_road + "'");
      if (!type) throw UnsupportedFeatureError(lw + ": unknown link type");
      const std::pair<Side, Movement> key{roads[it->second].to_side, *type};
      link_keys.emplace_back(key);
      if (*type != Movement::kRight) existing.insert(key);
    }
    const json& light = field(j, "trafficLight", where);
    const json& phases = array_field(light, "lightphases", where + ".trafficLight");
    std::vector<std::set<std::pair<Side, Movement>>> offered;
    for (std::size_t p = 0; p < phases.size(); ++p) {
      const std::string pw = where + ".lightphases[" + std::to_string(p) + "]";
      std::set<std::pair<Side, Movement>> set;
      for (const json& idx : array_field(phases[p], "availableRoadLinks", pw)) {
        if (!idx.is_number_integer() || idx.get<long long>() < 0 ||
            static_cast<std::size_t>(idx.get<long long>()) >= link_keys.size()) {
          throw ParseError(pw + ": availableRoadLinks entry out of range");
        }
        const auto& key = link_keys[static_cast<std::size_t>(idx.get<long long>())];
        if (key && key->second != Movement::kRight) set.insert(*key);
      }
      offered.push_back(std::move(set));
    }
    for (int phase = sim::kMinPhase; phase <= sim::kMaxPhase; ++phase) {
      std::set<std::pair<Side, Movement>> wanted;
      for (const auto& mv : sim::phase_movements(phase))
        if (existing.count(mv)) wanted.insert(mv);
      if (wanted.empty()) continue;
      if (std::find(offered.begin(), offered.end(), wanted) == offered.end()) {
        throw UnsupportedFeatureError(where + ": no light phase matches internal phase " + std::to_string(phase));
      }
    }
  }

  return sim::RoadNetwork(std::move(nodes), std::move(roads), defaults);
}

sim::RoadNetwork load_roadnet(const std::filesystem::path& path, const sim::LaneConfig& defaults) {
  return parse_roadnet(read_file(path), path.string(), defaults);
}

FlowSpec parse_flow(const std::string& text, const std::string& source) {
  const json doc = parse_json(text, source);
  if (!doc.is_array()) throw ParseError(source + ": flow file must be a JSON array");
  FlowSpec flow;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = source + ": [" + std::to_string(i) + "]";
    const json& rec = doc[i];
    field(rec, "vehicle", where);
    std::vector<std::string> route;
    for (const json& r : array_field(rec, "route", where)) {
      if (!r.is_string()) throw ParseError(where + ".route: expected road id strings");
      route.push_back(r.get<std::string>());
    }
    if (route.empty()) throw ParseError(where + ".route: empty route");
    const double interval = number_field(rec, "interval", where);
    const double start = number_field(rec, "startTime", where);
    const double end = number_field(rec, "endTime", where);
    if (start < 0.0 || end < start) throw ParseError(where + ": need 0 <= startTime <= endTime");
    if (!(interval > 0.0) && end > start) throw ParseError(where + ": interval must be positive");
    for (std::size_t k = 0;; ++k) {
      const double t = start + static_cast<double>(k) * interval;
      if (t > end || (k > 0 && !(interval > 0.0))) break;
      flow.vehicles.push_back({route, t});
    }
  }
  std::stable_sort(flow.vehicles.begin(), flow.vehicles.end(),
                   [](const VehicleDemand& a, const VehicleDemand& b) { return a.entry_time < b.entry_time; });
  return flow;
}

FlowSpec load_flow(const std::filesystem::path& path) { return parse_flow(read_file(path), path.string()); }

FlowSpec load_flow(const std::filesystem::path& path, const sim::RoadNetwork& network) {
  FlowSpec flow = load_flow(path);
  try {
    bind_flow(flow, network);
  } catch (const ReferenceError& e) {
    throw ReferenceError(path.string() + ": " + e.what());
  }
  return flow;
}

std::string serialize_flow(const FlowSpec& flow) {
  const json vehicle = {{"length", 5.0},     {"width", 2.0},       {"maxPosAcc", 2.0},
                        {"maxNegAcc", 4.5},  {"usualPosAcc", 2.0}, {"usualNegAcc", 4.5},
                        {"minGap", 2.5},     {"maxSpeed", 11.111}, {"headwayTime", 1.5}};
  json doc = json::array();
  for (const VehicleDemand& d : flow.vehicles) {
    doc.push_back({{"vehicle", vehicle},
                   {"route", d.route},
                   {"interval", 1.0},
                   {"startTime", d.entry_time},
                   {"endTime", d.entry_time}});
  }
  return doc.dump(1);
}

void save_flow(const std::filesystem::path& path, const FlowSpec& flow) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << serialize_flow(flow) << '\n';
}

std::string serialize_grid_roadnet(const sim::RoadNetwork& grid) {
  const double len = grid.lane_config().length_m;
  json intersections = json::array();
  json roads = json::array();
  std::map<std::string, json> virtuals;

  auto point_of = [&](int node) { return std::pair{grid.intersection(node).x, grid.intersection(node).y}; };
  auto offset = [&](std::pair<double, double> p, Side s) {
    switch (s) {
      case Side::kEast: p.first += len; break;
      case Side::kWest: p.first -= len; break;
      case Side::kNorth: p.second += len; break;
      case Side::kSouth: p.second -= len; break;
    }
    return p;
  };
  auto virtual_id = [&](int node, Side s) {
    return "virtual_" + grid.intersection(node).id.substr(13) + "_" + sim::side_letter(s);
  };
  auto add_virtual = [&](int node, Side s) {
    const std::string id = virtual_id(node, s);
    const auto p = offset(point_of(node), s);
    virtuals.emplace(id, json{{"id", id},
                              {"point", {{"x", p.first}, {"y", p.second}}},
                              {"roads", json::array()},
                              {"roadLinks", json::array()},
                              {"virtual", true}});
    return id;
  };

  for (const sim::Road& r : grid.roads()) {
    std::string start, end;
    if (r.from == kBoundary) {
      start = add_virtual(r.to, r.to_side);
    } else {
      start = grid.intersection(r.from).id;
    }
    if (r.to == kBoundary) {
      end = add_virtual(r.from, r.from_side);
    } else {
      end = grid.intersection(r.to).id;
    }
    json lanes = json::array();
    for (int k = 0; k < 3; ++k) lanes.push_back({{"width", 3.0}, {"maxSpeed", r.speed_mps}});
    roads.push_back({{"id", r.id}, {"startIntersection", start}, {"endIntersection", end}, {"lanes", lanes}});
  }

  for (std::size_t n = 0; n < grid.intersection_count(); ++n) {
    const sim::Intersection& node = grid.intersection(n);
    json links = json::array();
    std::vector<std::pair<Side, Movement>> keys;
    json road_ids = json::array();
    for (std::size_t s = 0; s < sim::kSides; ++s) {
      if (node.incoming[s] >= 0) road_ids.push_back(grid.road(node.incoming[s]).id);
      if (node.outgoing[s] >= 0) road_ids.push_back(grid.road(node.outgoing[s]).id);
    }
    static constexpr const char* kTypes[] = {"turn_left", "go_straight", "turn_right"};
    for (std::size_t s = 0; s < sim::kSides; ++s) {
      if (node.incoming[s] < 0) continue;
      const Side approach = sim::side_from_index(static_cast<int>(s));
      for (int m = 0; m < 3; ++m) {
        const int out = node.outgoing[sim::side_index(sim::exit_side(approach, static_cast<Movement>(m)))];
        if (out < 0) continue;
        links.push_back({{"type", kTypes[m]},
                         {"startRoad", grid.road(node.incoming[s]).id},
                         {"endRoad", grid.road(out).id},
                         {"direction", 0},
                         {"laneLinks", json::array()}});
        keys.emplace_back(approach, static_cast<Movement>(m));
      }
    }
    json phases = json::array();
    // Index 0 carries right turns only, as CityFlow's conventional yellow phase.
    for (int phase = 0; phase <= sim::kMaxPhase; ++phase) {
      json avail = json::array();
      for (std::size_t k = 0; k < keys.size(); ++k) {
        const bool on = keys[k].second == Movement::kRight ||
                        (phase > 0 && sim::phase_permits(phase, keys[k].first, keys[k].second));
        if (on) avail.push_back(k);
      }
      phases.push_back({{"time", phase == 0 ? 5 : 30}, {"availableRoadLinks", avail}});
    }
    intersections.push_back({{"id", node.id},
                             {"point", {{"x", node.x}, {"y", node.y}}},
                             {"roads", road_ids},
                             {"roadLinks", links},
                             {"trafficLight", {{"lightphases", phases}}},
                             {"virtual", false}});
  }
  for (auto& [id, v] : virtuals) intersections.push_back(v);
  return json{{"intersections", intersections}, {"roads", roads}}.dump(1);
}

}  // namespace dhlight::data
