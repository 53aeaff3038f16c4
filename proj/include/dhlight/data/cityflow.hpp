#pragma once

#include <filesystem>
#include <string>

#include "dhlight/data/flow.hpp"
#include "dhlight/sim/network.hpp"

namespace dhlight::data {

// Reads a CityFlow roadnet file. Virtual intersections become the boundary;
// every other intersection becomes a signalised agent. Approach sides are
// derived from intersection coordinates. Each intersection's light phases must
// cover the four internal phases (restricted to the movements that exist),
// otherwise UnsupportedFeatureError names the intersection.
sim::RoadNetwork load_roadnet(const std::filesystem::path& path, const sim::LaneConfig& defaults = {});
sim::RoadNetwork parse_roadnet(const std::string& text, const std::string& source,
                               const sim::LaneConfig& defaults = {});

// Reads a CityFlow flow file, expanding each record over
// startTime, startTime + interval, ... <= endTime.
FlowSpec load_flow(const std::filesystem::path& path);
// As above, and checks every route against the network.
FlowSpec load_flow(const std::filesystem::path& path, const sim::RoadNetwork& network);
FlowSpec parse_flow(const std::string& text, const std::string& source);

// One record per vehicle with startTime == endTime.
std::string serialize_flow(const FlowSpec& flow);
void save_flow(const std::filesystem::path& path, const FlowSpec& flow);

// Emits a CityFlow roadnet for a network built by sim::build_grid, with a
// ring of virtual intersections at the boundary.
std::string serialize_grid_roadnet(const sim::RoadNetwork& grid);

}  // namespace dhlight::data
