#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dhlight/harness/results.hpp"

namespace dhlight::harness {

// ATT against episode, one polyline (and legend entry) per run id.
std::string att_curve_svg(const ResultsTable& results);

struct SweepPoint {
  std::string label;
  double att_secs = 0.0;
};
std::string sweep_bar_svg(const std::string& param, const std::vector<SweepPoint>& points);

// Writes att_curve.svg into out_dir and returns the written paths. Empty
// results print a warning and write nothing.
std::vector<std::filesystem::path> emit_plots(const ResultsTable& results, const std::filesystem::path& out_dir);

}  // namespace dhlight::harness
