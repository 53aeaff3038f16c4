#include "dhlight/harness/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "dhlight/error.hpp"

namespace dhlight::harness {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 180.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 60.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo, hi;
};

Range padded(double lo, double hi) {
  if (hi - lo < 1e-9) {
    lo -= 1.0;
    hi += 1.0;
  }
  return {lo, hi};
}

std::string header(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
                  "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
       "</text>\n";
  const double x1 = kWidth - kRight;
  const double y1 = kHeight - kBottom;
  s += "<line class=\"axis\" x1=\"" + num(kLeft) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y1) +
       "\" stroke=\"black\"/>\n";
  s += "<line class=\"axis\" x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
       num(y1) + "\" stroke=\"black\"/>\n";
  s += "<text x=\"" + num((kLeft + x1) / 2) + "\" y=\"" + num(kHeight - 15) +
       "\" text-anchor=\"middle\" font-size=\"12\">" + escape(xlabel) + "</text>\n";
  s += "<text x=\"18\" y=\"" + num((kTop + y1) / 2) + "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 18 " +
       num((kTop + y1) / 2) + ")\">" + escape(ylabel) + "</text>\n";
  return s;
}

std::string y_ticks(Range y) {
  std::string s;
  const double y1 = kHeight - kBottom;
  for (int i = 0; i <= 4; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / 4.0;
    const double py = y1 - (y1 - kTop) * i / 4.0;
    s += "<line x1=\"" + num(kLeft - 4) + "\" y1=\"" + num(py) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(py) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(py + 4) + "\" text-anchor=\"end\" font-size=\"10\">" + num(v) +
         "</text>\n";
  }
  return s;
}

}  // namespace

std::string att_curve_svg(const ResultsTable& results) {
  const auto ids = results.run_ids();
  double xmax = 0.0;
  double ylo = 1e300;
  double yhi = -1e300;
  for (const ResultRow& r : results.rows()) {
    xmax = std::max(xmax, static_cast<double>(r.episode));
    ylo = std::min(ylo, r.att_secs);
    yhi = std::max(yhi, r.att_secs);
  }
  if (results.empty()) ylo = yhi = 0.0;
  const Range x = padded(0.0, xmax);
  const Range y = padded(ylo, yhi);
  const double x1 = kWidth - kRight;
  const double y1 = kHeight - kBottom;
  auto px = [&](double v) { return kLeft + (v - x.lo) / (x.hi - x.lo) * (x1 - kLeft); };
  auto py = [&](double v) { return y1 - (v - y.lo) / (y.hi - y.lo) * (y1 - kTop); };

  std::string s = header("Average travel time per episode", "episode", "ATT (s)");
  s += y_ticks(y);
  for (int i = 0; i <= 4; ++i) {
    const double v = x.lo + (x.hi - x.lo) * i / 4.0;
    s += "<text x=\"" + num(px(v)) + "\" y=\"" + num(y1 + 16) + "\" text-anchor=\"middle\" font-size=\"10\">" +
         num(v) + "</text>\n";
  }
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    std::string points;
    std::string label;
    for (const ResultRow& r : results.rows()) {
      if (r.run_id != ids[k]) continue;
      if (!points.empty()) points += ' ';
      points += num(px(static_cast<double>(r.episode))) + "," + num(py(r.att_secs));
      label = r.run_id + " (" + r.controller + ")";
    }
    s += "<polyline class=\"series\" fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" +
         points + "\"/>\n";
    if (points.find(' ') == std::string::npos) {
      const auto comma = points.find(',');
      s += "<circle cx=\"" + points.substr(0, comma) + "\" cy=\"" + points.substr(comma + 1) + "\" r=\"3\" fill=\"" +
           color + "\"/>\n";
    }
    const double ly = kTop + 10 + 18.0 * static_cast<double>(k);
    s += "<g class=\"legend-entry\"><line x1=\"" + num(x1 + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(x1 + 32) +
         "\" y2=\"" + num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/><text x=\"" + num(x1 + 36) + "\" y=\"" +
         num(ly + 4) + "\" font-size=\"11\">" + escape(label) + "</text></g>\n";
  }
  return s + "</svg>\n";
}

std::string sweep_bar_svg(const std::string& param, const std::vector<SweepPoint>& points) {
  double yhi = 0.0;
  for (const SweepPoint& p : points) yhi = std::max(yhi, p.att_secs);
  const Range y = padded(0.0, yhi * 1.1);
  const double x1 = kWidth - kRight;
  const double y1 = kHeight - kBottom;
  auto py = [&](double v) { return y1 - (v - y.lo) / (y.hi - y.lo) * (y1 - kTop); };
  std::string s = header("Sensitivity to " + param, param, "ATT (s)");
  s += y_ticks(y);
  const double slot = (x1 - kLeft) / static_cast<double>(std::max<std::size_t>(1, points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double bx = kLeft + slot * (static_cast<double>(i) + 0.2);
    const double top = py(points[i].att_secs);
    s += "<rect class=\"bar\" x=\"" + num(bx) + "\" y=\"" + num(top) + "\" width=\"" + num(slot * 0.6) + "\" height=\"" +
         num(y1 - top) + "\" fill=\"" + kPalette[0] + "\"/>\n";
    s += "<text x=\"" + num(bx + slot * 0.3) + "\" y=\"" + num(y1 + 16) + "\" text-anchor=\"middle\" font-size=\"10\">" +
         escape(points[i].label) + "</text>\n";
    s += "<text x=\"" + num(bx + slot * 0.3) + "\" y=\"" + num(top - 4) + "\" text-anchor=\"middle\" font-size=\"10\">" +
         num(points[i].att_secs) + "</text>\n";
  }
  s += "<g class=\"legend-entry\"><rect x=\"" + num(x1 + 12) + "\" y=\"" + num(kTop + 4) +
       "\" width=\"14\" height=\"10\" fill=\"" + kPalette[0] + "\"/><text x=\"" + num(x1 + 30) + "\" y=\"" +
       num(kTop + 13) + "\" font-size=\"11\">mean ATT, last episodes</text></g>\n";
  return s + "</svg>\n";
}

std::vector<std::filesystem::path> emit_plots(const ResultsTable& results, const std::filesystem::path& out_dir) {
  if (results.empty()) {
    std::cerr << "warning: no results to plot\n";
    return {};
  }
  std::filesystem::create_directories(out_dir);
  const auto path = out_dir / "att_curve.svg";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << att_curve_svg(results);
  return {path};
}

}  // namespace dhlight::harness
