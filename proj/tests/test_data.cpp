#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <set>

#include "dhlight/data/cityflow.hpp"
#include "dhlight/data/flow.hpp"
#include "dhlight/error.hpp"

using namespace dhlight;
using namespace dhlight::data;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = DHLIGHT_FIXTURE_DIR;

std::size_t count_from(const FlowSpec& flow, const std::string& road) {
  std::size_t n = 0;
  for (const auto& v : flow.vehicles) n += v.route.front() == road;
  return n;
}

std::vector<double> times_from(const FlowSpec& flow, const std::string& road) {
  std::vector<double> t;
  for (const auto& v : flow.vehicles)
    if (v.route.front() == road) t.push_back(v.entry_time);
  return t;
}

}  // namespace

TEST_CASE("turn ratios validate") {
  TurnRatios{}.validate();
  CHECK_THROWS_AS((TurnRatios{0.5, 0.5, 0.1}.validate()), ConfigError);
  CHECK_THROWS_AS((TurnRatios{-0.1, 0.8, 0.3}.validate()), ConfigError);
}

TEST_CASE("gaussian preset") {
  const auto net = sim::build_grid(4, 4);
  const FlowSpec flow = gen_gaussian_flow(0, net);
  CHECK(flow.total() == 1473);
  CHECK(flow.well_formed());
  std::set<std::string> entries, exits;
  for (std::size_t r : net.entry_roads()) entries.insert(net.road(r).id);
  for (std::size_t r : net.exit_roads()) exits.insert(net.road(r).id);
  for (const auto& v : flow.vehicles) {
    CHECK(entries.count(v.route.front()) == 1);
    CHECK(exits.count(v.route.back()) == 1);
    CHECK(v.entry_time >= 0.0);
    CHECK(v.entry_time < 3600.0);
  }
  // Routes are connected road by road.
  CHECK(bind_flow(flow, net).size() == 1473);

  GaussianFlowConfig one;
  one.total = 1;
  CHECK(gen_gaussian_flow(9, net, one).total() == 1);
  CHECK(gen_gaussian_flow(3, net) == gen_gaussian_flow(3, net));
  CHECK_FALSE(gen_gaussian_flow(3, net) == gen_gaussian_flow(4, net));
}

TEST_CASE("gaussian entry times follow the configured profile") {
  const auto net = sim::build_grid(4, 4);
  GaussianFlowConfig cfg;
  cfg.total = 20000;
  const FlowSpec flow = gen_gaussian_flow(1, net, cfg);
  double mean = 0.0;
  for (const auto& v : flow.vehicles) mean += v.entry_time;
  mean /= static_cast<double>(flow.total());
  double var = 0.0;
  for (const auto& v : flow.vehicles) var += (v.entry_time - mean) * (v.entry_time - mean);
  var /= static_cast<double>(flow.total());
  CHECK(mean == doctest::Approx(1800.0).epsilon(0.01));
  // Truncation at +-3 sigma shrinks the std by about 1.4%.
  CHECK(std::sqrt(var) == doctest::Approx(600.0 * 0.9865).epsilon(0.02));
}

TEST_CASE("gaussian turn ratios are honoured at the first intersection") {
  const auto net = sim::build_grid(4, 4);
  GaussianFlowConfig cfg;
  cfg.total = 20000;
  const FlowSpec flow = gen_gaussian_flow(2, net, cfg);
  std::size_t left = 0, through = 0, right = 0;
  for (const auto& v : flow.vehicles) {
    const auto& in = net.road(net.road_index(v.route[0]));
    const auto& out = net.road(net.road_index(v.route[1]));
    switch (*sim::movement_between(in.to_side, out.from_side)) {
      case sim::Movement::kLeft: ++left; break;
      case sim::Movement::kThrough: ++through; break;
      case sim::Movement::kRight: ++right; break;
    }
  }
  const double n = static_cast<double>(flow.total());
  // 4 sigma of a binomial proportion at n=20000 is under 0.015.
  CHECK(std::abs(left / n - 0.1) < 0.015);
  CHECK(std::abs(through / n - 0.6) < 0.015);
  CHECK(std::abs(right / n - 0.3) < 0.015);
}

TEST_CASE("uniform flow rates") {
  const auto one = sim::build_grid(1, 1);
  UniformFlowConfig cfg;
  cfg.horizon = 3600.0;
  const FlowSpec flow = gen_uniform_flow(0, one, cfg);
  const auto we = times_from(flow, "entry_0_0_W");
  const auto sn = times_from(flow, "entry_0_0_S");
  REQUIRE(we.size() == 300);
  REQUIRE(sn.size() == 90);
  CHECK(flow.total() == 390);
  for (std::size_t i = 1; i < we.size(); ++i) CHECK(we[i] - we[i - 1] == doctest::Approx(12.0));
  for (std::size_t i = 1; i < sn.size(); ++i) CHECK(sn[i] - sn[i - 1] == doctest::Approx(40.0));
  CHECK(we.front() == 0.0);
  for (const auto& v : flow.vehicles) {
    if (v.route.front() == "entry_0_0_W") CHECK(v.route.back() == "exit_0_0_E");
    if (v.route.front() == "entry_0_0_S") CHECK(v.route.back() == "exit_0_0_N");
  }

  cfg.horizon = 12.0;
  const FlowSpec tiny = gen_uniform_flow(0, one, cfg);
  CHECK(count_from(tiny, "entry_0_0_W") == 1);
  CHECK(tiny.vehicles.front().entry_time == 0.0);

  cfg.horizon = 0.0;
  CHECK_THROWS_AS(gen_uniform_flow(0, one, cfg), ConfigError);
}

TEST_CASE("6x6 preset totals 3000") {
  const auto net = sim::build_grid(6, 6);
  const FlowSpec flow = gen_uniform_flow(0, net);
  CHECK(flow.total() == 3000);
  CHECK(flow.well_formed());
  CHECK(bind_flow(flow, net).size() == 3000);
}

TEST_CASE("flow round trip") {
  const auto net = sim::build_grid(4, 4);
  const FlowSpec flow = gen_gaussian_flow(5, net);
  const FlowSpec back = parse_flow(serialize_flow(flow), "memory");
  CHECK(back == flow);

  const fs::path tmp = fs::temp_directory_path() / "dhlight_flow_roundtrip.json";
  save_flow(tmp, flow);
  CHECK(load_flow(tmp, net) == flow);
  fs::remove(tmp);
}

TEST_CASE("flow record expansion") {
  const std::string one =
      R"([{"vehicle":{},"route":["a","b"],"interval":5,"startTime":30,"endTime":30}])";
  const FlowSpec f = parse_flow(one, "inline");
  REQUIRE(f.total() == 1);
  CHECK(f.vehicles[0].entry_time == 30.0);

  const std::string many =
      R"([{"vehicle":{},"route":["a"],"interval":10,"startTime":0,"endTime":25},
          {"vehicle":{},"route":["b"],"interval":7,"startTime":3,"endTime":3}])";
  const FlowSpec g = parse_flow(many, "inline");
  CHECK(g.total() == 4);
  CHECK(g.well_formed());
  CHECK(g.vehicles[1].route.front() == "b");

  CHECK_THROWS_AS(parse_flow("{", "broken"), ParseError);
  CHECK_THROWS_AS(parse_flow(R"([{"route":["a"]}])", "missing"), ParseError);
}

TEST_CASE("unknown or disconnected roads are reference errors") {
  const auto net = sim::build_grid(2, 2);
  FlowSpec f;
  f.vehicles.push_back({{"entry_0_0_W", "no_such_road"}, 0.0});
  CHECK_THROWS_AS(bind_flow(f, net), ReferenceError);
  f.vehicles[0].route = {"entry_0_0_W", "exit_1_1_E"};
  CHECK_THROWS_AS(bind_flow(f, net), ReferenceError);
}

TEST_CASE("minimal hand-written roadnet") {
  const auto net = load_roadnet(kFixtures / "one_intersection_roadnet.json");
  CHECK(net.intersection_count() == 1);
  CHECK(net.entry_roads().size() == 4);
  CHECK(net.exit_roads().size() == 4);
  const auto& c = net.intersection(0);
  CHECK(net.road(c.incoming[0]).id == "in_E");
  CHECK(net.road(c.incoming[1]).id == "in_S");
  CHECK(net.road(c.outgoing[3]).id == "out_N");
  CHECK(net.road(0).length_m == doctest::Approx(300.0));

  const FlowSpec flow = load_flow(kFixtures / "one_intersection_flow.json", net);
  CHECK(flow.total() == 7);
  sim::Simulator sim(net, bind_flow(flow, net));
  std::vector<int> phases(1);
  for (int i = 0; i < 100; ++i) {
    phases[0] = 1 + (i / 3) % 4;
    sim.step(phases);
  }
  CHECK(sim.metrics().exited() == 7);
}

TEST_CASE("roadnet errors") {
  CHECK_THROWS_AS(load_roadnet(kFixtures / "does_not_exist.json"), DataError);
  try {
    parse_roadnet("{\"intersections\": [}", "bad.json");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("bad.json") != std::string::npos);
  }
  // Two roads arriving from the same side.
  const std::string dup = R"({
    "intersections": [
      {"id": "c", "point": {"x": 0, "y": 0}, "virtual": false, "roadLinks": [], "trafficLight": {"lightphases": []}},
      {"id": "e1", "point": {"x": 300, "y": 0}, "virtual": true},
      {"id": "e2", "point": {"x": 300, "y": 10}, "virtual": true}
    ],
    "roads": [
      {"id": "r1", "startIntersection": "e1", "endIntersection": "c", "lanes": [{}]},
      {"id": "r2", "startIntersection": "e2", "endIntersection": "c", "lanes": [{}]}
    ]})";
  try {
    parse_roadnet(dup, "dup.json");
    FAIL("expected UnsupportedFeatureError");
  } catch (const UnsupportedFeatureError& e) {
    CHECK(std::string(e.what()).find("'c'") != std::string::npos);
  }
}

TEST_CASE("grid roadnet round trip") {
  const auto grid = sim::build_grid(3, 4);
  const auto back = parse_roadnet(serialize_grid_roadnet(grid), "grid");
  REQUIRE(back.intersection_count() == grid.intersection_count());
  REQUIRE(back.road_count() == grid.road_count());
  for (std::size_t i = 0; i < grid.intersection_count(); ++i) {
    const auto& a = grid.intersection(i);
    const auto idx = back.find_intersection(a.id);
    REQUIRE(idx.has_value());
    const auto& b = back.intersection(*idx);
    for (std::size_t s = 0; s < sim::kSides; ++s) {
      CHECK(grid.road(a.incoming[s]).id == back.road(b.incoming[s]).id);
      CHECK(grid.road(a.outgoing[s]).id == back.road(b.outgoing[s]).id);
    }
  }
  // The same flow binds and simulates identically on both.
  const FlowSpec flow = gen_gaussian_flow(8, grid);
  sim::Simulator s1(grid, bind_flow(flow, grid));
  sim::Simulator s2(back, bind_flow(flow, back));
  std::vector<int> phases(grid.intersection_count(), 1);
  for (int i = 0; i < 200; ++i) {
    for (std::size_t k = 0; k < phases.size(); ++k) phases[k] = 1 + static_cast<int>((i + k) % 4);
    s1.step(phases);
    s2.step(phases);
  }
  CHECK(s1.metrics().exited() == s2.metrics().exited());
}

TEST_CASE("real datasets when present") {
  const char* dir = std::getenv("DHLIGHT_DATA_DIR");
  if (!dir) {
    MESSAGE("DHLIGHT_DATA_DIR not set; skipping Hangzhou and Jinan checks");
    return;
  }
  struct Expect {
    const char* name;
    std::size_t intersections;
    std::size_t vehicles;
  };
  for (const Expect& e : {Expect{"hangzhou", 16, 6984}, Expect{"jinan", 12, 6295}}) {
    const fs::path root = fs::path(dir) / e.name;
    if (!fs::exists(root / "roadnet.json")) {
      MESSAGE("no " << (root / "roadnet.json").string() << "; skipping");
      continue;
    }
    const auto net = load_roadnet(root / "roadnet.json");
    CHECK(net.intersection_count() == e.intersections);
    CHECK(load_flow(root / "flow.json", net).total() == e.vehicles);
  }
}
