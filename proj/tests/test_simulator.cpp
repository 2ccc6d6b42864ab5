#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "lineage/imagecore.hpp"
#include "lineage/simulator.hpp"

using namespace lineage;
using namespace lineage::sim;

namespace {

bool touching(const LabelMask& m, std::uint32_t a, std::uint32_t b) {
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c + 1 < m.width; ++c) {
      const auto x = m.at(r, c), y = m.at(r, c + 1);
      if ((x == a && y == b) || (x == b && y == a)) return true;
    }
  }
  for (int r = 0; r + 1 < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      const auto x = m.at(r, c), y = m.at(r + 1, c);
      if ((x == a && y == b) || (x == b && y == a)) return true;
    }
  }
  return false;
}

bool has_event(const std::vector<Event>& events, Event e) {
  return std::find(events.begin(), events.end(), e) != events.end();
}

}  // namespace

TEST_CASE("canonical scenario produces its scripted events") {
  for (std::uint64_t seed : {1u, 2u, 3u, 11u, 20u}) {
    CAPTURE(seed);
    const Simulation s = simulate(script_collision_scenario(seed));
    CHECK(s.sequence.length() == 20);
    CHECK(s.truth.masks.size() == 20);
    for (int t : {8, 9, 10}) {
      CHECK(has_event(s.truth.events, {t, EventKind::Collision, {1, 2}}));
      CHECK(touching(s.truth.masks[static_cast<std::size_t>(t - 1)], 1, 2));
    }
    CHECK_FALSE(touching(s.truth.masks[0], 1, 2));
    CHECK(has_event(s.truth.events, {12, EventKind::Mitosis, {3, 6, 7}}));
    const Track* parent = s.truth.lineage.find(3);
    REQUIRE(parent != nullptr);
    CHECK(parent->end == 11);
    CHECK(s.truth.lineage.find(6)->parent == 3);
    CHECK(s.truth.lineage.find(7)->birth == 12);
    const Track* dying = s.truth.lineage.find(4);
    REQUIRE(dying != nullptr);
    CHECK(dying->end < 20);
    CHECK(dying->end >= 14);
    CHECK(has_event(s.truth.events, {dying->end + 1, EventKind::Apoptosis, {4}}));
    CHECK(std::is_sorted(s.truth.events.begin(), s.truth.events.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; }));
  }
}

TEST_CASE("same config, same output") {
  const Simulation a = simulate(script_collision_scenario(4));
  const Simulation b = simulate(script_collision_scenario(4));
  const Simulation c = simulate(script_collision_scenario(5));
  for (std::size_t i = 0; i < a.truth.masks.size(); ++i) {
    CHECK(a.truth.masks[i] == b.truth.masks[i]);
    CHECK(a.sequence.frames[i].pixels == b.sequence.frames[i].pixels);
  }
  CHECK(a.truth.lineage.tracks == b.truth.lineage.tracks);
  CHECK(a.truth.events == b.truth.events);
  CHECK(a.sequence.frames[0].pixels != c.sequence.frames[0].pixels);
}

TEST_CASE("noise-free rendering: background level and bright cell centers") {
  SimConfig cfg = script_collision_scenario(2);
  cfg.noise_sigma = 0.0;
  const Simulation s = simulate(cfg);
  const Frame& f = s.sequence.frame(1);
  const LabelMask& m = s.truth.masks[0];
  const auto cells = cells_by_label(m);
  CHECK(cells.size() == 5);
  for (const Cell& c : cells) {
    const Pixel p = nearest_pixel(c.centroid);
    CHECK(f.at(p.row, p.col) > 150);
  }
  CHECK(f.at(0, 0) >= 25);
  CHECK(f.at(0, 0) <= 30);
}

TEST_CASE("masks agree with the track table") {
  SimConfig cfg = script_collision_scenario(9);
  cfg.mitosis_prob = 0.05;
  cfg.apoptosis_prob = 0.02;
  cfg.entry_script = {5, 6};
  const Simulation s = simulate(cfg);
  CHECK_NOTHROW(validate_tracks(s.truth.lineage.tracks));
  CHECK_NOTHROW(validate_against_masks(s.truth.lineage.tracks, s.truth.masks));
  CHECK(std::count_if(s.truth.events.begin(), s.truth.events.end(),
                      [](const Event& e) { return e.kind == EventKind::New; }) == 2);
}

TEST_CASE("scripts naming absent cells fail") {
  SimConfig cfg = script_collision_scenario(1);
  cfg.mitosis_script.push_back({5, 42});
  CHECK_THROWS_AS(simulate(cfg), ScriptError);
  cfg = script_collision_scenario(1);
  cfg.apoptosis_script.push_back({15, 3});  // divided at 12
  CHECK_THROWS_AS(simulate(cfg), ScriptError);
  cfg = script_collision_scenario(1);
  cfg.collision_script.push_back({11, 1, 5});
  CHECK_THROWS_AS(simulate(cfg), ScriptError);
}

TEST_CASE("config validation") {
  SimConfig cfg;
  cfg.frames = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.radius_min = 12;
  cfg.radius_max = 10;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.collision_script = {{1, 1, 2}};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.mitosis_prob = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("json round trip and strict keys") {
  SimConfig cfg = script_collision_scenario(77);
  cfg.entry_script = {3};
  cfg.mitosis_prob = 0.125;
  const std::string text = sim_config_to_json(cfg);
  const SimConfig back = sim_config_from_json(text);
  CHECK(sim_config_to_json(back) == text);
  CHECK(back.rng_seed == 77);
  CHECK(back.collision_script.size() == 3);
  CHECK(back.entry_script == std::vector<int>{3});
  CHECK_THROWS_WITH_AS(sim_config_from_json(R"({"frames": 5, "speed": 2})"), doctest::Contains("speed"),
                       std::invalid_argument);
  CHECK_THROWS_AS(sim_config_from_json("[1]"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(sim_config_from_json(R"({"collision_script": [{"t": 8, "cell_a": 1, "cell_b": 2}, {"a": 1}]})"),
                       doctest::Contains("collision_script[1] needs integer 't'"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(sim_config_from_json(R"({"mitosis_script": [{"t": 8, "cell": "x"}]})"),
                       doctest::Contains("mitosis_script[0] needs integer 'cell'"), std::invalid_argument);
  CHECK_THROWS_AS(sim_config_from_json(R"({"radius_range": [3]})"), std::invalid_argument);
  CHECK_THROWS_AS(sim_config_from_json("{"), std::invalid_argument);
  const SimConfig partial = sim_config_from_json(R"({"frames": 7})");
  CHECK(partial.frames == 7);
  CHECK(partial.width == 256);
}
