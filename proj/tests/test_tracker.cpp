#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "lineage/simulator.hpp"
#include "lineage/tracker.hpp"
#include "oracles.hpp"

using namespace lineage;

namespace {

std::vector<std::uint8_t> random_texture(std::mt19937& rng, int size) {
  std::vector<std::uint8_t> t(static_cast<std::size_t>(size) * size);
  for (auto& v : t) v = static_cast<std::uint8_t>(60 + rng() % 190);
  return t;
}

}  // namespace

TEST_CASE("ncc examples") {
  const std::vector<double> a{0.1, 0.5, 0.9, 0.3};
  std::vector<double> neg;
  for (double v : a) neg.push_back(1.0 - v);
  CHECK(ncc_score(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ncc_score(a, neg) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(ncc_score(a, std::vector<double>(4, 0.4)) == 0.0);
  CHECK(ncc_score({}, {}) == 0.0);
  CHECK_THROWS_AS(ncc_score(a, std::vector<double>(3, 0.0)), std::invalid_argument);
}

TEST_CASE("ncc is symmetric and invariant to positive affine maps") {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 2 + rng() % 60;
    std::vector<double> a(n), b(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = u(rng);
      b[i] = u(rng);
    }
    const double alpha = 0.05 + 10.0 * u(rng), beta = 5.0 * (u(rng) - 0.5);
    for (std::size_t i = 0; i < n; ++i) c[i] = alpha * b[i] + beta;
    const double s = ncc_score(a, b);
    CHECK(std::abs(s - ncc_score(b, a)) < 1e-12);
    CHECK(std::abs(s - ncc_score(a, c)) < 1e-9);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("identical frames give score 1 at the source placement") {
  std::mt19937 rng(1);
  const auto tex = random_texture(rng, 12);
  const Frame f = oracle::textured_frame(1, 80, 60, 20, 30, 12, tex);
  const Cell cell = oracle::square_cell(1, 20, 30, 12);
  const NccTracker tracker;
  const TrackerPrediction p = tracker.predict(f, f, cell, Direction::Forward);
  CHECK(p.valid);
  CHECK(p.score == 1.0);
  CHECK(p.region == template_bbox(cell, 2, 60, 80));
  CHECK(p.source_cell_id == 1);
}

TEST_CASE("translated texture lands on the exact offset and agrees with the exhaustive search") {
  std::mt19937 rng(7);
  const TrackerConfig cfg{.search_size = 60};
  const NccTracker tracker(cfg);
  for (int k = 0; k < 20; ++k) {
    const auto tex = random_texture(rng, 10);
    const int dy = static_cast<int>(rng() % 41) - 20, dx = static_cast<int>(rng() % 41) - 20;
    const Frame a = oracle::textured_frame(1, 100, 100, 45, 45, 10, tex);
    const Frame b = oracle::textured_frame(2, 100, 100, 45 + dy, 45 + dx, 10, tex);
    const Cell cell = oracle::square_cell(3, 45, 45, 10);
    const TrackerPrediction p = tracker.predict(a, b, cell, Direction::Forward);
    CAPTURE(dy);
    CAPTURE(dx);
    CHECK(p.region == template_bbox(cell, 2, 100, 100).translated(dy, dx));
    CHECK(p.region == oracle::exhaustive_ncc(a, b, cell, cfg));
    CHECK(p.valid);
  }
}

TEST_CASE("a cell moved outside the window is not found") {
  std::mt19937 rng(3);
  const auto tex = random_texture(rng, 10);
  const Frame a = oracle::textured_frame(1, 400, 60, 20, 20, 10, tex);
  const Frame b = oracle::textured_frame(2, 400, 60, 20, 220, 10, tex);
  const Cell cell = oracle::square_cell(1, 20, 20, 10);
  const TrackerPrediction p = NccTracker().predict(a, b, cell, Direction::Forward);
  CHECK_FALSE(p.valid);
  CHECK(p.score == 0.0);
}

TEST_CASE("constant template is invalid") {
  const Frame f(1, 30, 30, std::vector<std::uint8_t>(900, 50));
  const TrackerPrediction p = NccTracker().predict(f, f, oracle::square_cell(1, 5, 5, 4), Direction::Backward);
  CHECK_FALSE(p.valid);
  CHECK(p.direction == Direction::Backward);
}

TEST_CASE("frames of different size are rejected") {
  const Frame a(1, 30, 30), b(2, 31, 30);
  CHECK_THROWS_AS(NccTracker().predict(a, b, oracle::square_cell(1, 5, 5, 4), Direction::Forward),
                  std::invalid_argument);
}

TEST_CASE("search window is centered on the template and clipped") {
  const BBox t{50, 50, 59, 59};
  CHECK(search_window(t, 20, 200, 200) == BBox{45, 45, 64, 64});
  CHECK(search_window(t, 150, 200, 200) == BBox{0, 0, 129, 129});
  CHECK(search_window({0, 0, 9, 9}, 21, 100, 100) == BBox{0, 0, 14, 14});
}

TEST_CASE("window influence prefers the nearer of two identical blobs") {
  std::mt19937 rng(11);
  const auto tex = random_texture(rng, 8);
  Frame src = oracle::textured_frame(1, 120, 60, 26, 50, 8, tex);
  // Two copies: one 30 px left, one 6 px right of the source.
  Frame dst = oracle::textured_frame(2, 120, 60, 26, 20, 8, tex);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) dst.at(26 + r, 56 + c) = tex[static_cast<std::size_t>(r) * 8 + c];
  }
  const Cell cell = oracle::square_cell(1, 26, 50, 8);
  const TrackerPrediction plain = NccTracker({.search_size = 100}).predict(src, dst, cell, Direction::Forward);
  const TrackerPrediction windowed =
      NccTracker({.search_size = 100, .window_influence = 0.2}).predict(src, dst, cell, Direction::Forward);
  CHECK(plain.region.left == 20 - 2);
  CHECK(windowed.region.left == 56 - 2);
  CHECK(windowed.score == plain.score);
}

TEST_CASE("simulated cells are followed within one pixel") {
  sim::SimConfig cfg = sim::script_collision_scenario(5);
  cfg.collision_script.clear();
  cfg.mitosis_script.clear();
  cfg.apoptosis_script.clear();
  cfg.frames = 6;
  const sim::Simulation s = sim::simulate(cfg);
  const NccTracker tracker({.window_influence = 0.176});
  for (int t = 1; t < cfg.frames; ++t) {
    const auto now = cells_by_label(s.truth.masks[static_cast<std::size_t>(t - 1)]);
    const auto next = cells_by_label(s.truth.masks[static_cast<std::size_t>(t)]);
    for (const Cell& c : now) {
      const auto it = std::find_if(next.begin(), next.end(), [&](const Cell& n) { return n.id == c.id; });
      REQUIRE(it != next.end());
      const TrackerPrediction p = tracker.predict(s.sequence.frame(t), s.sequence.frame(t + 1), c, Direction::Forward);
      const BBox tb = template_bbox(c, 2, cfg.height, cfg.width);
      const double dy = p.region.top - tb.top, dx = p.region.left - tb.left;
      CHECK(std::abs(dy - (it->centroid.row - c.centroid.row)) <= 1.5);
      CHECK(std::abs(dx - (it->centroid.col - c.centroid.col)) <= 1.5);
    }
  }
}

TEST_CASE("external predictions") {
  ExternalTracker ext(0.3, 50, 40);
  ext.load(Direction::Forward, "# comment\n1 1 2 3 10 12 0.9\n\n1 2 0 0 5 5 0.1\n");
  CHECK(ext.size(Direction::Forward) == 2);
  CHECK(ext.size(Direction::Backward) == 0);
  const Frame f(1, 50, 40);
  const Cell c1 = oracle::square_cell(1, 4, 4, 3), c2 = oracle::square_cell(2, 20, 20, 3),
             c3 = oracle::square_cell(3, 20, 30, 3);
  const auto p1 = ext.predict(f, f, c1, Direction::Forward);
  CHECK(p1.valid);
  CHECK(p1.region == BBox{2, 3, 10, 12});
  CHECK_FALSE(ext.predict(f, f, c2, Direction::Forward).valid);
  CHECK_FALSE(ext.predict(f, f, c3, Direction::Forward).valid);
  CHECK_FALSE(ext.predict(f, f, c1, Direction::Backward).valid);
}

TEST_CASE("malformed external predictions name the line") {
  ExternalTracker ext(0.3, 50, 40);
  auto message = [&](const std::string& text) {
    try {
      ext.load(Direction::Backward, text);
    } catch (const FormatError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("1 1 2 3 10 12\n").find("line 1") != std::string::npos);
  CHECK(message("\n1 1 2 3 10 99 0.5\n").find("line 2") != std::string::npos);
  CHECK(message("1 1 2 3 10 12 1.5\n").find("score") != std::string::npos);
  CHECK(message("0 1 2 3 10 12 0.5\n").find("1-based") != std::string::npos);
  CHECK(message("2 1 2 3 10 12 0.5 x\n").find("line 1") != std::string::npos);
  ExternalTracker dup(0.3, 50, 40);
  CHECK_THROWS_WITH_AS(dup.load(Direction::Forward, "1 1 0 0 1 1 0.5\n1 1 0 0 1 1 0.5\n"),
                       doctest::Contains("duplicate"), FormatError);
}

TEST_CASE("predict_all covers every frame in the given direction") {
  std::mt19937 rng(2);
  const auto tex = random_texture(rng, 6);
  Sequence seq;
  for (int t = 1; t <= 3; ++t) seq.frames.push_back(oracle::textured_frame(t, 40, 40, 10 + t, 10, 6, tex));
  std::vector<std::vector<Cell>> cells;
  for (int t = 1; t <= 3; ++t) cells.push_back({oracle::square_cell(1, 10 + t, 10, 6)});
  const NccTracker tracker({.search_size = 30});
  const PredictionTable fwd = predict_all(seq, cells, Direction::Forward, tracker);
  const PredictionTable bwd = predict_all(seq, cells, Direction::Backward, tracker);
  REQUIRE(fwd.size() == 3);
  CHECK(fwd[2].empty());
  CHECK(bwd[0].empty());
  CHECK(fwd[0][0].region.top == 11 - 2 + 1);
  CHECK(bwd[2][0].region.top == 13 - 2 - 1);
}
