#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <optional>
#include <set>

#include <fmt/format.h>

#include "lineage/pipeline.hpp"
#include "oracles.hpp"

using namespace lineage;
namespace pl = lineage::pipeline;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run cli(const std::string& args, const fs::path& scratch) {
  const fs::path o = scratch / "stdout.txt", e = scratch / "stderr.txt";
  const std::string cmd = std::string(LINEAGE_CLI) + " " + args + " >" + o.string() + " 2>" + e.string();
  const int rc = std::system(cmd.c_str());
  return {WIFEXITED(rc) ? WEXITSTATUS(rc) : -1, read_file(o), read_file(e)};
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files[entry.path().filename().string()] = read_file(entry.path());
  }
  return files;
}

std::string small_config() {
  return R"({"width": 96, "height": 96, "frames": 6, "n_init": 3, "collision_script": [{"t": 4, "cell_a": 1, "cell_b": 2}],
             "mitosis_script": [{"t": 5, "cell": 3}], "rng_seed": 3})";
}

}  // namespace

TEST_CASE("simulate, track, evaluate and overlay from the command line") {
  const fs::path dir = oracle::scratch("cli_e2e");
  const fs::path sim = dir / "sim", full = dir / "full", base = dir / "baseline", ov = dir / "overlay";
  Run r = cli("simulate --out " + sim.string() + " --seed 2", dir);
  REQUIRE(r.status == 0);
  CHECK(fs::exists(sim / "t001.pgm"));
  CHECK(fs::exists(sim / "mask020.pgm"));
  CHECK(fs::exists(sim / "man_track.txt"));
  CHECK(read_file(sim / "events.txt").find("8 COLLISION 1 2") != std::string::npos);
  CHECK(sim::sim_config_from_json(read_file(sim / "sim_config.json")).rng_seed == 2);

  r = cli("track --in " + sim.string() + " --out " + full.string(), dir);
  REQUIRE(r.status == 0);
  CHECK(fs::exists(full / "res_track.txt"));
  CHECK(fs::exists(full / "mask020.pgm"));
  r = cli("track --baseline --in " + sim.string() + " --out " + base.string(), dir);
  REQUIRE(r.status == 0);

  r = cli("evaluate --gt " + sim.string() + " --pred " + base.string() + " --pred " + full.string(), dir);
  REQUIRE(r.status == 0);
  CHECK(r.out.find("delta") != std::string::npos);
  const std::string report = read_file(full / "evaluation.json");
  CHECK(report.find("\"tra\"") != std::string::npos);
  CHECK(fs::exists(base / "evaluation.json"));

  r = cli("evaluate --gt " + sim.string() + " --pred " + full.string() + " --pred " + base.string() + " --out " +
              (dir / "reports").string(),
          dir);
  REQUIRE(r.status == 0);
  CHECK(fs::exists(dir / "reports" / "evaluation_1.json"));
  CHECK(fs::exists(dir / "reports" / "evaluation_2.json"));

  r = cli("overlay --in " + sim.string() + " --pred " + full.string() + " --out " + ov.string(), dir);
  REQUIRE(r.status == 0);
  const RgbImage img = decode_ppm(read_file(ov / "overlay001.ppm"));
  CHECK(img.width == 256);
  CHECK(fs::exists(ov / "overlay020.ppm"));
}

TEST_CASE("log level may follow the subcommand") {
  const fs::path dir = oracle::scratch("cli_log");
  const Run r = cli("simulate --out " + (dir / "s").string() + " --log-level debug", dir);
  CHECK(r.status == 0);
}

TEST_CASE("command line errors name the problem") {
  const fs::path dir = oracle::scratch("cli_errors");
  write_file(dir / "zero.json", R"({"frames": 0})");
  Run r = cli("simulate --config " + (dir / "zero.json").string() + " --out " + (dir / "z").string(), dir);
  CHECK(r.status == 1);
  CHECK(r.err.find("frames") != std::string::npos);

  r = cli("track --in " + (dir / "nowhere").string() + " --out " + (dir / "o").string(), dir);
  CHECK(r.status == 1);
  CHECK(r.err.find("nowhere") != std::string::npos);

  write_file(dir / "bad.json", R"({"tracker": {"kind": "ncc", "speed": 3}})");
  r = cli("track --config " + (dir / "bad.json").string() + " --in x --out y", dir);
  CHECK(r.status == 1);
  CHECK(r.err.find("speed") != std::string::npos);

  r = cli("evaluate --gt " + (dir / "g").string(), dir);
  CHECK(r.status != 0);
  r = cli("frobnicate", dir);
  CHECK(r.status != 0);
}

TEST_CASE("simulate and track are byte-for-byte repeatable") {
  const fs::path dir = oracle::scratch("cli_repeat");
  write_file(dir / "sim.json", small_config());
  for (const char* run : {"a", "b"}) {
    const fs::path d = dir / run;
    REQUIRE(cli("simulate --config " + (dir / "sim.json").string() + " --out " + (d / "sim").string(), dir).status == 0);
    REQUIRE(cli("track --in " + (d / "sim").string() + " --out " + (d / "trk").string(), dir).status == 0);
  }
  CHECK(tree(dir / "a" / "sim") == tree(dir / "b" / "sim"));
  CHECK(tree(dir / "a" / "trk") == tree(dir / "b" / "trk"));
  CHECK(tree(dir / "a" / "trk").size() == 6 + 2);
}

TEST_CASE("pipeline config json") {
  pl::PipelineConfig c;
  c.input_dir = "in";
  c.segmentation.kind = pl::SegmentationSource::Kind::Masks;
  c.segmentation.mask_dir = "masks";
  c.tracker.ncc.search_size = 99;
  c.rw.preconditioner = rwalker::Preconditioner::Jacobi;
  c.connectivity = Connectivity::Eight;
  c.resize_to_frame = true;
  const std::string text = pl::pipeline_config_to_json(c);
  const pl::PipelineConfig back = pl::pipeline_config_from_json(text);
  CHECK(pl::pipeline_config_to_json(back) == text);
  CHECK(back.tracker.ncc.search_size == 99);
  CHECK(back.tracker.ncc.window_influence == pl::kPipelineWindowInfluence);
  CHECK_THROWS_AS(pl::pipeline_config_from_json(R"({"connectivity": 6})"), std::invalid_argument);
  CHECK_THROWS_AS(pl::pipeline_config_from_json(R"({"rwalker": {"preconditioner": "ilu"}})"), std::invalid_argument);
  CHECK_THROWS_AS(pl::pipeline_config_from_json(R"({"colour": 1})"), std::invalid_argument);
  pl::PipelineConfig bad;
  bad.tracker.kind = pl::TrackerSource::Kind::External;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("ingested masks: count and size checks") {
  const fs::path dir = oracle::scratch("masks_in");
  const sim::Simulation s = sim::simulate(sim::sim_config_from_json(small_config()));
  pl::write_simulation(s, sim::sim_config_from_json(small_config()), dir);
  pl::PipelineConfig c;
  c.input_dir = dir;
  c.segmentation.kind = pl::SegmentationSource::Kind::Masks;
  const Sequence seq = pl::load_sequence(dir);
  CHECK(pl::segment_sequence(seq, c) == s.truth.masks);

  write_file(dir / "mask007.pgm", mask_to_pgm(LabelMask(96, 96)));
  CHECK_THROWS_WITH(pl::segment_sequence(seq, c), doctest::Contains("mask007.pgm"));
  fs::remove(dir / "mask007.pgm");

  write_file(dir / "mask003.pgm", mask_to_pgm(LabelMask(48, 48)));
  CHECK_THROWS_WITH(pl::segment_sequence(seq, c), doctest::Contains("mask003.pgm"));
  c.resize_to_frame = true;
  CHECK(pl::segment_sequence(seq, c)[2].width == 96);

  fs::remove(dir / "mask004.pgm");
  CHECK_THROWS_WITH(pl::segment_sequence(seq, c), doctest::Contains("mask004.pgm"));
}

TEST_CASE("ground-truth masks with external predictions reproduce the GT lineage") {
  const fs::path dir = oracle::scratch("external");
  sim::SimConfig sc = sim::sim_config_from_json(small_config());
  sc.collision_script.clear();
  const sim::Simulation s = sim::simulate(sc);
  pl::write_simulation(s, sc, dir);
  // Perfect predictions: each cell's region is its own bbox in the adjacent frame.
  std::string fwd, bwd;
  const int T = s.sequence.length();
  for (int t = 1; t <= T; ++t) {
    const auto comps = label_components(s.truth.masks[static_cast<std::size_t>(t - 1)]).cells;
    for (std::size_t k = 0; k < comps.size(); ++k) {
      const int id = static_cast<int>(k) + 1;
      auto region_in = [&](int other) -> std::optional<BBox> {
        if (other < 1 || other > T) return std::nullopt;
        const int gt_id = static_cast<int>(s.truth.masks[static_cast<std::size_t>(t - 1)].at(
            comps[k].pixels[0].row, comps[k].pixels[0].col));
        std::optional<BBox> box;
        for (const Cell& c : cells_by_label(s.truth.masks[static_cast<std::size_t>(other - 1)])) {
          const Track* tr = s.truth.lineage.find(c.id);
          if (c.id == gt_id || (tr && tr->parent == gt_id)) {
            if (!box) box = c.bbox;
            box = BBox{std::min(box->top, c.bbox.top), std::min(box->left, c.bbox.left),
                       std::max(box->bottom, c.bbox.bottom), std::max(box->right, c.bbox.right)};
          }
        }
        return box;
      };
      if (auto b = region_in(t + 1)) fwd += fmt::format("{} {} {} {} {} {} 0.9\n", t, id, b->top, b->left, b->bottom, b->right);
      if (t > 1) {
        const BBox own = comps[k].bbox;
        bwd += fmt::format("{} {} {} {} {} {} 0.9\n", t, id, own.top, own.left, own.bottom, own.right);
      }
    }
  }
  write_file(dir / "fwd.txt", fwd);
  write_file(dir / "bwd.txt", bwd);
  pl::PipelineConfig c;
  c.input_dir = dir;
  c.output_dir = dir / "out";
  c.segmentation.kind = pl::SegmentationSource::Kind::Masks;
  c.tracker.kind = pl::TrackerSource::Kind::External;
  c.tracker.forward_file = dir / "fwd.txt";
  c.tracker.backward_file = dir / "bwd.txt";
  const LinkerResult r = pl::run_tracking(c);
  pl::write_tracking(r, c.output_dir);
  const pl::Evaluation ev = pl::evaluate_dirs(dir, c.output_dir);
  CHECK(ev.seg.score == 1.0);
  CHECK(ev.tra.score == 1.0);
}

TEST_CASE("track colours") {
  CHECK(pl::track_color(0) == std::array<std::uint8_t, 3>{255, 0, 0});
  std::set<std::array<std::uint8_t, 3>> seen;
  for (int id = 1; id <= 12; ++id) {
    const auto c = pl::track_color(id);
    seen.insert(c);
    CHECK(std::max({c[0], c[1], c[2]}) == 255);
    CHECK(std::min({c[0], c[1], c[2]}) == 0);
  }
  CHECK(seen.size() == 12);
}

TEST_CASE("overlay colours exactly the 4-connected cell boundary") {
  std::mt19937 rng(4);
  for (int k = 0; k < 20; ++k) {
    const int w = 20, h = 15;
    Frame f(1, w, h);
    for (auto& v : f.pixels) v = static_cast<std::uint8_t>(rng() % 200);
    LabelMask m(w, h);
    for (int id = 1; id <= 4; ++id) {
      const int r0 = static_cast<int>(rng() % h), c0 = static_cast<int>(rng() % w);
      const int rh = 1 + static_cast<int>(rng() % 6), cw = 1 + static_cast<int>(rng() % 6);
      for (int r = r0; r < std::min(h, r0 + rh); ++r) {
        for (int c = c0; c < std::min(w, c0 + cw); ++c) m.at(r, c) = static_cast<std::uint32_t>(id);
      }
    }
    const RgbImage img = pl::render_overlay(f, m, {});
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const auto l = m.at(r, c);
        bool boundary = false;
        if (l != 0) {
          for (const auto& [dr, dc] : {std::pair{-1, 0}, std::pair{1, 0}, std::pair{0, -1}, std::pair{0, 1}}) {
            if (!m.in_bounds(r + dr, c + dc) || m.at(r + dr, c + dc) != l) boundary = true;
          }
        }
        const std::size_t i = (static_cast<std::size_t>(r) * w + c) * 3;
        const std::array<std::uint8_t, 3> got{img.rgb[i], img.rgb[i + 1], img.rgb[i + 2]};
        const std::uint8_t v = f.at(r, c);
        CHECK(got == (boundary ? pl::track_color(static_cast<int>(l)) : std::array<std::uint8_t, 3>{v, v, v}));
      }
    }
  }
}

TEST_CASE("overlay ticks mark divisions") {
  Frame f1(1, 10, 10), f2(2, 10, 10);
  LabelMask m1(10, 10), m2(10, 10);
  for (int r = 2; r < 6; ++r) {
    for (int c = 2; c < 6; ++c) m1.at(r, c) = 1;
  }
  for (int r = 2; r < 6; ++r) m2.at(r, 2) = 2;
  const std::vector<Track> tracks{{1, 1, 1, 0}, {2, 2, 2, 1}};
  const RgbImage a = pl::render_overlay(f1, m1, tracks), b = pl::render_overlay(f2, m2, tracks);
  auto px = [](const RgbImage& img, int r, int c) {
    const std::size_t i = (static_cast<std::size_t>(r) * img.width + c) * 3;
    return std::array<std::uint8_t, 3>{img.rgb[i], img.rgb[i + 1], img.rgb[i + 2]};
  };
  const std::array<std::uint8_t, 3> white{255, 255, 255};
  CHECK(px(a, 2, 2) == white);
  CHECK(px(a, 2, 3) == white);
  CHECK(px(a, 3, 2) == white);
  CHECK(px(a, 3, 3) == std::array<std::uint8_t, 3>{0, 0, 0});
  CHECK(px(b, 2, 2) == white);
  CHECK(px(b, 3, 2) == white);
  CHECK(px(b, 2, 3) == white);
  CHECK(px(b, 4, 3) == std::array<std::uint8_t, 3>{0, 0, 0});
  CHECK_THROWS_AS(pl::render_overlay(f1, LabelMask(9, 10), tracks), std::invalid_argument);
}
