#include "lineage/pipeline.hpp"

#include <cmath>
#include <iostream>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "json.hpp"

namespace lineage::pipeline {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument(where + ": unknown field '" + key + "'");
  }
}

std::string read_text(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("missing file " + path.string());
  return read_file(path);
}

}  // namespace

void PipelineConfig::validate() const {
  if (segmentation.min_area < 1) throw std::invalid_argument("segmentation.min_area must be >= 1");
  if (segmentation.kind == SegmentationSource::Kind::Threshold &&
      segmentation.method.kind == ThresholdMethod::Kind::Fixed &&
      !(segmentation.method.level >= 0.0 && segmentation.method.level <= 1.0)) {
    throw std::invalid_argument("segmentation.level must lie in [0, 1]");
  }
  if (tracker.kind == TrackerSource::Kind::Ncc) {
    if (tracker.ncc.search_size < 1) throw std::invalid_argument("tracker.search_size must be >= 1");
    if (tracker.ncc.template_pad < 0) throw std::invalid_argument("tracker.template_pad must be >= 0");
    if (!(tracker.ncc.min_score >= -1.0 && tracker.ncc.min_score <= 1.0)) {
      throw std::invalid_argument("tracker.min_score must lie in [-1, 1]");
    }
    if (!(tracker.ncc.window_influence >= 0.0 && tracker.ncc.window_influence <= 1.0)) {
      throw std::invalid_argument("tracker.window_influence must lie in [0, 1]");
    }
  } else {
    if (tracker.forward_file.empty() || tracker.backward_file.empty()) {
      throw std::invalid_argument("external tracker needs forward and backward files");
    }
    if (!(tracker.min_score >= -1.0 && tracker.min_score <= 1.0)) {
      throw std::invalid_argument("tracker.min_score must lie in [-1, 1]");
    }
  }
  rw.validate();
}

PipelineConfig pipeline_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("pipeline config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("pipeline config: expected a JSON object");
  reject_unknown(j,
                 {"input_dir", "output_dir", "segmentation", "tracker", "rwalker", "connectivity", "resize_to_frame",
                  "enable_collision_resolution", "enable_mitosis_detection"},
                 "pipeline config");
  PipelineConfig c;
  try {
    c.input_dir = j.value("input_dir", std::string());
    c.output_dir = j.value("output_dir", std::string());
    if (j.contains("segmentation")) {
      const json& s = j.at("segmentation");
      reject_unknown(s, {"source", "method", "level", "mask_dir", "min_area"}, "segmentation");
      const std::string source = s.value("source", "threshold");
      c.segmentation.min_area = s.value("min_area", c.segmentation.min_area);
      if (source == "threshold") {
        const std::string method = s.value("method", "otsu");
        if (method == "otsu") {
          c.segmentation.method = ThresholdMethod::otsu();
        } else if (method == "fixed") {
          c.segmentation.method = ThresholdMethod::fixed(s.value("level", 0.5));
        } else {
          throw std::invalid_argument("segmentation.method must be otsu or fixed");
        }
      } else if (source == "masks") {
        c.segmentation.kind = SegmentationSource::Kind::Masks;
        c.segmentation.mask_dir = s.value("mask_dir", std::string());
      } else {
        throw std::invalid_argument("segmentation.source must be threshold or masks");
      }
    }
    if (j.contains("tracker")) {
      const json& t = j.at("tracker");
      reject_unknown(t, {"kind", "search_size", "template_pad", "min_score", "window_influence", "forward", "backward"}, "tracker");
      const std::string kind = t.value("kind", "ncc");
      if (kind == "ncc") {
        c.tracker.ncc.search_size = t.value("search_size", c.tracker.ncc.search_size);
        c.tracker.ncc.template_pad = t.value("template_pad", c.tracker.ncc.template_pad);
        c.tracker.ncc.min_score = t.value("min_score", c.tracker.ncc.min_score);
        c.tracker.ncc.window_influence = t.value("window_influence", c.tracker.ncc.window_influence);
      } else if (kind == "external") {
        c.tracker.kind = TrackerSource::Kind::External;
        c.tracker.forward_file = t.value("forward", std::string());
        c.tracker.backward_file = t.value("backward", std::string());
        c.tracker.min_score = t.value("min_score", c.tracker.min_score);
      } else {
        throw std::invalid_argument("tracker.kind must be ncc or external");
      }
    }
    if (j.contains("rwalker")) {
      const json& r = j.at("rwalker");
      reject_unknown(r, {"beta", "epsilon", "cg_tol", "cg_max_iter", "preconditioner"}, "rwalker");
      c.rw.beta = r.value("beta", c.rw.beta);
      c.rw.epsilon = r.value("epsilon", c.rw.epsilon);
      c.rw.cg_tol = r.value("cg_tol", c.rw.cg_tol);
      c.rw.cg_max_iter = r.value("cg_max_iter", c.rw.cg_max_iter);
      const std::string pre = r.value("preconditioner", "jacobi");
      if (pre == "none") {
        c.rw.preconditioner = rwalker::Preconditioner::None;
      } else if (pre == "jacobi") {
        c.rw.preconditioner = rwalker::Preconditioner::Jacobi;
      } else {
        throw std::invalid_argument("rwalker.preconditioner must be none or jacobi");
      }
    }
    const int conn = j.value("connectivity", 4);
    if (conn != 4 && conn != 8) throw std::invalid_argument("connectivity must be 4 or 8");
    c.connectivity = conn == 4 ? Connectivity::Four : Connectivity::Eight;
    c.resize_to_frame = j.value("resize_to_frame", c.resize_to_frame);
    c.enable_collision_resolution = j.value("enable_collision_resolution", c.enable_collision_resolution);
    c.enable_mitosis_detection = j.value("enable_mitosis_detection", c.enable_mitosis_detection);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string pipeline_config_to_json(const PipelineConfig& c) {
  json seg;
  if (c.segmentation.kind == SegmentationSource::Kind::Masks) {
    seg = {{"source", "masks"}, {"mask_dir", c.segmentation.mask_dir.string()}};
  } else if (c.segmentation.method.kind == ThresholdMethod::Kind::Fixed) {
    seg = {{"source", "threshold"}, {"method", "fixed"}, {"level", c.segmentation.method.level}};
  } else {
    seg = {{"source", "threshold"}, {"method", "otsu"}};
  }
  seg["min_area"] = c.segmentation.min_area;
  json tr;
  if (c.tracker.kind == TrackerSource::Kind::External) {
    tr = {{"kind", "external"},
          {"forward", c.tracker.forward_file.string()},
          {"backward", c.tracker.backward_file.string()},
          {"min_score", c.tracker.min_score}};
  } else {
    tr = {{"kind", "ncc"},
          {"search_size", c.tracker.ncc.search_size},
          {"template_pad", c.tracker.ncc.template_pad},
          {"min_score", c.tracker.ncc.min_score},
          {"window_influence", c.tracker.ncc.window_influence}};
  }
  json j{{"input_dir", c.input_dir.string()},
         {"output_dir", c.output_dir.string()},
         {"segmentation", seg},
         {"tracker", tr},
         {"rwalker",
          {{"beta", c.rw.beta},
           {"epsilon", c.rw.epsilon},
           {"cg_tol", c.rw.cg_tol},
           {"cg_max_iter", c.rw.cg_max_iter},
           {"preconditioner", c.rw.preconditioner == rwalker::Preconditioner::Jacobi ? "jacobi" : "none"}}},
         {"connectivity", static_cast<int>(c.connectivity)},
         {"resize_to_frame", c.resize_to_frame},
         {"enable_collision_resolution", c.enable_collision_resolution},
         {"enable_mitosis_detection", c.enable_mitosis_detection}};
  return j.dump(2) + "\n";
}

Sequence load_sequence(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("input dir " + dir.string() + " does not exist");
  Sequence seq;
  for (int t = 1;; ++t) {
    const fs::path p = dir / frame_filename(t);
    if (!fs::exists(p)) break;
    try {
      seq.frames.push_back(frame_from_pgm(read_file(p), t));
    } catch (const FormatError& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
  }
  if (seq.frames.empty()) throw std::runtime_error("missing frames: " + (dir / frame_filename(1)).string());
  seq.validate();
  return seq;
}

int count_masks(const fs::path& dir) {
  int n = 0;
  while (fs::exists(dir / mask_filename(n + 1))) ++n;
  return n;
}

std::vector<LabelMask> load_masks(const fs::path& dir, int count) {
  std::vector<LabelMask> masks;
  for (int t = 1; t <= count; ++t) {
    const fs::path p = dir / mask_filename(t);
    if (!fs::exists(p)) throw std::runtime_error("missing mask " + p.string());
    try {
      masks.push_back(mask_from_pgm(read_file(p)));
    } catch (const FormatError& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
  }
  const fs::path extra = dir / mask_filename(count + 1);
  if (fs::exists(extra)) {
    throw std::runtime_error(fmt::format("mask/frame count mismatch: {} exists but only {} frames", extra.string(), count));
  }
  return masks;
}

fs::path find_track_file(const fs::path& dir, bool prefer_result) {
  const fs::path res = dir / "res_track.txt", man = dir / "man_track.txt";
  const fs::path first = prefer_result ? res : man, second = prefer_result ? man : res;
  if (fs::exists(first)) return first;
  if (fs::exists(second)) return second;
  throw std::runtime_error("missing track file " + first.string());
}

void write_simulation(const sim::Simulation& s, const sim::SimConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  for (const Frame& f : s.sequence.frames) write_file(dir / frame_filename(f.index), frame_to_pgm(f));
  for (std::size_t i = 0; i < s.truth.masks.size(); ++i) {
    write_file(dir / mask_filename(static_cast<int>(i) + 1), mask_to_pgm(s.truth.masks[i]));
  }
  write_file(dir / "man_track.txt", format_track_file(s.truth.lineage.tracks));
  write_file(dir / "events.txt", format_events(s.truth.events));
  write_file(dir / "sim_config.json", sim::sim_config_to_json(config));
}

std::vector<LabelMask> segment_sequence(const Sequence& sequence, const PipelineConfig& config) {
  std::vector<LabelMask> masks;
  if (config.segmentation.kind == SegmentationSource::Kind::Masks) {
    const fs::path dir = config.segmentation.mask_dir.empty() ? config.input_dir : config.segmentation.mask_dir;
    masks = load_masks(dir, sequence.length());
    for (int t = 1; t <= sequence.length(); ++t) {
      LabelMask& m = masks[static_cast<std::size_t>(t - 1)];
      const Frame& f = sequence.frame(t);
      if (m.width == f.width && m.height == f.height) continue;
      if (!config.resize_to_frame) {
        throw std::runtime_error(fmt::format("{}: mask is {}x{}, frame is {}x{}",
                                             (dir / mask_filename(t)).string(), m.width, m.height, f.width, f.height));
      }
      m = resize_nearest(m, f.width, f.height);
    }
    return masks;
  }
  for (const Frame& f : sequence.frames) {
    const ThresholdResult th = threshold_segment(f, config.segmentation.method);
    if (th.degenerate) spdlog::warn("frame {}: constant intensity, no foreground", f.index);
    const Components comps = connected_components(th.foreground, config.connectivity);
    LabelMask m(f.width, f.height);
    std::uint32_t next = 0;
    for (const Cell& c : comps.cells) {
      if (static_cast<int>(c.area()) < config.segmentation.min_area) continue;
      ++next;
      for (const Pixel& p : c.pixels) m.at(p.row, p.col) = next;
    }
    masks.push_back(std::move(m));
  }
  return masks;
}

LinkerResult run_tracking(const PipelineConfig& config) {
  config.validate();
  const Sequence seq = load_sequence(config.input_dir);
  spdlog::info("loaded {} frames of {}x{} from {}", seq.length(), seq.frames[0].width, seq.frames[0].height,
               config.input_dir.string());
  const std::vector<LabelMask> masks = segment_sequence(seq, config);

  std::unique_ptr<Tracker> tracker;
  if (config.tracker.kind == TrackerSource::Kind::External) {
    auto ext = std::make_unique<ExternalTracker>(config.tracker.min_score, seq.frames[0].width, seq.frames[0].height);
    ext->load_file(Direction::Forward, config.tracker.forward_file);
    ext->load_file(Direction::Backward, config.tracker.backward_file);
    tracker = std::move(ext);
  } else {
    tracker = std::make_unique<NccTracker>(config.tracker.ncc);
  }

  LinkerConfig lc;
  lc.rw = config.rw;
  lc.connectivity = config.connectivity;
  lc.enable_collision_resolution = config.enable_collision_resolution;
  lc.enable_mitosis_detection = config.enable_mitosis_detection;
  LinkerResult result = run_linker(seq, masks, *tracker, lc);
  validate_tracks(result.lineage.tracks);
  validate_against_masks(result.lineage.tracks, result.masks);
  for (std::size_t i = 0; i < result.collisions.size(); ++i) {
    const CollisionReport& r = result.collisions[i];
    if (r.iterations > 0) {
      spdlog::debug("frame {}: {} collision iterations, {} splits, {} unresolved", i + 1, r.iterations, r.splits,
                    r.unresolved.size());
    }
  }
  return result;
}

void write_tracking(const LinkerResult& result, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < result.masks.size(); ++i) {
    write_file(dir / mask_filename(static_cast<int>(i) + 1), mask_to_pgm(result.masks[i]));
  }
  write_file(dir / "res_track.txt", format_track_file(result.lineage.tracks));
  write_file(dir / "events.txt", format_events(result.events));
}

Evaluation evaluate_dirs(const fs::path& gt_dir, const fs::path& pred_dir) {
  const int n = count_masks(gt_dir);
  if (n == 0) throw std::runtime_error("missing mask " + (gt_dir / mask_filename(1)).string());
  const std::vector<LabelMask> gt = load_masks(gt_dir, n);
  const std::vector<LabelMask> pred = load_masks(pred_dir, n);
  auto tracks_of = [](const fs::path& dir, bool prefer_result) {
    const fs::path p = find_track_file(dir, prefer_result);
    try {
      return parse_track_file(read_file(p));
    } catch (const FormatError& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
  };
  const std::vector<Track> gt_tracks = tracks_of(gt_dir, false);
  const std::vector<Track> pred_tracks = tracks_of(pred_dir, true);
  Evaluation ev;
  ev.seg = metrics::seg_score(gt, pred);
  ev.tra = metrics::tra_score(gt_tracks, gt, pred_tracks, pred);
  ev.fingerprint = metrics::gt_fingerprint(gt, gt_tracks);
  return ev;
}

std::array<std::uint8_t, 3> track_color(int id) {
  const double h = std::fmod(id * 0.618033988749895, 1.0) * 6.0;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const auto up = static_cast<std::uint8_t>(std::lround(255.0 * f));
  const auto down = static_cast<std::uint8_t>(255 - up);
  switch (sector) {
    case 0: return {255, up, 0};
    case 1: return {down, 255, 0};
    case 2: return {0, 255, up};
    case 3: return {0, down, 255};
    case 4: return {up, 0, 255};
    default: return {255, 0, down};
  }
}

RgbImage render_overlay(const Frame& frame, const LabelMask& mask, std::span<const Track> tracks) {
  if (mask.width != frame.width || mask.height != frame.height) {
    throw std::invalid_argument(fmt::format("frame {}: mask size differs from frame", frame.index));
  }
  RgbImage img(frame.width, frame.height);
  for (int r = 0; r < frame.height; ++r) {
    for (int c = 0; c < frame.width; ++c) {
      const std::uint8_t v = frame.at(r, c);
      img.set(r, c, v, v, v);
    }
  }
  for (int r = 0; r < frame.height; ++r) {
    for (int c = 0; c < frame.width; ++c) {
      const std::uint32_t l = mask.at(r, c);
      if (l == 0) continue;
      const bool edge = !mask.in_bounds(r - 1, c) || mask.at(r - 1, c) != l || !mask.in_bounds(r + 1, c) ||
                        mask.at(r + 1, c) != l || !mask.in_bounds(r, c - 1) || mask.at(r, c - 1) != l ||
                        !mask.in_bounds(r, c + 1) || mask.at(r, c + 1) != l;
      if (!edge) continue;
      const auto rgb = track_color(static_cast<int>(l));
      img.set(r, c, rgb[0], rgb[1], rgb[2]);
    }
  }
  std::set<int> marked;
  for (const Track& t : tracks) {
    if (t.parent == 0) continue;
    if (t.birth == frame.index) marked.insert(t.id);
    if (t.birth - 1 == frame.index) marked.insert(t.parent);
  }
  for (const Cell& cell : cells_by_label(mask)) {
    if (!marked.contains(cell.id)) continue;
    const BBox& b = cell.bbox;
    for (const auto& [dr, dc] : {std::pair{0, 0}, std::pair{0, 1}, std::pair{1, 0}}) {
      if (mask.in_bounds(b.top + dr, b.left + dc)) img.set(b.top + dr, b.left + dc, 255, 255, 255);
    }
  }
  return img;
}

namespace {

template <typename F>
int guarded(const char* name, F&& body) {
  try {
    body();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "lineage " << name << ": error: " << e.what() << '\n';
    return 1;
  }
}

PipelineConfig load_pipeline_config(const Options& opts) {
  PipelineConfig c;
  if (opts.config) c = pipeline_config_from_json(read_text(*opts.config));
  if (opts.in) c.input_dir = *opts.in;
  if (opts.out) c.output_dir = *opts.out;
  if (opts.baseline) {
    c.enable_collision_resolution = false;
    c.enable_mitosis_detection = false;
  }
  if (c.input_dir.empty()) throw std::invalid_argument("no input dir (--in or input_dir)");
  if (c.output_dir.empty()) throw std::invalid_argument("no output dir (--out or output_dir)");
  return c;
}

}  // namespace

int cmd_simulate(const Options& opts) {
  return guarded("simulate", [&] {
    sim::SimConfig c = opts.config ? sim::sim_config_from_json(read_text(*opts.config)) : sim::script_collision_scenario();
    if (opts.seed) c.rng_seed = *opts.seed;
    if (!opts.out) throw std::invalid_argument("--out is required");
    const sim::Simulation s = sim::simulate(c);
    write_simulation(s, c, *opts.out);
    std::size_t mitoses = 0, collisions = 0, deaths = 0;
    for (const Event& e : s.truth.events) {
      mitoses += e.kind == EventKind::Mitosis;
      collisions += e.kind == EventKind::Collision;
      deaths += e.kind == EventKind::Apoptosis;
    }
    std::cout << fmt::format("frames {}  tracks {}  collision frames {}  mitoses {}  apoptoses {}\n",
                             s.sequence.length(), s.truth.lineage.tracks.size(), collisions, mitoses, deaths);
  });
}

int cmd_track(const Options& opts) {
  return guarded("track", [&] {
    const PipelineConfig c = load_pipeline_config(opts);
    const LinkerResult r = run_tracking(c);
    write_tracking(r, c.output_dir);
    std::size_t splits = 0;
    for (const CollisionReport& cr : r.collisions) splits += static_cast<std::size_t>(cr.splits);
    std::cout << fmt::format("frames {}  tracks {}  events {}  collision splits {}\n", r.masks.size(),
                             r.lineage.tracks.size(), r.events.size(), splits);
  });
}

int cmd_evaluate(const Options& opts) {
  return guarded("evaluate", [&] {
    if (!opts.gt) throw std::invalid_argument("--gt is required");
    if (opts.pred.empty()) throw std::invalid_argument("--pred is required");
    std::vector<metrics::RunReport> runs;
    for (const fs::path& pred : opts.pred) {
      const Evaluation ev = evaluate_dirs(*opts.gt, pred);
      const fs::path report_dir = opts.out ? *opts.out : pred;
      const fs::path report = opts.pred.size() > 1 && opts.out
                                  ? report_dir / fmt::format("evaluation_{}.json", runs.size() + 1)
                                  : report_dir / "evaluation.json";
      fs::create_directories(report_dir);
      write_file(report, metrics::report_json(ev.seg, ev.tra, ev.fingerprint));
      std::cout << fmt::format("{}: SEG {:.6f}  TRA {:.6f}\n", pred.string(), ev.seg.score, ev.tra.score);
      runs.push_back({pred.filename().string(), ev.fingerprint, ev.seg.score, ev.tra.score});
    }
    for (std::size_t k = 1; k < runs.size(); ++k) {
      std::cout << '\n' << metrics::format_comparison(runs[0], runs[k], metrics::compare_runs(runs[0], runs[k]));
    }
  });
}

int cmd_overlay(const Options& opts) {
  return guarded("overlay", [&] {
    if (!opts.in) throw std::invalid_argument("--in (frames dir) is required");
    if (opts.pred.size() != 1) throw std::invalid_argument("exactly one --pred (masks dir) is required");
    if (!opts.out) throw std::invalid_argument("--out is required");
    const Sequence seq = load_sequence(*opts.in);
    const std::vector<LabelMask> masks = load_masks(opts.pred[0], seq.length());
    const fs::path track_path = find_track_file(opts.pred[0], true);
    const std::vector<Track> tracks = parse_track_file(read_file(track_path));
    fs::create_directories(*opts.out);
    for (const Frame& f : seq.frames) {
      const RgbImage img = render_overlay(f, masks[static_cast<std::size_t>(f.index - 1)], tracks);
      write_file(*opts.out / fmt::format("overlay{:03d}.ppm", f.index), encode_ppm(img));
    }
    std::cout << fmt::format("wrote {} overlays to {}\n", seq.length(), opts.out->string());
  });
}

}  // namespace lineage::pipeline
