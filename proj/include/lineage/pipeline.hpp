#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lineage/imagecore.hpp"
#include "lineage/lineage.hpp"
#include "lineage/linker.hpp"
#include "lineage/metrics.hpp"
#include "lineage/netpbm.hpp"
#include "lineage/rwalker.hpp"
#include "lineage/simulator.hpp"
#include "lineage/tracker.hpp"

namespace lineage::pipeline {

namespace fs = std::filesystem;

struct SegmentationSource {
  enum class Kind { Threshold, Masks } kind = Kind::Threshold;
  ThresholdMethod method = ThresholdMethod::otsu();
  fs::path mask_dir;  // empty: the input dir
  // Threshold components smaller than this many pixels are dropped as speckle.
  int min_area = 10;
};

// Cosine-window weight used by the pipeline's default tracker.
inline constexpr double kPipelineWindowInfluence = 0.176;

struct TrackerSource {
  enum class Kind { Ncc, External } kind = Kind::Ncc;
  TrackerConfig ncc{.window_influence = kPipelineWindowInfluence};
  fs::path forward_file;
  fs::path backward_file;
  double min_score = 0.2;  // external predictions below this are invalid
};

struct PipelineConfig {
  fs::path input_dir;
  fs::path output_dir;
  SegmentationSource segmentation;
  TrackerSource tracker;
  rwalker::RWConfig rw;
  Connectivity connectivity = Connectivity::Four;
  // Nearest-neighbour resize of ingested masks whose size differs from the frames.
  bool resize_to_frame = false;
  bool enable_collision_resolution = true;
  bool enable_mitosis_detection = true;

  // Throws std::invalid_argument naming the bad field.
  void validate() const;
};

PipelineConfig pipeline_config_from_json(std::string_view text);
std::string pipeline_config_to_json(const PipelineConfig& config);

/// Frames t001.pgm, t002.pgm, ... up to the first missing index.
Sequence load_sequence(const fs::path& dir);

/// mask001.pgm .. mask{count}.pgm; throws naming the first missing file, or
/// the first extra file past `count`.
std::vector<LabelMask> load_masks(const fs::path& dir, int count);

/// Number of consecutive mask files starting at mask001.pgm.
int count_masks(const fs::path& dir);

/// man_track.txt or res_track.txt, in the given order of preference.
fs::path find_track_file(const fs::path& dir, bool prefer_result);

void write_simulation(const sim::Simulation& sim, const sim::SimConfig& config, const fs::path& dir);

/// Segmentation masks for every frame per the configured source.
std::vector<LabelMask> segment_sequence(const Sequence& sequence, const PipelineConfig& config);

LinkerResult run_tracking(const PipelineConfig& config);
void write_tracking(const LinkerResult& result, const fs::path& dir);

struct Evaluation {
  metrics::SegReport seg;
  metrics::TraReport tra;
  std::uint64_t fingerprint = 0;
};

Evaluation evaluate_dirs(const fs::path& gt_dir, const fs::path& pred_dir);

/// Hue-stepped track colour: hue = frac(id * 0.618033988749895), full
/// saturation and value.
std::array<std::uint8_t, 3> track_color(int id);

/// Grey frame with 4-connected cell boundaries coloured by track id and a
/// three-pixel tick at the bbox corner of mitosis parents (last frame) and
/// children (first frame).
RgbImage render_overlay(const Frame& frame, const LabelMask& mask, std::span<const Track> tracks);

struct Options {
  std::optional<fs::path> config;
  std::optional<fs::path> in;
  std::optional<fs::path> out;
  std::optional<fs::path> gt;
  std::vector<fs::path> pred;
  bool baseline = false;
  std::optional<std::uint64_t> seed;
};

// Each command returns the process exit status and reports failures on stderr.
int cmd_simulate(const Options& opts);
int cmd_track(const Options& opts);
int cmd_evaluate(const Options& opts);
int cmd_overlay(const Options& opts);

}  // namespace lineage::pipeline
