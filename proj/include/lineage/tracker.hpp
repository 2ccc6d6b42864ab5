#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "lineage/imagecore.hpp"

namespace lineage {

enum class Direction { Forward, Backward };

/// F_t^i (forward) or B_t^i (backward): where a cell's template lands in the
/// adjacent frame.
struct TrackerPrediction {
  int source_cell_id = 0;
  Direction direction = Direction::Forward;
  BBox region;
  double score = -1.0;
  bool valid = false;
};

struct TrackerConfig {
  int search_size = 150;
  int template_pad = 2;
  double min_score = 0.2;
  // Placements are ranked by (1 - w) * ncc + w * hann(dy) * hann(dx), where
  // the Hann window spans the search size and (dy, dx) is the displacement
  // from the source bbox. 0 ranks by NCC alone. The reported score is NCC.
  double window_influence = 0.0;
};

/// Zero-normalized cross-correlation of two equally sized patches; 0 when
/// either patch is constant. Throws std::invalid_argument on size mismatch.
double ncc_score(std::span<const double> templ, std::span<const double> candidate);

/// Single-object tracker over a pair of frames.
class Tracker {
 public:
  virtual ~Tracker() = default;
  virtual TrackerPrediction predict(const Frame& src, const Frame& dst, const Cell& cell,
                                    Direction direction) const = 0;
};

/// Exhaustive NCC template search inside a square window centered on the
/// template. The template is the cell bbox padded by template_pad and
/// clipped to the image; ties go to the earliest placement in row-major order.
class NccTracker final : public Tracker {
 public:
  explicit NccTracker(TrackerConfig config = {}) : config_(config) {}

  TrackerPrediction predict(const Frame& src, const Frame& dst, const Cell& cell,
                            Direction direction) const override;

  const TrackerConfig& config() const { return config_; }

 private:
  TrackerConfig config_;
};

/// Template bbox used for a cell: padded bbox clipped to the frame.
BBox template_bbox(const Cell& cell, int pad, int height, int width);

/// Search window for a template: search_size square sharing its center,
/// clipped to the frame.
BBox search_window(const BBox& templ, int search_size, int height, int width);

/// Predictions read from text files of `t cell_id top left bottom right score`
/// lines. t is the frame the source cell lives in; ids follow the linker's
/// per-frame cell numbering.
class ExternalTracker final : public Tracker {
 public:
  ExternalTracker(double min_score, int width, int height) : min_score_(min_score), width_(width), height_(height) {}

  // Throws FormatError with the line number on malformed or out-of-bounds input.
  void load(Direction direction, std::string_view text);
  void load_file(Direction direction, const std::filesystem::path& path);

  TrackerPrediction predict(const Frame& src, const Frame& dst, const Cell& cell,
                            Direction direction) const override;

  std::size_t size(Direction direction) const;

 private:
  struct Entry {
    BBox region;
    double score;
  };
  using Key = std::pair<int, int>;

  double min_score_;
  int width_;
  int height_;
  std::map<Key, Entry> forward_;
  std::map<Key, Entry> backward_;
};

/// Per-frame predictions: result[t-1][k] belongs to the k-th cell of frame t.
/// Frames without an adjacent frame in `direction` get an empty list.
using PredictionTable = std::vector<std::vector<TrackerPrediction>>;

PredictionTable predict_all(const Sequence& sequence, std::span<const std::vector<Cell>> cells_by_frame,
                            Direction direction, const Tracker& tracker);

}  // namespace lineage
