#pragma once

#include <span>
#include <variant>
#include <vector>

#include "lineage/imagecore.hpp"
#include "lineage/lineage.hpp"
#include "lineage/rwalker.hpp"
#include "lineage/tracker.hpp"

namespace lineage {

/// M_{t-1}^i: current-frame cells matched to one previous-frame cell.
struct MatchSet {
  int source = 0;
  std::vector<int> matches;
};

struct Apoptosis {
  friend bool operator==(const Apoptosis&, const Apoptosis&) = default;
};
struct Continuation {
  int target = 0;
  friend bool operator==(const Continuation&, const Continuation&) = default;
};
struct Mitosis {
  std::vector<int> children;
  friend bool operator==(const Mitosis&, const Mitosis&) = default;
};

using CellState = std::variant<Apoptosis, Continuation, Mitosis>;

/// |M| = 0 -> Apoptosis, |M| = 1 -> Continuation(M_1), otherwise Mitosis(M).
CellState classify_state(const MatchSet& match);

/// A current cell whose backward region holds the centroids of two or more
/// previous-frame cells.
struct Collision {
  int cell_id = 0;
  std::vector<int> prev_ids;

  friend bool operator==(const Collision&, const Collision&) = default;
};

/// `backward[k]` is the prediction for `cur[k]`. Containment is inclusive
/// bbox containment; invalid predictions flag nothing.
std::vector<Collision> detect_collisions(std::span<const Cell> prev, std::span<const Cell> cur,
                                         std::span<const TrackerPrediction> backward);

/// Cells of one frame with their label mask and backward predictions.
struct FrameCells {
  LabelMask mask;
  std::vector<Cell> cells;
  std::vector<TrackerPrediction> backward;
};

struct CollisionReport {
  int iterations = 0;
  int splits = 0;
  std::vector<Collision> detected;               // first detection pass, pre-split ids
  std::vector<std::vector<int>> unresolved;      // previous-cell id sets left merged
  bool hit_iteration_limit = false;
};

struct CollisionResolution {
  FrameCells frame;
  CollisionReport report;
};

/// Splits flagged lumps with the random walker until no lump is flagged, every
/// remaining flag has failed or repeated itself, or the iteration count
/// reaches the number of previous-frame cells. Output cells are renumbered
/// 1..K in row-major order of their first pixel.
CollisionResolution resolve_collisions(const Frame& prev_frame, const Frame& frame, FrameCells cur,
                                       std::span<const Cell> prev_cells, const Tracker& tracker,
                                       const rwalker::RWConfig& rw);

/// C_t^j joins M_{t-1}^i when the centroid of C_t^j lies in F_{t-1}^i, or when
/// the center of F_{t-1}^i lies on a pixel of C_t^j.
std::vector<MatchSet> match_forward(std::span<const Cell> prev, std::span<const Cell> cur,
                                    std::span<const TrackerPrediction> forward);

/// Opens one parentless track per cell of frame `t`.
void start_lineage(LineageGraph& graph, int t, std::span<const Cell> cells);

/// Applies the states of frame t-1 cells to the lineage and assigns every
/// frame-t cell to a track. A current cell claimed by several previous cells
/// goes to a continuation claim over a mitosis claim; between continuations
/// the lowest track id wins, between mitoses the one whose forward region
/// (`forward_centers[i]`, optional) is centered nearest the cell. A loser
/// keeps its other claims and is closed when none remain; a mitosis left with
/// one child continues into it.
void update_lineage(LineageGraph& graph, int t, std::span<const Cell> prev_cells, std::span<const CellState> states,
                    std::span<const Cell> cur_cells, std::vector<Event>& events,
                    std::span<const Point2> forward_centers = {});

struct LinkerConfig {
  rwalker::RWConfig rw;
  Connectivity connectivity = Connectivity::Four;
  bool enable_collision_resolution = true;
  bool enable_mitosis_detection = true;
};

struct LinkerResult {
  std::vector<LabelMask> masks;  // labels are track ids
  LineageGraph lineage;
  std::vector<Event> events;
  std::vector<CollisionReport> collisions;  // [t-1]
};

/// Runs the frame loop t = 2..T. With mitosis detection off, a multi-match
/// continues into the match nearest to the forward region's center and the
/// other matches start new tracks.
LinkerResult run_linker(const Sequence& sequence, std::span<const LabelMask> masks, const Tracker& tracker,
                        const LinkerConfig& config);

}  // namespace lineage
