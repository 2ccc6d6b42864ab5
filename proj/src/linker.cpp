#include "lineage/linker.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>

namespace lineage {

CellState classify_state(const MatchSet& match) {
  switch (match.matches.size()) {
    case 0: return Apoptosis{};
    case 1: return Continuation{match.matches.front()};
    default: return Mitosis{match.matches};
  }
}

std::vector<Collision> detect_collisions(std::span<const Cell> prev, std::span<const Cell> cur,
                                         std::span<const TrackerPrediction> backward) {
  if (backward.size() != cur.size()) throw std::invalid_argument("detect_collisions: one prediction per cell required");
  std::vector<Collision> out;
  for (std::size_t k = 0; k < cur.size(); ++k) {
    if (!backward[k].valid) continue;
    Collision c{cur[k].id, {}};
    for (const Cell& p : prev) {
      if (backward[k].region.contains(p.centroid)) c.prev_ids.push_back(p.id);
    }
    if (c.prev_ids.size() >= 2) out.push_back(std::move(c));
  }
  return out;
}

namespace {

std::size_t index_of_cell(std::span<const Cell> cells, int id) {
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (cells[k].id == id) return k;
  }
  throw std::invalid_argument("no cell with id " + std::to_string(id));
}

// Renumbers cells 1..K by first pixel and rewrites mask and predictions.
void canonicalize(FrameCells& fc) {
  std::vector<std::size_t> order(fc.cells.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return fc.cells[a].pixels.front() < fc.cells[b].pixels.front(); });
  std::vector<Cell> cells;
  std::vector<TrackerPrediction> preds;
  LabelMask mask(fc.mask.width, fc.mask.height);
  for (std::size_t k = 0; k < order.size(); ++k) {
    Cell c = std::move(fc.cells[order[k]]);
    c.id = static_cast<int>(k) + 1;
    for (const Pixel& p : c.pixels) mask.at(p.row, p.col) = static_cast<std::uint32_t>(c.id);
    if (!fc.backward.empty()) {
      TrackerPrediction pr = fc.backward[order[k]];
      pr.source_cell_id = c.id;
      preds.push_back(pr);
    }
    cells.push_back(std::move(c));
  }
  fc.cells = std::move(cells);
  fc.backward = std::move(preds);
  fc.mask = std::move(mask);
}

}  // namespace

CollisionResolution resolve_collisions(const Frame& prev_frame, const Frame& frame, FrameCells cur,
                                       std::span<const Cell> prev_cells, const Tracker& tracker,
                                       const rwalker::RWConfig& rw) {
  CollisionResolution out;
  CollisionReport& report = out.report;
  if (cur.backward.size() != cur.cells.size()) {
    throw std::invalid_argument("resolve_collisions: one backward prediction per cell required");
  }
  std::map<int, Point2> prev_centroid;
  for (const Cell& p : prev_cells) prev_centroid[p.id] = p.centroid;

  const int max_iterations = static_cast<int>(prev_cells.size());
  std::set<int> given_up;
  // For cells produced by a split: the parent set of the lump they came from.
  std::map<int, std::vector<int>> origin;
  int next_id = 1;
  for (const Cell& c : cur.cells) next_id = std::max(next_id, c.id + 1);

  std::vector<Collision> flagged = detect_collisions(prev_cells, cur.cells, cur.backward);
  report.detected = flagged;
  for (;;) {
    std::erase_if(flagged, [&](const Collision& c) {
      if (given_up.contains(c.cell_id)) return true;
      // A split that reproduces its lump's parent set made no progress.
      if (const auto it = origin.find(c.cell_id); it != origin.end() && it->second == c.prev_ids) {
        given_up.insert(c.cell_id);
        report.unresolved.push_back(c.prev_ids);
        return true;
      }
      return false;
    });
    if (flagged.empty()) break;
    if (report.iterations >= max_iterations) {
      report.hit_iteration_limit = true;
      for (const Collision& c : flagged) report.unresolved.push_back(c.prev_ids);
      break;
    }
    ++report.iterations;

    for (const Collision& lump_flag : flagged) {
      const std::size_t idx = index_of_cell(cur.cells, lump_flag.cell_id);
      const Cell lump = cur.cells[idx];
      const BBox& region = cur.backward[idx].region;
      const Point2 lc = lump.bbox.center(), rc = region.center();
      const Point2 displacement{lc.row - rc.row, lc.col - rc.col};
      std::vector<Point2> centroids;
      for (int id : lump_flag.prev_ids) centroids.push_back(prev_centroid.at(id));

      rwalker::ResegResult split = rwalker::reseg_cell(frame, lump, centroids, displacement, rw);
      if (!split.ok()) {
        given_up.insert(lump.id);
        report.unresolved.push_back(lump_flag.prev_ids);
        continue;
      }
      ++report.splits;
      cur.cells.erase(cur.cells.begin() + static_cast<std::ptrdiff_t>(idx));
      cur.backward.erase(cur.backward.begin() + static_cast<std::ptrdiff_t>(idx));
      for (std::size_t k = 0; k < split.segments.size(); ++k) {
        Cell piece = std::move(split.segments[k]);
        piece.id = k == 0 ? lump.id : next_id++;
        for (const Pixel& p : piece.pixels) cur.mask.at(p.row, p.col) = static_cast<std::uint32_t>(piece.id);
        cur.backward.push_back(tracker.predict(frame, prev_frame, piece, Direction::Backward));
        origin[piece.id] = lump_flag.prev_ids;
        cur.cells.push_back(std::move(piece));
      }
    }
    flagged = detect_collisions(prev_cells, cur.cells, cur.backward);
  }

  canonicalize(cur);
  out.frame = std::move(cur);
  return out;
}

std::vector<MatchSet> match_forward(std::span<const Cell> prev, std::span<const Cell> cur,
                                    std::span<const TrackerPrediction> forward) {
  if (forward.size() != prev.size()) throw std::invalid_argument("match_forward: one prediction per cell required");
  std::vector<MatchSet> out;
  out.reserve(prev.size());
  for (std::size_t i = 0; i < prev.size(); ++i) {
    MatchSet m{prev[i].id, {}};
    const TrackerPrediction& f = forward[i];
    if (f.valid) {
      const Pixel center = nearest_pixel(f.region.center());
      for (const Cell& c : cur) {
        if (f.region.contains(c.centroid) || c.contains(center)) m.matches.push_back(c.id);
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

void start_lineage(LineageGraph& graph, int t, std::span<const Cell> cells) {
  if (graph.assignments.size() < static_cast<std::size_t>(t)) graph.assignments.resize(static_cast<std::size_t>(t));
  auto& frame = graph.assignments[static_cast<std::size_t>(t - 1)];
  for (const Cell& c : cells) frame[c.id] = graph.open_track(t, 0);
}

void update_lineage(LineageGraph& graph, int t, std::span<const Cell> prev_cells, std::span<const CellState> states,
                    std::span<const Cell> cur_cells, std::vector<Event>& events,
                    std::span<const Point2> forward_centers) {
  if (states.size() != prev_cells.size()) {
    throw std::invalid_argument("update_lineage: frame " + std::to_string(t - 1) + " has " +
                                std::to_string(prev_cells.size()) + " cells but " + std::to_string(states.size()) +
                                " states");
  }
  if (!forward_centers.empty() && forward_centers.size() != prev_cells.size()) {
    throw std::invalid_argument("update_lineage: forward centers do not match frame " + std::to_string(t - 1));
  }
  if (graph.assignments.size() < static_cast<std::size_t>(t)) graph.assignments.resize(static_cast<std::size_t>(t));

  struct Claimant {
    int track;
    std::vector<int> targets;  // current cell ids, in match order
    bool apoptosis;
    bool mitosis;
    std::optional<Point2> center;
  };
  std::vector<Claimant> claimants;
  for (std::size_t i = 0; i < prev_cells.size(); ++i) {
    Claimant c{graph.track_of(t - 1, prev_cells[i].id), {}, false, false, std::nullopt};
    if (!forward_centers.empty()) c.center = forward_centers[i];
    std::visit(
        [&](const auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Apoptosis>) c.apoptosis = true;
          if constexpr (std::is_same_v<S, Continuation>) c.targets = {s.target};
          if constexpr (std::is_same_v<S, Mitosis>) {
            c.targets = s.children;
            c.mitosis = true;
          }
        },
        states[i]);
    claimants.push_back(std::move(c));
  }

  // A contested cell goes to a continuation claim before a mitosis claim.
  // Among continuations the lowest track id wins; among mitoses the claim
  // whose forward region is centered nearest the cell, then the lowest id.
  std::map<int, const Cell*> cell_of;
  for (const Cell& c : cur_cells) cell_of[c.id] = &c;
  auto distance = [&](const Claimant& c, int target) {
    if (!c.center) return 0.0;
    const Point2 p = cell_of.at(target)->centroid;
    return std::hypot(p.row - c.center->row, p.col - c.center->col);
  };
  auto better = [&](const Claimant& a, const Claimant& b, int target) {
    if (a.mitosis != b.mitosis) return !a.mitosis;
    if (a.mitosis) {
      const double da = distance(a, target), db = distance(b, target);
      if (da != db) return da < db;
    }
    return a.track < b.track;
  };
  std::map<int, const Claimant*> owner;
  std::map<int, std::vector<int>> contenders;
  for (const Claimant& c : claimants) {
    for (int target : c.targets) {
      contenders[target].push_back(c.track);
      auto [it, inserted] = owner.emplace(target, &c);
      if (!inserted && better(c, *it->second, target)) it->second = &c;
    }
  }
  for (auto& [target, ids] : contenders) {
    if (ids.size() < 2) continue;
    const int winner = owner.at(target)->track;
    std::erase(ids, winner);
    std::sort(ids.begin(), ids.end());
    std::vector<int> event_ids{winner};
    event_ids.insert(event_ids.end(), ids.begin(), ids.end());
    events.push_back({t, EventKind::MergeUnresolved, std::move(event_ids)});
  }

  auto& assigned = graph.assignments[static_cast<std::size_t>(t - 1)];
  std::map<int, int> child_parent;  // current cell id -> parent track
  std::vector<std::pair<int, std::vector<int>>> mitoses;
  for (Claimant& c : claimants) {
    std::erase_if(c.targets, [&](int target) { return owner.at(target)->track != c.track; });
    if (c.apoptosis) {
      events.push_back({t, EventKind::Apoptosis, {c.track}});
    } else if (c.targets.size() == 1) {
      assigned[c.targets.front()] = c.track;
      graph.at(c.track).end = t;
    } else if (c.targets.size() >= 2) {
      for (int target : c.targets) child_parent[target] = c.track;
      mitoses.emplace_back(c.track, c.targets);
    }
  }

  // New tracks, daughters and newcomers alike, are numbered in cell order.
  for (const Cell& cell : cur_cells) {
    if (assigned.contains(cell.id)) continue;
    const auto it = child_parent.find(cell.id);
    const int parent = it == child_parent.end() ? 0 : it->second;
    assigned[cell.id] = graph.open_track(t, parent);
    if (parent == 0) events.push_back({t, EventKind::New, {assigned[cell.id]}});
  }
  for (auto& [parent, children] : mitoses) {
    std::vector<int> ids{parent};
    for (int child : children) ids.push_back(assigned.at(child));
    events.push_back({t, EventKind::Mitosis, std::move(ids)});
  }
}

namespace {

FrameCells frame_cells(const LabelMask& mask, Connectivity connectivity) {
  Components comps = label_components(mask, connectivity);
  return {std::move(comps.mask), std::move(comps.cells), {}};
}

// Without mitosis detection a multi-match becomes a continuation into the
// cell nearest the forward region's center.
CellState collapse_mitosis(const CellState& state, const TrackerPrediction& forward, std::span<const Cell> cur) {
  const auto* m = std::get_if<Mitosis>(&state);
  if (m == nullptr) return state;
  const Point2 center = forward.region.center();
  int best = m->children.front();
  double best_d = -1.0;
  for (int id : m->children) {
    const Point2 c = cur[index_of_cell(cur, id)].centroid;
    const double d = (c.row - center.row) * (c.row - center.row) + (c.col - center.col) * (c.col - center.col);
    if (best_d < 0.0 || d < best_d) {
      best = id;
      best_d = d;
    }
  }
  return Continuation{best};
}

}  // namespace

LinkerResult run_linker(const Sequence& sequence, std::span<const LabelMask> masks, const Tracker& tracker,
                        const LinkerConfig& config) {
  sequence.validate();
  const int T = sequence.length();
  if (static_cast<int>(masks.size()) != T) {
    throw std::invalid_argument("linker: " + std::to_string(masks.size()) + " masks for " + std::to_string(T) +
                                " frames");
  }
  for (int t = 1; t <= T; ++t) {
    const LabelMask& m = masks[static_cast<std::size_t>(t - 1)];
    const Frame& f = sequence.frame(t);
    if (m.width != f.width || m.height != f.height) {
      throw std::invalid_argument("linker: mask of frame " + std::to_string(t) + " is " + std::to_string(m.width) +
                                  "x" + std::to_string(m.height) + ", frame is " + std::to_string(f.width) + "x" +
                                  std::to_string(f.height));
    }
  }

  LinkerResult out;
  out.collisions.resize(static_cast<std::size_t>(T));
  std::vector<FrameCells> resolved;
  resolved.reserve(static_cast<std::size_t>(T));
  if (T == 0) return out;

  resolved.push_back(frame_cells(masks[0], config.connectivity));
  start_lineage(out.lineage, 1, resolved.back().cells);

  for (int t = 2; t <= T; ++t) {
    const Frame& prev_frame = sequence.frame(t - 1);
    const Frame& frame = sequence.frame(t);
    FrameCells cur = frame_cells(masks[static_cast<std::size_t>(t - 1)], config.connectivity);
    const FrameCells& prev = resolved.back();

    if (config.enable_collision_resolution) {
      for (const Cell& c : cur.cells) cur.backward.push_back(tracker.predict(frame, prev_frame, c, Direction::Backward));
      CollisionResolution res = resolve_collisions(prev_frame, frame, std::move(cur), prev.cells, tracker, config.rw);
      for (const Collision& c : res.report.detected) {
        std::vector<int> ids;
        for (int id : c.prev_ids) ids.push_back(out.lineage.track_of(t - 1, id));
        out.events.push_back({t, EventKind::Collision, std::move(ids)});
      }
      out.collisions[static_cast<std::size_t>(t - 1)] = std::move(res.report);
      cur = std::move(res.frame);
    }

    std::vector<TrackerPrediction> forward;
    for (const Cell& c : prev.cells) forward.push_back(tracker.predict(prev_frame, frame, c, Direction::Forward));
    const std::vector<MatchSet> matches = match_forward(prev.cells, cur.cells, forward);
    std::vector<CellState> states;
    for (std::size_t i = 0; i < matches.size(); ++i) {
      CellState s = classify_state(matches[i]);
      if (!config.enable_mitosis_detection) s = collapse_mitosis(s, forward[i], cur.cells);
      states.push_back(std::move(s));
    }
    std::vector<Point2> centers;
    for (const TrackerPrediction& f : forward) centers.push_back(f.region.center());
    update_lineage(out.lineage, t, prev.cells, states, cur.cells, out.events, centers);
    resolved.push_back(std::move(cur));
  }

  out.masks.reserve(resolved.size());
  for (std::size_t i = 0; i < resolved.size(); ++i) {
    const auto& assigned = out.lineage.assignments[i];
    LabelMask m(resolved[i].mask.width, resolved[i].mask.height);
    for (const Cell& c : resolved[i].cells) {
      const auto track = static_cast<std::uint32_t>(assigned.at(c.id));
      for (const Pixel& p : c.pixels) m.at(p.row, p.col) = track;
    }
    out.masks.push_back(std::move(m));
  }
  return out;
}

}  // namespace lineage
