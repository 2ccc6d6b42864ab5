#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lineage/imagecore.hpp"
#include "lineage/lineage.hpp"

namespace lineage::metrics {

struct SegRow {
  int t = 0;
  int gt_id = 0;
  int pred_id = 0;  // 0: unmatched
  double jaccard = 0.0;
};

struct SegReport {
  double score = 0.0;
  std::vector<SegRow> rows;
};

/// Mean Jaccard over all GT cells; a GT cell R matches pred cell S iff
/// |R ∩ S| > |R| / 2. Throws std::invalid_argument on shape mismatch or when
/// the ground truth holds no cells.
SegReport seg_score(std::span<const LabelMask> gt, std::span<const LabelMask> pred);

struct AogmWeights {
  double ns = 5.0;
  double fn = 10.0;
  double fp = 1.0;
  double ed = 1.0;
  double ea = 1.5;
  double ec = 1.0;
};

struct TraCounts {
  int ns = 0;  // node splits
  int fn = 0;  // false negative nodes
  int fp = 0;  // false positive nodes
  int ed = 0;  // edges to delete
  int ea = 0;  // edges to add
  int ec = 0;  // edges with wrong semantics
  friend bool operator==(const TraCounts&, const TraCounts&) = default;
};

struct TraReport {
  double score = 0.0;
  double aogm = 0.0;
  double aogm0 = 0.0;
  TraCounts counts;
  int gt_nodes = 0;
  int gt_edges = 0;
};

/// One node per (frame, label). Edges join consecutive nodes of a track
/// (link) and the last node of a parent to the first node of a child
/// (division).
struct TrackGraph {
  struct Node {
    int t = 0;
    int label = 0;
    std::int64_t size = 0;
  };
  struct Edge {
    int from = 0;  // node indices
    int to = 0;
    bool division = false;
  };
  std::vector<Node> nodes;  // ascending (t, label)
  std::vector<Edge> edges;

  int index_of(int t, int label) const;  // -1 when absent
};

/// Throws std::invalid_argument when tracks and masks disagree.
TrackGraph build_track_graph(std::span<const Track> tracks, std::span<const LabelMask> masks);

/// matches[p] lists the GT node indices whose majority lies in pred node p.
std::vector<std::vector<int>> match_nodes(const TrackGraph& gt, std::span<const LabelMask> gt_masks,
                                          const TrackGraph& pred, std::span<const LabelMask> pred_masks);

TraReport tra_score(std::span<const Track> gt_tracks, std::span<const LabelMask> gt_masks,
                    std::span<const Track> pred_tracks, std::span<const LabelMask> pred_masks,
                    const AogmWeights& weights = {});

/// FNV-1a over mask dimensions, labels and the formatted track file.
std::uint64_t gt_fingerprint(std::span<const LabelMask> masks, std::span<const Track> tracks);

struct RunReport {
  std::string name;
  std::uint64_t gt_fingerprint = 0;
  double seg = 0.0;
  double tra = 0.0;
};

struct DeltaRow {
  std::string metric;
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0;  // b - a
};

class FingerprintMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::vector<DeltaRow> compare_runs(const RunReport& a, const RunReport& b);
std::string format_comparison(const RunReport& a, const RunReport& b, std::span<const DeltaRow> rows);

std::string format_seg(const SegReport& report);
std::string format_tra(const TraReport& report);
std::string report_json(const SegReport& seg, const TraReport& tra, std::uint64_t fingerprint);

}  // namespace lineage::metrics
