#include "lineage/metrics.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "json.hpp"

namespace lineage::metrics {

namespace {

void check_shapes(std::span<const LabelMask> gt, std::span<const LabelMask> pred) {
  if (gt.size() != pred.size()) {
    throw std::invalid_argument(fmt::format("frame count mismatch: gt {} vs pred {}", gt.size(), pred.size()));
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].width != pred[i].width || gt[i].height != pred[i].height) {
      throw std::invalid_argument(fmt::format("frame {}: mask size {}x{} vs {}x{}", i + 1, gt[i].width, gt[i].height,
                                              pred[i].width, pred[i].height));
    }
  }
}

// Per-frame overlap table: (gt label, pred label) -> shared pixels.
struct Overlap {
  std::map<std::uint32_t, std::int64_t> gt_size;
  std::map<std::uint32_t, std::int64_t> pred_size;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::int64_t> shared;
};

Overlap overlap(const LabelMask& gt, const LabelMask& pred) {
  Overlap o;
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const std::uint32_t g = gt.labels[i], p = pred.labels[i];
    if (g != 0) ++o.gt_size[g];
    if (p != 0) ++o.pred_size[p];
    if (g != 0 && p != 0) ++o.shared[{g, p}];
  }
  return o;
}

}  // namespace

SegReport seg_score(std::span<const LabelMask> gt, std::span<const LabelMask> pred) {
  check_shapes(gt, pred);
  SegReport report;
  double total = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const Overlap o = overlap(gt[i], pred[i]);
    for (const auto& [g, size] : o.gt_size) {
      SegRow row{static_cast<int>(i) + 1, static_cast<int>(g), 0, 0.0};
      for (auto it = o.shared.lower_bound({g, 0}); it != o.shared.end() && it->first.first == g; ++it) {
        if (2 * it->second > size) {
          const std::int64_t uni = size + o.pred_size.at(it->first.second) - it->second;
          row.pred_id = static_cast<int>(it->first.second);
          row.jaccard = static_cast<double>(it->second) / static_cast<double>(uni);
          break;
        }
      }
      total += row.jaccard;
      report.rows.push_back(row);
    }
  }
  if (report.rows.empty()) throw std::invalid_argument("SEG undefined: ground truth holds no cells");
  report.score = total / static_cast<double>(report.rows.size());
  return report;
}

int TrackGraph::index_of(int t, int label) const {
  const auto it = std::lower_bound(nodes.begin(), nodes.end(), std::pair{t, label}, [](const Node& n, auto key) {
    return std::pair{n.t, n.label} < key;
  });
  return it != nodes.end() && it->t == t && it->label == label ? static_cast<int>(it - nodes.begin()) : -1;
}

TrackGraph build_track_graph(std::span<const Track> tracks, std::span<const LabelMask> masks) {
  validate_tracks(tracks);
  validate_against_masks(tracks, masks);
  TrackGraph g;
  std::map<int, std::vector<int>> by_track;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    std::map<std::uint32_t, std::int64_t> sizes;
    for (std::uint32_t l : masks[i].labels) {
      if (l != 0) ++sizes[l];
    }
    for (const auto& [label, size] : sizes) {
      by_track[static_cast<int>(label)].push_back(static_cast<int>(g.nodes.size()));
      g.nodes.push_back({static_cast<int>(i) + 1, static_cast<int>(label), size});
    }
  }
  for (const Track& t : tracks) {
    const auto it = by_track.find(t.id);
    if (it == by_track.end()) continue;
    const auto& seq = it->second;
    for (std::size_t k = 1; k < seq.size(); ++k) g.edges.push_back({seq[k - 1], seq[k], false});
    if (t.parent != 0) {
      const auto p = by_track.find(t.parent);
      if (p != by_track.end()) g.edges.push_back({p->second.back(), seq.front(), true});
    }
  }
  return g;
}

std::vector<std::vector<int>> match_nodes(const TrackGraph& gt, std::span<const LabelMask> gt_masks,
                                          const TrackGraph& pred, std::span<const LabelMask> pred_masks) {
  check_shapes(gt_masks, pred_masks);
  std::vector<std::vector<int>> matches(pred.nodes.size());
  for (std::size_t i = 0; i < gt_masks.size(); ++i) {
    const int t = static_cast<int>(i) + 1;
    const Overlap o = overlap(gt_masks[i], pred_masks[i]);
    for (const auto& [key, shared] : o.shared) {
      const int gi = gt.index_of(t, static_cast<int>(key.first));
      if (2 * shared > gt.nodes[static_cast<std::size_t>(gi)].size) {
        matches[static_cast<std::size_t>(pred.index_of(t, static_cast<int>(key.second)))].push_back(gi);
      }
    }
  }
  return matches;
}

TraReport tra_score(std::span<const Track> gt_tracks, std::span<const LabelMask> gt_masks,
                    std::span<const Track> pred_tracks, std::span<const LabelMask> pred_masks,
                    const AogmWeights& weights) {
  check_shapes(gt_masks, pred_masks);
  const TrackGraph gt = build_track_graph(gt_tracks, gt_masks);
  const TrackGraph pred = build_track_graph(pred_tracks, pred_masks);
  const auto matches = match_nodes(gt, gt_masks, pred, pred_masks);

  TraReport r;
  std::vector<bool> gt_hit(gt.nodes.size(), false);
  for (const auto& m : matches) {
    if (m.empty()) ++r.counts.fp;
    if (m.size() > 1) r.counts.ns += static_cast<int>(m.size()) - 1;
    for (int g : m) gt_hit[static_cast<std::size_t>(g)] = true;
  }
  r.counts.fn = static_cast<int>(std::count(gt_hit.begin(), gt_hit.end(), false));

  // GT edges keyed by endpoints. Every GT node has at most one incoming edge
  // and is matched by at most one pred node, so candidate sets of distinct
  // pred edges never share a GT edge and each can choose independently.
  std::map<std::pair<int, int>, bool> gt_edges;
  for (const auto& e : gt.edges) gt_edges[{e.from, e.to}] = e.division;
  std::set<std::pair<int, int>> realized;
  for (const auto& e : pred.edges) {
    const auto& from = matches[static_cast<std::size_t>(e.from)];
    const auto& to = matches[static_cast<std::size_t>(e.to)];
    std::optional<std::pair<int, int>> pick;
    bool same = false;
    for (int a : from) {
      for (int b : to) {
        const auto it = gt_edges.find({a, b});
        if (it == gt_edges.end() || realized.contains(it->first)) continue;
        if (!pick || (!same && it->second == e.division)) {
          pick = it->first;
          same = it->second == e.division;
        }
      }
    }
    if (!pick) {
      ++r.counts.ed;
      continue;
    }
    realized.insert(*pick);
    if (!same) ++r.counts.ec;
  }
  r.counts.ea = static_cast<int>(gt_edges.size() - realized.size());

  const TraCounts& c = r.counts;
  r.aogm = weights.ns * c.ns + weights.fn * c.fn + weights.fp * c.fp + weights.ed * c.ed + weights.ea * c.ea +
           weights.ec * c.ec;
  r.gt_nodes = static_cast<int>(gt.nodes.size());
  r.gt_edges = static_cast<int>(gt.edges.size());
  r.aogm0 = weights.fn * r.gt_nodes + weights.ea * r.gt_edges;
  if (r.aogm0 <= 0.0) throw std::invalid_argument("TRA undefined: ground truth holds no cells");
  r.score = 1.0 - std::min(r.aogm, r.aogm0) / r.aogm0;
  return r;
}

std::uint64_t gt_fingerprint(std::span<const LabelMask> masks, std::span<const Track> tracks) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v, int bytes) {
    for (int k = 0; k < bytes; ++k) {
      h ^= (v >> (8 * k)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  mix(masks.size(), 8);
  for (const LabelMask& m : masks) {
    mix(static_cast<std::uint32_t>(m.width), 4);
    mix(static_cast<std::uint32_t>(m.height), 4);
    for (std::uint32_t l : m.labels) mix(l, 4);
  }
  for (char ch : format_track_file(tracks)) mix(static_cast<unsigned char>(ch), 1);
  return h;
}

std::vector<DeltaRow> compare_runs(const RunReport& a, const RunReport& b) {
  if (a.gt_fingerprint != b.gt_fingerprint) {
    throw FingerprintMismatch(fmt::format("runs '{}' and '{}' were scored against different ground truth ({:016x} vs {:016x})",
                                          a.name, b.name, a.gt_fingerprint, b.gt_fingerprint));
  }
  return {{"SEG", a.seg, b.seg, b.seg - a.seg}, {"TRA", a.tra, b.tra, b.tra - a.tra}};
}

std::string format_comparison(const RunReport& a, const RunReport& b, std::span<const DeltaRow> rows) {
  const std::size_t wa = std::max<std::size_t>(a.name.size(), 5), wb = std::max<std::size_t>(b.name.size(), 5);
  std::string out = fmt::format("{:<6} {:>{}} {:>{}} {:>7}\n", "metric", a.name, wa, b.name, wb, "delta");
  for (const DeltaRow& r : rows) {
    out += fmt::format("{:<6} {:>{}.3f} {:>{}.3f} {:>+7.3f}\n", r.metric, r.a, wa, r.b, wb, r.delta);
  }
  return out;
}

std::string format_seg(const SegReport& report) {
  std::string out = fmt::format("SEG {:.6f} over {} GT cells\n", report.score, report.rows.size());
  out += "   t  gt_id  pred_id  jaccard\n";
  for (const SegRow& r : report.rows) {
    out += fmt::format("{:4d} {:6d} {:8d} {:8.4f}\n", r.t, r.gt_id, r.pred_id, r.jaccard);
  }
  return out;
}

std::string format_tra(const TraReport& r) {
  return fmt::format(
      "TRA {:.6f}  AOGM {:.1f}  AOGM0 {:.1f}\n"
      "  NS {}  FN {}  FP {}  ED {}  EA {}  EC {}\n",
      r.score, r.aogm, r.aogm0, r.counts.ns, r.counts.fn, r.counts.fp, r.counts.ed, r.counts.ea, r.counts.ec);
}

std::string report_json(const SegReport& seg, const TraReport& tra, std::uint64_t fingerprint) {
  using nlohmann::json;
  json rows = json::array();
  for (const SegRow& r : seg.rows) {
    rows.push_back({{"t", r.t}, {"gt_id", r.gt_id}, {"pred_id", r.pred_id}, {"jaccard", r.jaccard}});
  }
  json j{{"gt_fingerprint", fmt::format("{:016x}", fingerprint)},
         {"seg", {{"score", seg.score}, {"cells", rows}}},
         {"tra",
          {{"score", tra.score},
           {"aogm", tra.aogm},
           {"aogm0", tra.aogm0},
           {"gt_nodes", tra.gt_nodes},
           {"gt_edges", tra.gt_edges},
           {"counts",
            {{"node_split", tra.counts.ns},
             {"false_negative", tra.counts.fn},
             {"false_positive", tra.counts.fp},
             {"edge_delete", tra.counts.ed},
             {"edge_add", tra.counts.ea},
             {"edge_semantics", tra.counts.ec}}}}}};
  return j.dump(2) + "\n";
}

}  // namespace lineage::metrics
