#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lineage/imagecore.hpp"

namespace lineage::rwalker {

enum class Preconditioner { None, Jacobi };

struct RWConfig {
  double beta = 130.0;
  double epsilon = 1e-6;
  // Convergence: max_i |r_i| / L_ii <= cg_tol, i.e. the largest deviation of
  // any unseeded node from the weighted mean of its neighbours.
  double cg_tol = 1e-12;
  // 0 selects 50 x the number of unseeded nodes.
  int cg_max_iter = 0;
  Preconditioner preconditioner = Preconditioner::Jacobi;

  void validate() const;
};

struct Edge {
  int a = 0;
  int b = 0;
  double weight = 1.0;
};

/// Nodes are region pixels (sorted row-major), edges join 4-neighbours.
class LatticeGraph {
 public:
  LatticeGraph() = default;
  // Takes edges as given; throws unless every weight is positive and both
  // endpoints are distinct valid node indices.
  LatticeGraph(std::vector<Pixel> nodes, std::vector<Edge> edges);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Pixel>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  // Node index of a pixel, or -1.
  int index_of(Pixel p) const;

  struct Neighbor {
    int node;
    double weight;
  };
  std::span<const Neighbor> neighbors(int node) const {
    return {adjacency_.data() + offsets_[node], adjacency_.data() + offsets_[node + 1]};
  }
  double degree(int node) const { return degree_[node]; }

 private:
  std::vector<Pixel> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_;
  std::vector<Neighbor> adjacency_;
  std::vector<double> degree_;
};

/// Gaussian weights w = exp(-beta (g_i - g_j)^2) + epsilon over normalized
/// intensities; throws on an empty region or pixels outside the frame.
LatticeGraph build_lattice(const Frame& frame, std::span<const Pixel> region, const RWConfig& config);

/// Same weighting over a row-major intensity patch with values in [0,1].
LatticeGraph build_lattice(std::span<const double> intensities, int width, int height,
                           std::span<const Pixel> region, const RWConfig& config);

struct Seed {
  Pixel pixel;
  int label = 1;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual) : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

struct Probabilities {
  int labels = 0;
  // node-major: value(node, label) = p[node * labels + label - 1]
  std::vector<double> p;
  // Nodes of components without any seed; they take the label of the
  // Euclidean-nearest seed.
  std::vector<int> unreached;
  int iterations = 0;
  double residual = 0.0;

  double value(int node, int label) const { return p[static_cast<std::size_t>(node) * labels + label - 1]; }
};

/// Solves L_U x_s = -B^T m_s for labels 1..n-1 by conjugate gradient and
/// sets label n to one minus the rest. Throws std::invalid_argument on bad
/// seeds and SolverError when CG does not converge.
Probabilities solve_probabilities(const LatticeGraph& graph, std::span<const Seed> seeds, const RWConfig& config);

struct Segmentation {
  std::vector<int> labels;  // per node, 1..n
  Probabilities probabilities;
};

/// Argmax labeling; ties go to the lower label, seeds keep their own label.
Segmentation segment(const LatticeGraph& graph, std::span<const Seed> seeds, const RWConfig& config);

enum class ResegFailure { None, SeedClash, EmptySegment, SolverFailed };

std::string to_string(ResegFailure failure);

struct ResegResult {
  std::vector<Cell> segments;  // segment k holds seed k; ids are 1..n
  std::vector<Pixel> seeds;
  ResegFailure failure = ResegFailure::None;
  bool unreached_nodes = false;

  bool ok() const { return failure == ResegFailure::None; }
};

/// Splits a lump into one segment per previous-frame centroid. Seeds are the
/// centroids shifted by `displacement`, rounded, and snapped to the nearest
/// lump pixel. Fragments cut off from their seed are merged into the
/// neighbouring segment with the longest shared border so every segment stays
/// 4-connected. Throws std::invalid_argument with fewer than two centroids.
ResegResult reseg_cell(const Frame& frame, const Cell& lump, std::span<const Point2> prev_centroids,
                       Point2 displacement, const RWConfig& config);

/// round(255 p) heatmap of one label's probability over the frame extent.
Frame probability_heatmap(const LatticeGraph& graph, const Probabilities& probs, int label, int width, int height);

}  // namespace lineage::rwalker
