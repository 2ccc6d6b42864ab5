#include "lineage/rwalker.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <fmt/format.h>

namespace lineage::rwalker {

void RWConfig::validate() const {
  if (!(beta >= 0.0)) throw std::invalid_argument("rwalker: beta must be >= 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("rwalker: epsilon must be > 0");
  if (!(cg_tol > 0.0)) throw std::invalid_argument("rwalker: cg_tol must be > 0");
  if (cg_max_iter < 0) throw std::invalid_argument("rwalker: cg_max_iter must be >= 0");
}

LatticeGraph::LatticeGraph(std::vector<Pixel> nodes, std::vector<Edge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  if (!std::is_sorted(nodes_.begin(), nodes_.end()) ||
      std::adjacent_find(nodes_.begin(), nodes_.end()) != nodes_.end()) {
    throw std::invalid_argument("lattice: nodes must be unique and sorted row-major");
  }
  const int n = static_cast<int>(nodes_.size());
  std::vector<std::size_t> count(nodes_.size() + 1, 0);
  for (const Edge& e : edges_) {
    if (e.a < 0 || e.b < 0 || e.a >= n || e.b >= n || e.a == e.b) {
      throw std::invalid_argument("lattice: edge endpoint out of range");
    }
    if (!(e.weight > 0.0)) throw std::invalid_argument("lattice: edge weights must be positive");
    ++count[e.a + 1];
    ++count[e.b + 1];
  }
  offsets_.assign(nodes_.size() + 1, 0);
  for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] = offsets_[i - 1] + count[i];
  adjacency_.resize(offsets_.back());
  degree_.assign(nodes_.size(), 0.0);
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (const Edge& e : edges_) {
    adjacency_[fill[e.a]++] = {e.b, e.weight};
    adjacency_[fill[e.b]++] = {e.a, e.weight};
    degree_[e.a] += e.weight;
    degree_[e.b] += e.weight;
  }
}

int LatticeGraph::index_of(Pixel p) const {
  const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), p);
  return it != nodes_.end() && *it == p ? static_cast<int>(it - nodes_.begin()) : -1;
}

namespace {

template <class Intensity>
LatticeGraph make_lattice(std::span<const Pixel> region, int width, int height, const RWConfig& config,
                          Intensity intensity) {
  config.validate();
  if (region.empty()) throw std::invalid_argument("build_lattice: empty region");
  std::vector<Pixel> nodes(region.begin(), region.end());
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  for (const Pixel& p : nodes) {
    if (p.row < 0 || p.col < 0 || p.row >= height || p.col >= width) {
      throw std::invalid_argument("build_lattice: region pixel outside the patch");
    }
  }
  auto find = [&](Pixel p) {
    const auto it = std::lower_bound(nodes.begin(), nodes.end(), p);
    return it != nodes.end() && *it == p ? static_cast<int>(it - nodes.begin()) : -1;
  };
  std::vector<Edge> edges;
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
    const Pixel p = nodes[i];
    const double gi = intensity(p);
    for (const Pixel q : {Pixel{p.row, p.col + 1}, Pixel{p.row + 1, p.col}}) {
      const int j = find(q);
      if (j < 0) continue;
      const double d = gi - intensity(q);
      edges.push_back({i, j, std::exp(-config.beta * d * d) + config.epsilon});
    }
  }
  return LatticeGraph(std::move(nodes), std::move(edges));
}

struct CgResult {
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

// Conjugate gradient on the unseeded Laplacian block. `apply` computes y = A x.
template <class Apply>
CgResult conjugate_gradient(const Apply& apply, std::span<const double> diag, std::span<const double> b,
                            std::span<double> x, const RWConfig& config, int max_iter) {
  const std::size_t n = b.size();
  std::vector<double> r(n), z(n), p(n), ap(n);
  auto scaled_residual = [&] {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(r[i]) / diag[i]);
    return worst;
  };
  auto precondition = [&] {
    for (std::size_t i = 0; i < n; ++i) z[i] = config.preconditioner == Preconditioner::Jacobi ? r[i] / diag[i] : r[i];
  };

  CgResult out;
  while (true) {
    // Restart from the true residual; guards against recurrence drift.
    apply(x, ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
    out.residual = scaled_residual();
    if (out.residual <= config.cg_tol) {
      out.converged = true;
      return out;
    }
    if (out.iterations >= max_iter) return out;
    precondition();
    p = z;
    double rz = 0.0;
    for (std::size_t i = 0; i < n; ++i) rz += r[i] * z[i];
    while (out.iterations < max_iter) {
      ++out.iterations;
      apply(p, ap);
      double pap = 0.0;
      for (std::size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
      if (!(pap > 0.0)) break;
      const double alpha = rz / pap;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * ap[i];
      }
      if (scaled_residual() <= config.cg_tol) break;
      precondition();
      double rz_next = 0.0;
      for (std::size_t i = 0; i < n; ++i) rz_next += r[i] * z[i];
      const double beta = rz_next / rz;
      rz = rz_next;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
  }
}

double squared_distance(Pixel a, Pixel b) {
  const double dr = a.row - b.row, dc = a.col - b.col;
  return dr * dr + dc * dc;
}

}  // namespace

LatticeGraph build_lattice(const Frame& frame, std::span<const Pixel> region, const RWConfig& config) {
  return make_lattice(region, frame.width, frame.height, config, [&](Pixel p) { return frame.value(p.row, p.col); });
}

LatticeGraph build_lattice(std::span<const double> intensities, int width, int height,
                           std::span<const Pixel> region, const RWConfig& config) {
  if (intensities.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("build_lattice: intensity patch size mismatch");
  }
  return make_lattice(region, width, height, config,
                      [&](Pixel p) { return intensities[static_cast<std::size_t>(p.row) * width + p.col]; });
}

Probabilities solve_probabilities(const LatticeGraph& graph, std::span<const Seed> seeds, const RWConfig& config) {
  config.validate();
  const int n_nodes = static_cast<int>(graph.size());
  if (seeds.empty()) throw std::invalid_argument("random walker: no seeds");
  int n_labels = 0;
  for (const Seed& s : seeds) n_labels = std::max(n_labels, s.label);
  std::vector<int> seed_label(graph.size(), 0);
  std::vector<bool> label_seen(static_cast<std::size_t>(n_labels) + 1, false);
  for (const Seed& s : seeds) {
    if (s.label < 1) throw std::invalid_argument("random walker: seed labels start at 1");
    const int node = graph.index_of(s.pixel);
    if (node < 0) throw std::invalid_argument("random walker: seed outside the region");
    if (seed_label[node] != 0) throw std::invalid_argument("random walker: duplicate seed pixel");
    seed_label[node] = s.label;
    label_seen[s.label] = true;
  }
  for (int l = 1; l <= n_labels; ++l) {
    if (!label_seen[l]) throw std::invalid_argument("random walker: label " + std::to_string(l) + " has no seed");
  }

  Probabilities out;
  out.labels = n_labels;
  out.p.assign(graph.size() * n_labels, 0.0);
  auto at = [&](int node, int label) -> double& { return out.p[static_cast<std::size_t>(node) * n_labels + label - 1]; };

  // Components: those without seeds take the nearest seed's label.
  std::vector<int> component(graph.size(), -1);
  std::vector<bool> component_seeded;
  for (int start = 0; start < n_nodes; ++start) {
    if (component[start] >= 0) continue;
    const int id = static_cast<int>(component_seeded.size());
    bool seeded = false;
    std::deque<int> queue{start};
    component[start] = id;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      seeded = seeded || seed_label[u] != 0;
      for (const auto& nb : graph.neighbors(u)) {
        if (component[nb.node] < 0) {
          component[nb.node] = id;
          queue.push_back(nb.node);
        }
      }
    }
    component_seeded.push_back(seeded);
  }

  std::vector<int> local(graph.size(), -1);
  std::vector<int> unseeded;
  for (int u = 0; u < n_nodes; ++u) {
    if (seed_label[u] != 0) {
      at(u, seed_label[u]) = 1.0;
    } else if (!component_seeded[component[u]]) {
      const Seed* nearest = &seeds[0];
      for (const Seed& s : seeds) {
        const double d = squared_distance(graph.nodes()[u], s.pixel);
        const double best = squared_distance(graph.nodes()[u], nearest->pixel);
        if (d < best || (d == best && s.label < nearest->label)) nearest = &s;
      }
      at(u, nearest->label) = 1.0;
      out.unreached.push_back(u);
    } else {
      local[u] = static_cast<int>(unseeded.size());
      unseeded.push_back(u);
    }
  }
  if (unseeded.empty()) return out;
  if (n_labels == 1) {
    for (int u : unseeded) at(u, 1) = 1.0;
    return out;
  }

  const std::size_t m = unseeded.size();
  std::vector<double> diag(m);
  for (std::size_t i = 0; i < m; ++i) diag[i] = graph.degree(unseeded[i]);
  auto apply = [&](std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = diag[i] * x[i];
      for (const auto& nb : graph.neighbors(unseeded[i])) {
        if (const int j = local[nb.node]; j >= 0) acc -= nb.weight * x[j];
      }
      y[i] = acc;
    }
  };
  const int max_iter = config.cg_max_iter > 0 ? config.cg_max_iter : static_cast<int>(50 * m);

  std::vector<double> b(m), x(m);
  for (int label = 1; label < n_labels; ++label) {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (const auto& nb : graph.neighbors(unseeded[i])) {
        if (seed_label[nb.node] == label) acc += nb.weight;
      }
      b[i] = acc;
    }
    std::fill(x.begin(), x.end(), 0.0);
    const CgResult cg = conjugate_gradient(apply, diag, b, x, config, max_iter);
    out.iterations += cg.iterations;
    out.residual = std::max(out.residual, cg.residual);
    if (!cg.converged) {
      throw SolverError(fmt::format("random walker: CG stopped after {} iterations at scaled residual {:.3g}",
                                    cg.iterations, cg.residual),
                        cg.residual);
    }
    for (std::size_t i = 0; i < m; ++i) at(unseeded[i], label) = x[i];
  }
  for (int u : unseeded) {
    double rest = 1.0;
    for (int label = 1; label < n_labels; ++label) rest -= at(u, label);
    at(u, n_labels) = rest;
  }
  return out;
}

Segmentation segment(const LatticeGraph& graph, std::span<const Seed> seeds, const RWConfig& config) {
  Segmentation out;
  out.probabilities = solve_probabilities(graph, seeds, config);
  const Probabilities& pr = out.probabilities;
  out.labels.assign(graph.size(), 1);
  for (std::size_t u = 0; u < graph.size(); ++u) {
    int best = 1;
    for (int l = 2; l <= pr.labels; ++l) {
      if (pr.value(static_cast<int>(u), l) > pr.value(static_cast<int>(u), best)) best = l;
    }
    out.labels[u] = best;
  }
  for (const Seed& s : seeds) out.labels[graph.index_of(s.pixel)] = s.label;
  return out;
}

std::string to_string(ResegFailure failure) {
  switch (failure) {
    case ResegFailure::None: return "none";
    case ResegFailure::SeedClash: return "seed_clash";
    case ResegFailure::EmptySegment: return "empty_segment";
    case ResegFailure::SolverFailed: return "solver_failed";
  }
  return "unknown";
}

namespace {

// Merges every fragment that does not hold its label's seed into the
// neighbouring label with the longest shared border (ties: lower label).
void merge_orphan_fragments(const LatticeGraph& graph, std::span<const Seed> seeds, std::vector<int>& labels) {
  const int n = static_cast<int>(graph.size());
  int n_labels = 0;
  for (const Seed& s : seeds) n_labels = std::max(n_labels, s.label);
  std::vector<bool> holds_seed;
  std::vector<int> fragment(graph.size());
  for (;;) {
    std::fill(fragment.begin(), fragment.end(), -1);
    holds_seed.clear();
    for (int start = 0; start < n; ++start) {
      if (fragment[start] >= 0) continue;
      const int id = static_cast<int>(holds_seed.size());
      holds_seed.push_back(false);
      std::deque<int> queue{start};
      fragment[start] = id;
      while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        for (const auto& nb : graph.neighbors(u)) {
          if (fragment[nb.node] < 0 && labels[nb.node] == labels[start]) {
            fragment[nb.node] = id;
            queue.push_back(nb.node);
          }
        }
      }
    }
    for (const Seed& s : seeds) holds_seed[fragment[graph.index_of(s.pixel)]] = true;

    int orphan = -1;
    for (int u = 0; u < n && orphan < 0; ++u) {
      if (!holds_seed[fragment[u]]) orphan = fragment[u];
    }
    if (orphan < 0) return;

    std::vector<int> border(static_cast<std::size_t>(n_labels) + 1, 0);
    for (int u = 0; u < n; ++u) {
      if (fragment[u] != orphan) continue;
      for (const auto& nb : graph.neighbors(u)) {
        if (fragment[nb.node] != orphan) ++border[labels[nb.node]];
      }
    }
    int target = 0;
    for (int l = 1; l <= n_labels; ++l) {
      if (border[l] > 0 && (target == 0 || border[l] > border[target])) target = l;
    }
    // An isolated orphan would be its own graph component; nothing to join.
    if (target == 0) return;
    for (int u = 0; u < n; ++u) {
      if (fragment[u] == orphan) labels[u] = target;
    }
  }
}

}  // namespace

ResegResult reseg_cell(const Frame& frame, const Cell& lump, std::span<const Point2> prev_centroids,
                       Point2 displacement, const RWConfig& config) {
  if (prev_centroids.size() < 2) throw std::invalid_argument("reseg_cell: need at least two centroids");
  ResegResult out;
  for (const Point2& c : prev_centroids) {
    Pixel q = nearest_pixel({c.row + displacement.row, c.col + displacement.col});
    if (!lump.contains(q)) {
      Pixel best = lump.pixels.front();
      for (const Pixel& p : lump.pixels) {
        if (squared_distance(p, q) < squared_distance(best, q)) best = p;
      }
      q = best;
    }
    if (std::find(out.seeds.begin(), out.seeds.end(), q) != out.seeds.end()) {
      out.failure = ResegFailure::SeedClash;
      out.seeds.push_back(q);
      return out;
    }
    out.seeds.push_back(q);
  }

  std::vector<Seed> seeds;
  for (std::size_t k = 0; k < out.seeds.size(); ++k) seeds.push_back({out.seeds[k], static_cast<int>(k) + 1});

  const LatticeGraph graph = build_lattice(frame, lump.pixels, config);
  Segmentation seg;
  try {
    seg = segment(graph, seeds, config);
  } catch (const SolverError&) {
    out.failure = ResegFailure::SolverFailed;
    return out;
  }
  out.unreached_nodes = !seg.probabilities.unreached.empty();
  merge_orphan_fragments(graph, seeds, seg.labels);

  std::vector<std::vector<Pixel>> parts(seeds.size());
  for (std::size_t u = 0; u < graph.size(); ++u) parts[seg.labels[u] - 1].push_back(graph.nodes()[u]);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (parts[k].empty()) {
      out.failure = ResegFailure::EmptySegment;
      out.segments.clear();
      return out;
    }
    out.segments.push_back(Cell::from_pixels(static_cast<int>(k) + 1, std::move(parts[k])));
  }
  return out;
}

Frame probability_heatmap(const LatticeGraph& graph, const Probabilities& probs, int label, int width, int height) {
  Frame out(1, width, height);
  for (std::size_t u = 0; u < graph.size(); ++u) {
    const Pixel p = graph.nodes()[u];
    const double v = std::clamp(probs.value(static_cast<int>(u), label), 0.0, 1.0);
    out.at(p.row, p.col) = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return out;
}

}  // namespace lineage::rwalker
