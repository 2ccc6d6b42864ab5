#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "lineage/imagecore.hpp"

using namespace lineage;

namespace {

BinaryMask random_mask(std::mt19937& rng, int w, int h, double density) {
  BinaryMask m(w, h);
  std::bernoulli_distribution on(density);
  for (auto& v : m.data) v = on(rng) ? 1 : 0;
  return m;
}

// Reference labeling by repeated label propagation until a fixpoint.
std::vector<int> propagate_labels(const BinaryMask& m, Connectivity conn) {
  std::vector<int> lab(m.data.size(), 0);
  for (std::size_t i = 0; i < lab.size(); ++i) lab[i] = m.data[i] ? static_cast<int>(i) + 1 : 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int r = 0; r < m.height; ++r) {
      for (int c = 0; c < m.width; ++c) {
        int& v = lab[static_cast<std::size_t>(r) * m.width + c];
        if (v == 0) continue;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if ((dr == 0 && dc == 0) || (conn == Connectivity::Four && dr != 0 && dc != 0)) continue;
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= m.height || cc < 0 || cc >= m.width) continue;
            const int u = lab[static_cast<std::size_t>(rr) * m.width + cc];
            if (u != 0 && u < v) {
              v = u;
              changed = true;
            }
          }
        }
      }
    }
  }
  return lab;
}

}  // namespace

TEST_CASE("connected_components on trivial masks") {
  BinaryMask empty(6, 5);
  CHECK(connected_components(empty).cells.empty());

  BinaryMask block(8, 8);
  for (int r = 2; r <= 4; ++r)
    for (int c = 2; c <= 4; ++c) block.set(r, c, true);
  const Components comps = connected_components(block);
  REQUIRE(comps.cells.size() == 1);
  CHECK(comps.cells[0].centroid == Point2{3.0, 3.0});
  CHECK(comps.cells[0].bbox == BBox{2, 2, 4, 4});
}

TEST_CASE("diagonal pixels split under 4-connectivity only") {
  BinaryMask m(4, 4);
  m.set(1, 1, true);
  m.set(2, 2, true);
  CHECK(connected_components(m, Connectivity::Four).cells.size() == 2);
  CHECK(connected_components(m, Connectivity::Eight).cells.size() == 1);
}

TEST_CASE("connected_components agrees with label propagation") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const int w = 3 + trial % 17, h = 2 + trial % 11;
    const BinaryMask m = random_mask(rng, w, h, 0.45);
    for (Connectivity conn : {Connectivity::Four, Connectivity::Eight}) {
      const Components comps = connected_components(m, conn);
      const std::vector<int> ref = propagate_labels(m, conn);
      // Same partition: a bijection between reference roots and labels.
      std::map<int, std::uint32_t> fwd;
      std::map<std::uint32_t, int> back;
      for (std::size_t i = 0; i < ref.size(); ++i) {
        const std::uint32_t l = comps.mask.labels[i];
        REQUIRE((ref[i] == 0) == (l == 0));
        if (l == 0) continue;
        auto [a, ia] = fwd.emplace(ref[i], l);
        auto [b, ib] = back.emplace(l, ref[i]);
        CHECK(a->second == l);
        CHECK(b->second == ref[i]);
      }
      CHECK(fwd.size() == comps.cells.size());
      // Dense labels ordered by first pixel; pixel sets disjoint and covering.
      std::size_t covered = 0;
      for (std::size_t k = 0; k < comps.cells.size(); ++k) {
        const Cell& c = comps.cells[k];
        CHECK(c.id == static_cast<int>(k) + 1);
        if (k > 0) CHECK(comps.cells[k - 1].pixels.front() < c.pixels.front());
        CHECK(c.bbox.contains(c.centroid));
        covered += c.area();
        for (const Pixel& p : c.pixels) CHECK(comps.mask.at(p.row, p.col) == static_cast<std::uint32_t>(c.id));
      }
      CHECK(covered == m.count());
    }
  }
}

TEST_CASE("centroid examples") {
  const std::vector<Pixel> one{{5, 7}};
  CHECK(centroid(one) == Point2{5.0, 7.0});
  const std::vector<Pixel> two{{0, 0}, {0, 2}};
  CHECK(centroid(two) == Point2{0.0, 1.0});
  CHECK_THROWS(centroid(std::span<const Pixel>{}));

  std::mt19937 rng(3);
  std::uniform_int_distribution<int> coord(0, 99);
  std::set<Pixel> blob;
  while (blob.size() < 100) blob.insert({coord(rng), coord(rng)});
  const std::vector<Pixel> pixels(blob.begin(), blob.end());
  double sr = 0, sc = 0;
  for (const Pixel& p : pixels) {
    sr += p.row;
    sc += p.col;
  }
  const Point2 c = centroid(pixels);
  CHECK(c.row == doctest::Approx(sr / 100.0).epsilon(1e-15));
  CHECK(c.col == doctest::Approx(sc / 100.0).epsilon(1e-15));
}

TEST_CASE("Cell::from_pixels sorts and rejects empty input") {
  const Cell c = Cell::from_pixels(4, {{3, 1}, {1, 2}, {2, 2}});
  CHECK(c.pixels.front() == Pixel{1, 2});
  CHECK(c.bbox == BBox{1, 1, 3, 2});
  CHECK(c.contains(Pixel{2, 2}));
  CHECK_FALSE(c.contains(Pixel{2, 1}));
  CHECK_THROWS(Cell::from_pixels(1, {}));
}

TEST_CASE("resize_nearest") {
  LabelMask m(5, 3);
  for (std::size_t i = 0; i < m.labels.size(); ++i) m.labels[i] = static_cast<std::uint32_t>(i % 4);
  CHECK(resize_nearest(m, 5, 3) == m);

  LabelMask one(1, 1);
  one.labels[0] = 3;
  const LabelMask up = resize_nearest(one, 2, 2);
  CHECK(up.labels == std::vector<std::uint32_t>{3, 3, 3, 3});

  LabelMask checker(4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) checker.at(r, c) = static_cast<std::uint32_t>((r + c) % 2 + 1);
  const LabelMask down = resize_nearest(checker, 2, 2);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      // floor((dst + 0.5) * 2) = 2 dst + 1
      CHECK(down.at(r, c) == checker.at(2 * r + 1, 2 * c + 1));
    }
  }
}

TEST_CASE("resize_nearest never grows the label set and commutes with relabeling") {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> lab(0, 6), dim(1, 20);
  for (int trial = 0; trial < 40; ++trial) {
    LabelMask m(dim(rng), dim(rng));
    for (auto& v : m.labels) v = static_cast<std::uint32_t>(lab(rng));
    const int tw = dim(rng), th = dim(rng);
    const LabelMask out = resize_nearest(m, tw, th);
    const std::set<std::uint32_t> src(m.labels.begin(), m.labels.end()), dst(out.labels.begin(), out.labels.end());
    CHECK(std::includes(src.begin(), src.end(), dst.begin(), dst.end()));

    const std::vector<std::uint32_t> perm{0, 4, 6, 1, 3, 2, 5};
    LabelMask permuted = m;
    for (auto& v : permuted.labels) v = perm[v];
    LabelMask out_permuted = out;
    for (auto& v : out_permuted.labels) v = perm[v];
    CHECK(resize_nearest(permuted, tw, th) == out_permuted);
  }
  LabelMask m(3, 3);
  CHECK_THROWS(resize_nearest(m, 0, 2));
}

TEST_CASE("threshold_segment") {
  Frame zero(1, 4, 4);
  CHECK(threshold_segment(zero, ThresholdMethod::fixed(0.5)).foreground.count() == 0);

  Frame dot(1, 5, 5);
  dot.at(2, 3) = 255;
  const BinaryMask fg = threshold_segment(dot, ThresholdMethod::fixed(0.5)).foreground;
  CHECK(fg.count() == 1);
  CHECK(fg.at(2, 3));

  Frame flat(1, 4, 4);
  std::fill(flat.pixels.begin(), flat.pixels.end(), 90);
  const ThresholdResult deg = threshold_segment(flat, ThresholdMethod::otsu());
  CHECK(deg.degenerate);
  CHECK(deg.foreground.count() == 0);
}

TEST_CASE("otsu on a bimodal frame selects the bright half") {
  Frame f(1, 8, 8);
  const auto lo = static_cast<std::uint8_t>(std::lround(0.1 * 255)), hi = static_cast<std::uint8_t>(std::lround(0.9 * 255));
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) f.at(r, c) = c < 4 ? lo : hi;
  const ThresholdResult res = threshold_segment(f, ThresholdMethod::otsu());
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) CHECK(res.foreground.at(r, c) == (c >= 4));
}

TEST_CASE("otsu_level matches an exhaustive variance scan") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::array<std::uint64_t, 256> hist{};
    std::uniform_int_distribution<int> bin(0, 255), count(0, 40);
    const int occupied = 2 + trial % 20;
    for (int k = 0; k < occupied; ++k) hist[static_cast<std::size_t>(bin(rng))] += static_cast<std::uint64_t>(count(rng) + 1);
    // Between-class variance w0 w1 (mu0 - mu1)^2 in long double, lowest k on ties.
    long double total = 0, total_sum = 0;
    for (int k = 0; k < 256; ++k) {
      total += hist[k];
      total_sum += static_cast<long double>(k) * hist[k];
    }
    int best_k = -1;
    long double best = -1;
    long double n0 = 0, s0 = 0;
    for (int k = 0; k < 255; ++k) {
      n0 += hist[k];
      s0 += static_cast<long double>(k) * hist[k];
      const long double n1 = total - n0;
      if (n0 == 0 || n1 == 0) continue;
      const long double d = s0 / n0 - (total_sum - s0) / n1;
      const long double v = n0 * n1 * d * d;
      if (v > best * (1 + 1e-15L)) {
        best = v;
        best_k = k;
      }
    }
    CHECK(otsu_level(hist) == best_k);
  }
}

TEST_CASE("label_components keeps touching labels apart") {
  LabelMask m(4, 1);
  m.labels = {1, 1, 2, 2};
  const Components comps = label_components(m);
  CHECK(comps.cells.size() == 2);
  LabelMask split(3, 1);
  split.labels = {5, 0, 5};
  CHECK(label_components(split).cells.size() == 2);
  CHECK(cells_by_label(split).size() == 1);
}
