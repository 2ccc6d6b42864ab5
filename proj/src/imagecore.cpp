#include "lineage/imagecore.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

namespace lineage {

BBox BBox::clipped(int height, int width) const {
  return {std::max(top, 0), std::max(left, 0), std::min(bottom, height - 1), std::min(right, width - 1)};
}

Frame::Frame(int index, int width, int height)
    : index(index), width(width), height(height), pixels(static_cast<std::size_t>(width) * height, 0) {}

Frame::Frame(int index, int width, int height, std::vector<std::uint8_t> pixels)
    : index(index), width(width), height(height), pixels(std::move(pixels)) {
  if (this->pixels.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("frame " + std::to_string(index) + ": pixel count does not match " +
                                std::to_string(width) + "x" + std::to_string(height));
  }
}

std::vector<double> Frame::normalized() const {
  std::vector<double> out(pixels.size());
  std::transform(pixels.begin(), pixels.end(), out.begin(), [](std::uint8_t v) { return v / 255.0; });
  return out;
}

void Sequence::validate() const {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame& f = frames[i];
    const std::string name = "frame " + std::to_string(i + 1);
    if (f.index != static_cast<int>(i) + 1) {
      throw std::invalid_argument(name + ": index " + std::to_string(f.index) + " out of sequence");
    }
    if (f.width <= 0 || f.height <= 0 || f.pixels.size() != static_cast<std::size_t>(f.width) * f.height) {
      throw std::invalid_argument(name + ": invalid dimensions");
    }
    if (f.width != frames.front().width || f.height != frames.front().height) {
      throw std::invalid_argument(name + ": dimensions differ from frame 1");
    }
  }
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

std::uint32_t LabelMask::max_label() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
}

std::size_t LabelMask::foreground_count() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](std::uint32_t v) { return v != 0; }));
}

Point2 centroid(std::span<const Pixel> pixels) {
  if (pixels.empty()) throw std::invalid_argument("centroid of an empty pixel set");
  double r = 0.0, c = 0.0;
  for (const Pixel& p : pixels) {
    r += p.row;
    c += p.col;
  }
  const auto n = static_cast<double>(pixels.size());
  return {r / n, c / n};
}

Pixel nearest_pixel(Point2 p) {
  return {static_cast<int>(std::floor(p.row + 0.5)), static_cast<int>(std::floor(p.col + 0.5))};
}

Cell Cell::from_pixels(int id, std::vector<Pixel> pixels) {
  if (pixels.empty()) throw std::invalid_argument("cell " + std::to_string(id) + " has no pixels");
  std::sort(pixels.begin(), pixels.end());
  Cell cell;
  cell.id = id;
  cell.bbox = {pixels.front().row, pixels.front().col, pixels.front().row, pixels.front().col};
  for (const Pixel& p : pixels) {
    cell.bbox.top = std::min(cell.bbox.top, p.row);
    cell.bbox.bottom = std::max(cell.bbox.bottom, p.row);
    cell.bbox.left = std::min(cell.bbox.left, p.col);
    cell.bbox.right = std::max(cell.bbox.right, p.col);
  }
  cell.centroid = lineage::centroid(pixels);
  cell.pixels = std::move(pixels);
  return cell;
}

bool Cell::contains(Pixel p) const {
  return bbox.contains(p) && std::binary_search(pixels.begin(), pixels.end(), p);
}

namespace {

// Flood fill over pixels sharing a key; key 0 is background.
template <class KeyFn>
Components label_regions(int width, int height, Connectivity connectivity, KeyFn key) {
  static constexpr std::array<Pixel, 8> kOffsets{{{-1, 0}, {0, -1}, {0, 1}, {1, 0}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1}}};
  const int n_offsets = connectivity == Connectivity::Four ? 4 : 8;

  Components out{LabelMask(width, height), {}};
  std::vector<Pixel> stack;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const auto k = key(r, c);
      if (k == 0 || out.mask.at(r, c) != 0) continue;
      const int id = static_cast<int>(out.cells.size()) + 1;
      std::vector<Pixel> region;
      stack.assign(1, {r, c});
      out.mask.at(r, c) = static_cast<std::uint32_t>(id);
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        region.push_back(p);
        for (int i = 0; i < n_offsets; ++i) {
          const int nr = p.row + kOffsets[i].row;
          const int nc = p.col + kOffsets[i].col;
          if (nr < 0 || nr >= height || nc < 0 || nc >= width) continue;
          if (out.mask.at(nr, nc) != 0 || key(nr, nc) != k) continue;
          out.mask.at(nr, nc) = static_cast<std::uint32_t>(id);
          stack.push_back({nr, nc});
        }
      }
      out.cells.push_back(Cell::from_pixels(id, std::move(region)));
    }
  }
  return out;
}

}  // namespace

Components connected_components(const BinaryMask& mask, Connectivity connectivity) {
  return label_regions(mask.width, mask.height, connectivity,
                       [&](int r, int c) { return static_cast<std::uint32_t>(mask.at(r, c)); });
}

Components label_components(const LabelMask& mask, Connectivity connectivity) {
  return label_regions(mask.width, mask.height, connectivity, [&](int r, int c) { return mask.at(r, c); });
}

std::vector<Cell> cells_by_label(const LabelMask& mask) {
  std::map<std::uint32_t, std::vector<Pixel>> regions;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (const auto l = mask.at(r, c); l != 0) regions[l].push_back({r, c});
    }
  }
  std::vector<Cell> cells;
  cells.reserve(regions.size());
  for (auto& [label, pixels] : regions) cells.push_back(Cell::from_pixels(static_cast<int>(label), std::move(pixels)));
  return cells;
}

LabelMask resize_nearest(const LabelMask& mask, int target_width, int target_height) {
  if (target_width <= 0 || target_height <= 0) throw std::invalid_argument("resize target must be positive");
  if (target_width == mask.width && target_height == mask.height) return mask;
  LabelMask out(target_width, target_height);
  const double sy = static_cast<double>(mask.height) / target_height;
  const double sx = static_cast<double>(mask.width) / target_width;
  for (int r = 0; r < target_height; ++r) {
    const int sr = std::min(static_cast<int>(std::floor((r + 0.5) * sy)), mask.height - 1);
    for (int c = 0; c < target_width; ++c) {
      const int sc = std::min(static_cast<int>(std::floor((c + 0.5) * sx)), mask.width - 1);
      out.at(r, c) = mask.at(sr, sc);
    }
  }
  return out;
}

int otsu_level(std::span<const std::uint64_t, 256> histogram) {
  double total = 0.0, total_sum = 0.0;
  for (int i = 0; i < 256; ++i) {
    total += static_cast<double>(histogram[i]);
    total_sum += static_cast<double>(histogram[i]) * i;
  }
  int best = -1;
  double best_var = 0.0;
  double n0 = 0.0, s0 = 0.0;
  for (int k = 0; k < 255; ++k) {
    n0 += static_cast<double>(histogram[k]);
    s0 += static_cast<double>(histogram[k]) * k;
    const double n1 = total - n0;
    if (n0 == 0.0 || n1 == 0.0) continue;
    const double diff = total * s0 - n0 * total_sum;
    // Between-class variance up to the constant factor 1 / total^3.
    const double var = diff * diff / (n0 * n1);
    if (best < 0 || var > best_var) {
      best = k;
      best_var = var;
    }
  }
  return best;
}

ThresholdResult threshold_segment(const Frame& frame, ThresholdMethod method) {
  if (frame.pixels.empty()) throw std::invalid_argument("threshold_segment: empty frame");
  ThresholdResult out;
  out.foreground = BinaryMask(frame.width, frame.height);
  if (method.kind == ThresholdMethod::Kind::Fixed) {
    out.level = method.level;
    for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
      out.foreground.data[i] = frame.pixels[i] / 255.0 > method.level ? 1 : 0;
    }
    return out;
  }

  std::array<std::uint64_t, 256> histogram{};
  for (std::uint8_t v : frame.pixels) ++histogram[v];
  const int k = otsu_level(histogram);
  if (k < 0) {
    out.degenerate = true;
    out.level = 1.0;
    return out;
  }
  out.level = k / 255.0;
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) out.foreground.data[i] = frame.pixels[i] > k ? 1 : 0;
  return out;
}

}  // namespace lineage
