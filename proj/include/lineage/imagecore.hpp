#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lineage {

struct Pixel {
  int row = 0;
  int col = 0;

  friend bool operator==(const Pixel&, const Pixel&) = default;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

struct Point2 {
  double row = 0.0;
  double col = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

// Inclusive pixel bounds.
struct BBox {
  int top = 0;
  int left = 0;
  int bottom = -1;
  int right = -1;

  int height() const { return bottom - top + 1; }
  int width() const { return right - left + 1; }
  bool empty() const { return bottom < top || right < left; }
  Point2 center() const { return {(top + bottom) / 2.0, (left + right) / 2.0}; }

  bool contains(Point2 p) const {
    return p.row >= top && p.row <= bottom && p.col >= left && p.col <= right;
  }
  bool contains(Pixel p) const {
    return p.row >= top && p.row <= bottom && p.col >= left && p.col <= right;
  }

  BBox padded(int pad) const { return {top - pad, left - pad, bottom + pad, right + pad}; }
  BBox clipped(int height, int width) const;
  BBox translated(int drow, int dcol) const {
    return {top + drow, left + dcol, bottom + drow, right + dcol};
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

enum class Connectivity { Four = 4, Eight = 8 };

/// One grayscale frame I_t. Intensities are stored 8-bit; `value()` gives the
/// normalized view in [0,1] used by the tracker and the random walker.
struct Frame {
  int index = 1;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Frame() = default;
  Frame(int index, int width, int height);
  Frame(int index, int width, int height, std::vector<std::uint8_t> pixels);

  std::uint8_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  double value(int row, int col) const { return at(row, col) / 255.0; }
  std::vector<double> normalized() const;
  bool in_bounds(int row, int col) const { return row >= 0 && row < height && col >= 0 && col < width; }
};

/// Frames 1..T with shared dimensions.
struct Sequence {
  std::vector<Frame> frames;

  int length() const { return static_cast<int>(frames.size()); }
  const Frame& frame(int t) const { return frames.at(static_cast<std::size_t>(t - 1)); }
  // Throws std::invalid_argument naming the offending frame.
  void validate() const;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int width, int height) : width(width), height(height), data(static_cast<std::size_t>(width) * height, 0) {}

  bool at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col] != 0; }
  void set(int row, int col, bool v) { data[static_cast<std::size_t>(row) * width + col] = v ? 1 : 0; }
  std::size_t count() const;
};

/// 0 = background, k > 0 = cell identity.
struct LabelMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> labels;

  LabelMask() = default;
  LabelMask(int width, int height) : width(width), height(height), labels(static_cast<std::size_t>(width) * height, 0) {}

  std::uint32_t at(int row, int col) const { return labels[static_cast<std::size_t>(row) * width + col]; }
  std::uint32_t& at(int row, int col) { return labels[static_cast<std::size_t>(row) * width + col]; }
  bool in_bounds(int row, int col) const { return row >= 0 && row < height && col >= 0 && col < width; }
  std::uint32_t max_label() const;
  std::size_t foreground_count() const;

  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

/// A detected cell C_t^i: a connected pixel region. Pixels are kept sorted
/// row-major, so the first pixel is the scan-order anchor.
struct Cell {
  int id = 0;
  std::vector<Pixel> pixels;
  Point2 centroid;
  BBox bbox;

  // Builds centroid and bbox from the pixel set; throws on empty input.
  static Cell from_pixels(int id, std::vector<Pixel> pixels);

  bool contains(Pixel p) const;
  std::size_t area() const { return pixels.size(); }
};

Point2 centroid(std::span<const Pixel> pixels);
inline Point2 centroid(const Cell& cell) { return centroid(cell.pixels); }

// Point -> pixel whose unit square [r-0.5, r+0.5) x [c-0.5, c+0.5) holds it.
Pixel nearest_pixel(Point2 p);

struct Components {
  LabelMask mask;
  std::vector<Cell> cells;
};

/// Labels each maximal connected foreground region 1..K in row-major order of
/// its first pixel.
Components connected_components(const BinaryMask& mask, Connectivity connectivity = Connectivity::Four);

/// Same as connected_components, but regions are connected runs of one
/// nonzero label, so touching cells with distinct labels stay distinct.
Components label_components(const LabelMask& mask, Connectivity connectivity = Connectivity::Four);

/// Cells of a mask keyed by the labels already in it (one cell per label,
/// in ascending label order). Disconnected labels keep all their pixels.
std::vector<Cell> cells_by_label(const LabelMask& mask);

/// Nearest-neighbour resize: src = floor((dst + 0.5) * src_dim / dst_dim).
LabelMask resize_nearest(const LabelMask& mask, int target_width, int target_height);

struct ThresholdMethod {
  enum class Kind { Otsu, Fixed } kind = Kind::Otsu;
  double level = 0.5;

  static ThresholdMethod otsu() { return {Kind::Otsu, 0.0}; }
  static ThresholdMethod fixed(double level) { return {Kind::Fixed, level}; }
};

struct ThresholdResult {
  BinaryMask foreground;
  // Chosen level in [0,1]; foreground is value > level.
  double level = 0.0;
  // Otsu on a constant frame: no separating level exists.
  bool degenerate = false;
};

ThresholdResult threshold_segment(const Frame& frame, ThresholdMethod method);

/// Otsu bin k in 0..255 (foreground = intensity > k), or -1 if the histogram
/// has a single occupied bin.
int otsu_level(std::span<const std::uint64_t, 256> histogram);

}  // namespace lineage
