#include "lineage/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "lineage/errors.hpp"
#include "lineage/netpbm.hpp"
#include "lineage/simd/kernels.hpp"

namespace lineage {

namespace {

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

TrackerPrediction invalid_prediction(const Cell& cell, Direction direction, BBox region, double score) {
  return {cell.id, direction, region, score, false};
}

}  // namespace

double ncc_score(std::span<const double> templ, std::span<const double> candidate) {
  if (templ.size() != candidate.size()) throw std::invalid_argument("ncc_score: patch sizes differ");
  if (templ.empty()) return 0.0;
  const auto n = static_cast<double>(templ.size());
  double mt = 0.0, mc = 0.0;
  for (std::size_t i = 0; i < templ.size(); ++i) {
    mt += templ[i];
    mc += candidate[i];
  }
  mt /= n;
  mc /= n;
  double stc = 0.0, stt = 0.0, scc = 0.0;
  for (std::size_t i = 0; i < templ.size(); ++i) {
    const double a = templ[i] - mt;
    const double b = candidate[i] - mc;
    stc += a * b;
    stt += a * a;
    scc += b * b;
  }
  if (stt == 0.0 || scc == 0.0) return 0.0;
  return std::clamp(stc / std::sqrt(stt * scc), -1.0, 1.0);
}

BBox template_bbox(const Cell& cell, int pad, int height, int width) {
  return cell.bbox.padded(pad).clipped(height, width);
}

BBox search_window(const BBox& templ, int search_size, int height, int width) {
  const int top = templ.top + floor_div(templ.height() - search_size, 2);
  const int left = templ.left + floor_div(templ.width() - search_size, 2);
  return BBox{top, left, top + search_size - 1, left + search_size - 1}.clipped(height, width);
}

TrackerPrediction NccTracker::predict(const Frame& src, const Frame& dst, const Cell& cell,
                                      Direction direction) const {
  if (src.width != dst.width || src.height != dst.height) {
    throw std::invalid_argument("tracker: frames " + std::to_string(src.index) + " and " +
                                std::to_string(dst.index) + " differ in size");
  }
  const BBox tb = template_bbox(cell, config_.template_pad, src.height, src.width);
  if (tb.empty() || tb.height() > config_.search_size || tb.width() > config_.search_size) {
    return invalid_prediction(cell, direction, tb, -1.0);
  }

  const auto th = static_cast<std::size_t>(tb.height());
  const auto tw = static_cast<std::size_t>(tb.width());
  std::vector<std::uint8_t> templ(th * tw);
  for (std::size_t i = 0; i < th; ++i) {
    const std::uint8_t* row = &src.pixels[static_cast<std::size_t>(tb.top + static_cast<int>(i)) * src.width + tb.left];
    std::copy_n(row, tw, templ.begin() + static_cast<std::ptrdiff_t>(i * tw));
  }

  const simd::KernelTable& k = simd::kernels();
  const simd::Moments tm = k.moments_u8(templ.data(), templ.size());
  const auto n = static_cast<std::int64_t>(templ.size());
  const auto st = static_cast<std::int64_t>(tm.sum);
  const std::int64_t den_t = n * static_cast<std::int64_t>(tm.sum_sq) - st * st;
  if (den_t == 0) return invalid_prediction(cell, direction, tb, 0.0);

  const BBox win = search_window(tb, config_.search_size, dst.height, dst.width);
  const int wh = win.height();
  const int ww = win.width();

  // Integral images of the window: sums and squared sums.
  const auto stride = static_cast<std::size_t>(ww + 1);
  std::vector<std::int64_t> isum((wh + 1) * stride, 0), isq((wh + 1) * stride, 0);
  for (int r = 0; r < wh; ++r) {
    std::int64_t rs = 0, rq = 0;
    for (int c = 0; c < ww; ++c) {
      const std::int64_t v = dst.at(win.top + r, win.left + c);
      rs += v;
      rq += v * v;
      isum[(r + 1) * stride + c + 1] = isum[r * stride + c + 1] + rs;
      isq[(r + 1) * stride + c + 1] = isq[r * stride + c + 1] + rq;
    }
  }
  auto rect = [&](const std::vector<std::int64_t>& ii, int r0, int c0) {
    const std::size_t r1 = r0 + th, c1 = c0 + tw;
    return ii[r1 * stride + c1] - ii[r0 * stride + c1] - ii[r1 * stride + c0] + ii[r0 * stride + c0];
  };

  // Cosine window over the displacement from the source placement.
  const double w = config_.window_influence;
  const double half = config_.search_size / 2.0;
  auto hann = [half](int d) { return std::abs(d) >= half ? 0.0 : 0.5 * (1.0 + std::cos(std::numbers::pi * d / half)); };
  std::vector<double> hr(static_cast<std::size_t>(wh)), hc(static_cast<std::size_t>(ww));
  for (int r = 0; r < wh; ++r) hr[static_cast<std::size_t>(r)] = hann(win.top + r - tb.top);
  for (int c = 0; c < ww; ++c) hc[static_cast<std::size_t>(c)] = hann(win.left + c - tb.left);

  double best = -std::numeric_limits<double>::infinity();
  double best_ncc = best;
  int best_r = tb.top, best_c = tb.left;
  for (int r = 0; r + static_cast<int>(th) <= wh; ++r) {
    for (int c = 0; c + static_cast<int>(tw) <= ww; ++c) {
      std::uint64_t cross = 0;
      const std::uint8_t* base = &dst.pixels[static_cast<std::size_t>(win.top + r) * dst.width + win.left + c];
      for (std::size_t i = 0; i < th; ++i) cross += k.dot_u8(&templ[i * tw], base + i * dst.width, tw);
      const std::int64_t sw = rect(isum, r, c);
      const std::int64_t den_w = n * rect(isq, r, c) - sw * sw;
      double score = 0.0;
      if (den_w != 0) {
        const std::int64_t num = n * static_cast<std::int64_t>(cross) - st * sw;
        // Factored so identical patches give exactly 1.
        score = (static_cast<double>(num) / static_cast<double>(den_t)) *
                std::sqrt(static_cast<double>(den_t) / static_cast<double>(den_w));
        score = std::clamp(score, -1.0, 1.0);
      }
      const double ranked = w == 0.0 ? score : (1.0 - w) * score + w * hr[static_cast<std::size_t>(r)] * hc[static_cast<std::size_t>(c)];
      if (ranked > best) {
        best = ranked;
        best_ncc = score;
        best_r = win.top + r;
        best_c = win.left + c;
      }
    }
  }

  TrackerPrediction p;
  p.source_cell_id = cell.id;
  p.direction = direction;
  p.region = tb.translated(best_r - tb.top, best_c - tb.left);
  p.score = best_ncc;
  p.valid = best_ncc >= config_.min_score;
  return p;
}

void ExternalTracker::load(Direction direction, std::string_view text) {
  auto& table = direction == Direction::Forward ? forward_ : backward_;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    int t = 0, id = 0;
    BBox b;
    double score = 0.0;
    std::string extra;
    const std::string where = "prediction line " + std::to_string(line_no);
    if (!(fields >> t >> id >> b.top >> b.left >> b.bottom >> b.right >> score) || (fields >> extra)) {
      throw FormatError(where + ": expected `t cell_id top left bottom right score`");
    }
    if (t < 1 || id < 1) throw FormatError(where + ": frame and cell id are 1-based");
    if (b.top < 0 || b.left < 0 || b.bottom >= height_ || b.right >= width_ || b.empty()) {
      throw FormatError(where + ": region outside the image");
    }
    if (!(score >= -1.0 && score <= 1.0)) throw FormatError(where + ": score outside [-1, 1]");
    if (!table.emplace(Key{t, id}, Entry{b, score}).second) {
      throw FormatError(where + ": duplicate prediction for frame " + std::to_string(t) + " cell " +
                        std::to_string(id));
    }
  }
}

void ExternalTracker::load_file(Direction direction, const std::filesystem::path& path) {
  try {
    load(direction, read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

TrackerPrediction ExternalTracker::predict(const Frame& src, const Frame&, const Cell& cell,
                                           Direction direction) const {
  const auto& table = direction == Direction::Forward ? forward_ : backward_;
  const auto it = table.find(Key{src.index, cell.id});
  if (it == table.end()) return invalid_prediction(cell, direction, cell.bbox, -1.0);
  return {cell.id, direction, it->second.region, it->second.score, it->second.score >= min_score_};
}

std::size_t ExternalTracker::size(Direction direction) const {
  return direction == Direction::Forward ? forward_.size() : backward_.size();
}

PredictionTable predict_all(const Sequence& sequence, std::span<const std::vector<Cell>> cells_by_frame,
                            Direction direction, const Tracker& tracker) {
  const int T = sequence.length();
  if (static_cast<int>(cells_by_frame.size()) != T) {
    throw std::invalid_argument("predict_all: cell lists do not match the sequence length");
  }
  PredictionTable out(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) {
    const int adj = direction == Direction::Forward ? t + 1 : t - 1;
    if (adj < 1 || adj > T) continue;
    auto& preds = out[static_cast<std::size_t>(t - 1)];
    for (const Cell& cell : cells_by_frame[static_cast<std::size_t>(t - 1)]) {
      preds.push_back(tracker.predict(sequence.frame(t), sequence.frame(adj), cell, direction));
    }
  }
  return out;
}

}  // namespace lineage
