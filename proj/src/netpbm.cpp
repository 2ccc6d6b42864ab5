#include "lineage/netpbm.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace lineage {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view magic() {
    if (bytes_.size() < 2) throw FormatError("netpbm: truncated header");
    pos_ = 2;
    return bytes_.substr(0, 2);
  }

  // Skips whitespace and '#' comments, then parses a decimal field.
  long field(const char* what) {
    for (;;) {
      while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
      if (pos_ < bytes_.size() && bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
        continue;
      }
      break;
    }
    if (pos_ >= bytes_.size() || !std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError(std::string("netpbm: missing ") + what);
    }
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1L << 30) throw FormatError(std::string("netpbm: ") + what + " out of range");
      ++pos_;
    }
    return v;
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::string_view raster() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError("netpbm: missing separator before raster");
    }
    return bytes_.substr(pos_ + 1);
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string header(const char* magic, int width, int height, int maxval) {
  char buf[64];
  const int n = std::snprintf(buf, sizeof buf, "%s\n%d %d\n%d\n", magic, width, height, maxval);
  return std::string(buf, static_cast<std::size_t>(n));
}

}  // namespace

GrayImage decode_pgm(std::string_view bytes) {
  HeaderReader in(bytes);
  if (in.magic() != "P5") throw FormatError("pgm: expected P5 magic");
  GrayImage img;
  img.width = static_cast<int>(in.field("width"));
  img.height = static_cast<int>(in.field("height"));
  img.maxval = static_cast<int>(in.field("maxval"));
  if (img.width <= 0 || img.height <= 0) throw FormatError("pgm: dimensions must be positive");
  if (img.maxval <= 0 || img.maxval > 65535) throw FormatError("pgm: maxval out of range");
  const std::string_view raster = in.raster();
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  const std::size_t bps = img.maxval > 255 ? 2 : 1;
  if (raster.size() < n * bps) throw FormatError("pgm: truncated raster");
  img.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (bps == 1) {
      img.samples[i] = static_cast<unsigned char>(raster[i]);
    } else {
      img.samples[i] = static_cast<std::uint16_t>((static_cast<unsigned char>(raster[2 * i]) << 8) |
                                                  static_cast<unsigned char>(raster[2 * i + 1]));
    }
    if (img.samples[i] > img.maxval) throw FormatError("pgm: sample exceeds maxval");
  }
  return img;
}

std::string encode_pgm(const GrayImage& img) {
  std::string out = header("P5", img.width, img.height, img.maxval);
  const bool wide = img.maxval > 255;
  out.reserve(out.size() + img.samples.size() * (wide ? 2 : 1));
  for (std::uint16_t s : img.samples) {
    if (wide) out.push_back(static_cast<char>(s >> 8));
    out.push_back(static_cast<char>(s & 0xff));
  }
  return out;
}

Frame frame_from_pgm(std::string_view bytes, int index) {
  GrayImage img = decode_pgm(bytes);
  if (img.maxval != 255) throw FormatError("frame pgm: expected maxval 255, got " + std::to_string(img.maxval));
  std::vector<std::uint8_t> px(img.samples.begin(), img.samples.end());
  return Frame(index, img.width, img.height, std::move(px));
}

std::string frame_to_pgm(const Frame& frame) {
  GrayImage img{frame.width, frame.height, 255, std::vector<std::uint16_t>(frame.pixels.begin(), frame.pixels.end())};
  return encode_pgm(img);
}

LabelMask mask_from_pgm(std::string_view bytes) {
  GrayImage img = decode_pgm(bytes);
  if (img.maxval != 65535) throw FormatError("mask pgm: expected maxval 65535, got " + std::to_string(img.maxval));
  LabelMask mask(img.width, img.height);
  std::copy(img.samples.begin(), img.samples.end(), mask.labels.begin());
  return mask;
}

std::string mask_to_pgm(const LabelMask& mask) {
  GrayImage img{mask.width, mask.height, 65535, {}};
  img.samples.reserve(mask.labels.size());
  for (std::uint32_t l : mask.labels) {
    if (l > 65535) throw FormatError("mask pgm: label " + std::to_string(l) + " exceeds 16 bits");
    img.samples.push_back(static_cast<std::uint16_t>(l));
  }
  return encode_pgm(img);
}

std::string encode_ppm(const RgbImage& image) {
  std::string out = header("P6", image.width, image.height, 255);
  out.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
  return out;
}

RgbImage decode_ppm(std::string_view bytes) {
  HeaderReader in(bytes);
  if (in.magic() != "P6") throw FormatError("ppm: expected P6 magic");
  const int w = static_cast<int>(in.field("width"));
  const int h = static_cast<int>(in.field("height"));
  if (in.field("maxval") != 255) throw FormatError("ppm: expected maxval 255");
  if (w <= 0 || h <= 0) throw FormatError("ppm: dimensions must be positive");
  const std::string_view raster = in.raster();
  RgbImage img(w, h);
  if (raster.size() < img.rgb.size()) throw FormatError("ppm: truncated raster");
  std::copy_n(raster.begin(), img.rgb.size(), reinterpret_cast<char*>(img.rgb.data()));
  return img;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string frame_filename(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%03d.pgm", t);
  return buf;
}

std::string mask_filename(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "mask%03d.pgm", t);
  return buf;
}

}  // namespace lineage
