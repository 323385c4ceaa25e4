#include "ptrack/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "ptrack/error.hpp"

namespace ptrack {

namespace {

constexpr Rgb kCold{59, 76, 192};
constexpr Rgb kMid{221, 221, 221};
constexpr Rgb kWarm{180, 4, 38};

std::uint8_t lerp(std::uint8_t a, std::uint8_t b, double t) {
  return static_cast<std::uint8_t>(std::lround(a + (static_cast<double>(b) - a) * t));
}

void put(Image& img, int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  const std::size_t i = (static_cast<std::size_t>(y) * img.width + x) * 3;
  img.rgb[i] = c.r;
  img.rgb[i + 1] = c.g;
  img.rgb[i + 2] = c.b;
}

void draw_marker(Image& img, Point2D p, int scale, Rgb color, bool diagonal) {
  const int cx = static_cast<int>(std::floor((p.x + 0.5) * scale));
  const int cy = static_cast<int>(std::floor((p.y + 0.5) * scale));
  const int r = std::max(2, scale / 2);
  for (int k = -r; k <= r; ++k) {
    if (diagonal) {
      put(img, cx + k, cy + k, color);
      put(img, cx + k, cy - k, color);
    } else {
      put(img, cx + k, cy, color);
      put(img, cx, cy + k, color);
    }
  }
}

}  // namespace

Rgb similarity_color(double value) {
  if (std::isnan(value)) throw InvalidInput("similarity_color: NaN");
  const double v = std::clamp(value, -1.0, 1.0);
  const Rgb& a = v < 0 ? kCold : kMid;
  const Rgb& b = v < 0 ? kMid : kWarm;
  const double t = v < 0 ? v + 1.0 : v;
  return {lerp(a.r, b.r, t), lerp(a.g, b.g, t), lerp(a.b, b.b, t)};
}

Rgb Image::pixel(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {rgb.at(i), rgb.at(i + 1), rgb.at(i + 2)};
}

Image render_heatmap(const Grid2D& map, int scale, std::optional<Point2D> predicted,
                     std::optional<Point2D> truth) {
  if (map.empty() || map.channels() != 1) throw InvalidInput("render_heatmap: expected one channel");
  if (scale < 1) throw InvalidInput("render_heatmap: scale must be >= 1");
  Image img;
  img.width = map.width() * scale;
  img.height = map.height() * scale;
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) put(img, x, y, similarity_color(map.at(0, y / scale, x / scale)));
  }
  if (truth) draw_marker(img, *truth, scale, kTruthMarker, true);
  if (predicted) draw_marker(img, *predicted, scale, kPredictedMarker, false);
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw InvalidInput("failed writing " + path.string());
}

}  // namespace ptrack
