#include "ptrack/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ptrack/error.hpp"

namespace ptrack {

namespace {

void check_dims(int channels, int height, int width) {
  if (channels < 1 || height < 1 || width < 1) {
    throw InvalidInput("grid dimensions must be positive, got " + std::to_string(channels) +
                       "x" + std::to_string(height) + "x" + std::to_string(width));
  }
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidInput("softmax temperature must be positive and finite");
  }
}

void check_single_channel(const Grid2D& map, const char* op) {
  if (map.empty()) throw InvalidInput(std::string(op) + ": empty map");
  if (map.channels() != 1) throw InvalidInput(std::string(op) + ": expected one channel");
}

// Axis-wise source coordinate for half-pixel resampling.
struct AxisTap {
  int lo;
  int hi;
  double w;
};

AxisTap resize_tap(int dst, int in, int out) {
  double s = (dst + 0.5) * static_cast<double>(in) / out - 0.5;
  s = std::clamp(s, 0.0, static_cast<double>(in - 1));
  const int lo = static_cast<int>(std::floor(s));
  const int hi = std::min(lo + 1, in - 1);
  return {lo, hi, s - lo};
}

}  // namespace

Grid2D::Grid2D(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  check_dims(channels, height, width);
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

Grid2D::Grid2D(int channels, int height, int width, std::vector<double> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  check_dims(channels, height, width);
  if (data_.size() != static_cast<std::size_t>(channels) * height * width) {
    throw InvalidInput("grid data length " + std::to_string(data_.size()) +
                       " does not match shape");
  }
}

bool Grid2D::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

BilinearTaps bilinear_taps(int height, int width, Point2D p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
    throw InvalidInput("sample coordinates must be finite");
  }
  const double x = std::clamp(p.x, 0.0, static_cast<double>(width - 1));
  const double y = std::clamp(p.y, 0.0, static_cast<double>(height - 1));
  BilinearTaps t;
  t.x0 = static_cast<int>(std::floor(x));
  t.y0 = static_cast<int>(std::floor(y));
  t.x1 = std::min(t.x0 + 1, width - 1);
  t.y1 = std::min(t.y0 + 1, height - 1);
  t.wx = x - t.x0;
  t.wy = y - t.y0;
  return t;
}

std::vector<double> bilinear_sample(const Grid2D& map, Point2D p) {
  if (map.empty()) throw InvalidInput("bilinear_sample: empty map");
  const BilinearTaps t = bilinear_taps(map.height(), map.width(), p);
  std::vector<double> out(map.channels());
  for (int c = 0; c < map.channels(); ++c) {
    const double top = (1.0 - t.wx) * map.at(c, t.y0, t.x0) + t.wx * map.at(c, t.y0, t.x1);
    const double bottom = (1.0 - t.wx) * map.at(c, t.y1, t.x0) + t.wx * map.at(c, t.y1, t.x1);
    out[c] = (1.0 - t.wy) * top + t.wy * bottom;
  }
  return out;
}

void bilinear_sample_backward(Point2D p, std::span<const double> d_values, Grid2D& d_map) {
  if (static_cast<int>(d_values.size()) != d_map.channels()) {
    throw InvalidInput("bilinear_sample_backward: channel mismatch");
  }
  const BilinearTaps t = bilinear_taps(d_map.height(), d_map.width(), p);
  for (int c = 0; c < d_map.channels(); ++c) {
    const double g = d_values[c];
    d_map.at(c, t.y0, t.x0) += (1.0 - t.wy) * (1.0 - t.wx) * g;
    d_map.at(c, t.y0, t.x1) += (1.0 - t.wy) * t.wx * g;
    d_map.at(c, t.y1, t.x0) += t.wy * (1.0 - t.wx) * g;
    d_map.at(c, t.y1, t.x1) += t.wy * t.wx * g;
  }
}

Point2D argmax2d(const Grid2D& map) {
  check_single_channel(map, "argmax2d");
  const auto values = map.plane(0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::isnan(values[i])) throw InvalidInput("argmax2d: NaN in map");
    if (values[i] > values[best]) best = i;
  }
  return {static_cast<double>(best % map.width()), static_cast<double>(best / map.width())};
}

Grid2D softmax2d(const Grid2D& map, double temperature) {
  check_temperature(temperature);
  if (map.empty()) throw InvalidInput("softmax2d: empty map");
  Grid2D out(map.channels(), map.height(), map.width());
  for (int c = 0; c < map.channels(); ++c) {
    const auto in = map.plane(c);
    auto dst = out.plane(c);
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      dst[i] = std::exp((in[i] - peak) / temperature);
      total += dst[i];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

Point2D soft_argmax2d(const Grid2D& map, double temperature) {
  check_single_channel(map, "soft_argmax2d");
  const Grid2D prob = softmax2d(map, temperature);
  double ex = 0.0;
  double ey = 0.0;
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const double p = prob.at(0, y, x);
      ex += p * x;
      ey += p * y;
    }
  }
  return {std::clamp(ex, 0.0, map.width() - 1.0), std::clamp(ey, 0.0, map.height() - 1.0)};
}

Grid2D resize_bilinear(const Grid2D& map, int new_height, int new_width) {
  if (new_height < 1 || new_width < 1) throw InvalidInput("resize_bilinear: zero target size");
  if (map.empty()) throw InvalidInput("resize_bilinear: empty map");
  if (new_height == map.height() && new_width == map.width()) return map;

  std::vector<AxisTap> rows(new_height);
  std::vector<AxisTap> cols(new_width);
  for (int i = 0; i < new_height; ++i) rows[i] = resize_tap(i, map.height(), new_height);
  for (int j = 0; j < new_width; ++j) cols[j] = resize_tap(j, map.width(), new_width);

  Grid2D out(map.channels(), new_height, new_width);
  for (int c = 0; c < map.channels(); ++c) {
    for (int i = 0; i < new_height; ++i) {
      const AxisTap& r = rows[i];
      for (int j = 0; j < new_width; ++j) {
        const AxisTap& k = cols[j];
        const double top = (1.0 - k.w) * map.at(c, r.lo, k.lo) + k.w * map.at(c, r.lo, k.hi);
        const double bottom = (1.0 - k.w) * map.at(c, r.hi, k.lo) + k.w * map.at(c, r.hi, k.hi);
        out.at(c, i, j) = (1.0 - r.w) * top + r.w * bottom;
      }
    }
  }
  return out;
}

}  // namespace ptrack
