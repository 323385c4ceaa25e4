#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ptrack {

/// Continuous location in feature-grid units. Cell (row i, column j) has its
/// center at (x = j, y = i).
struct Point2D {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2D&, const Point2D&) = default;
};

/// Dense (channel, row, column) array. Values are kept in double precision in
/// memory; file payloads are 32-bit (see feature_io.hpp).
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(int channels, int height, int width, double fill = 0.0);
  Grid2D(int channels, int height, int width, std::vector<double> data);

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int c, int y, int x) noexcept { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const noexcept { return data_[index(c, y, x)]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> plane(int c) noexcept {
    return std::span<double>(data_).subspan(c * plane_size(), plane_size());
  }
  std::span<const double> plane(int c) const noexcept {
    return std::span<const double>(data_).subspan(c * plane_size(), plane_size());
  }

  bool same_shape(const Grid2D& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const noexcept;

  friend bool operator==(const Grid2D&, const Grid2D&) = default;

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Four-neighbour interpolation stencil for a clamped sample location.
struct BilinearTaps {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double wx = 0.0;  // weight of column x1
  double wy = 0.0;  // weight of row y1
};

/// Clamps `p` to [0, W-1] x [0, H-1] and returns the stencil around it.
BilinearTaps bilinear_taps(int height, int width, Point2D p);

/// Per-channel bilinear interpolation of the four surrounding cell centers.
/// Out-of-range coordinates are clamped (border replication).
std::vector<double> bilinear_sample(const Grid2D& map, Point2D p);

/// Adjoint of bilinear_sample with respect to the map: scatters `d_values`
/// into `d_map` with the same four weights.
void bilinear_sample_backward(Point2D p, std::span<const double> d_values, Grid2D& d_map);

/// Integer location of the maximum of a one-channel map; ties resolve to the
/// first cell in row-major order.
Point2D argmax2d(const Grid2D& map);

/// Spatial softmax of each channel of map / temperature.
Grid2D softmax2d(const Grid2D& map, double temperature = 1.0);

/// Expected grid coordinate under softmax2d(map, temperature). Full-map, no
/// windowing around the hard maximum.
Point2D soft_argmax2d(const Grid2D& map, double temperature = 1.0);

/// Bilinear resampling with half-pixel centers (align_corners = false):
/// source coordinate s = (d + 0.5) * in / out - 0.5, clamped to [0, in - 1].
Grid2D resize_bilinear(const Grid2D& map, int new_height, int new_width);

}  // namespace ptrack
