#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "ptrack/grid.hpp"

namespace ptrack {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Diverging colormap over the fixed range [-1, 1], linear between the stops
///   -1 -> (59, 76, 192)   0 -> (221, 221, 221)   +1 -> (180, 4, 38)
/// so warmer colors mean higher similarity. Values outside are clamped.
Rgb similarity_color(double value);

inline constexpr Rgb kPredictedMarker{0, 200, 0};  // "+" shape
inline constexpr Rgb kTruthMarker{0, 0, 0};        // "x" shape

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Rgb pixel(int x, int y) const;
};

/// Renders a one-channel map with each cell as a scale x scale block
/// (nearest-neighbour). Markers are drawn at (p + 0.5) * scale.
Image render_heatmap(const Grid2D& map, int scale, std::optional<Point2D> predicted = std::nullopt,
                     std::optional<Point2D> truth = std::nullopt);

/// Binary portable pixmap (P6, maxval 255).
void write_ppm(const std::filesystem::path& path, const Image& image);

}  // namespace ptrack
