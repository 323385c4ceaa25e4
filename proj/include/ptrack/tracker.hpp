#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ptrack/grid.hpp"

namespace ptrack {

/// T dense feature maps of identical shape (D, H, W) for one video.
struct FeatureVideo {
  std::vector<Grid2D> frames;
  int stride = 1;    // source pixels per feature cell
  int source_h = 0;  // source frame size in pixels
  int source_w = 0;

  int num_frames() const noexcept { return static_cast<int>(frames.size()); }
  int dim() const noexcept { return frames.empty() ? 0 : frames.front().channels(); }
  int height() const noexcept { return frames.empty() ? 0 : frames.front().height(); }
  int width() const noexcept { return frames.empty() ? 0 : frames.front().width(); }

  /// Throws InvalidInput unless T >= 1, all frames share a shape and stride >= 1.
  void validate() const;
};

/// A point prompted at frame `frame`, location `point` (feature-grid units).
struct Query {
  int frame = 0;
  Point2D point;
};

struct Trajectory {
  std::vector<Point2D> points;
  std::vector<bool> visible;
  std::optional<std::vector<double>> occlusion_prob;
};

/// Bilinear sample of frames[query.frame] at query.point.
std::vector<double> extract_query_feature(const FeatureVideo& video, const Query& query);

/// Cosine similarity between `query` and every cell of `frame`. Cells with a
/// zero feature vector get similarity 0.
Grid2D correlation_map(const Grid2D& frame, std::span<const double> query);

/// Gradient of correlation_map. Accumulates dL/dframe into `d_frame` and
/// dL/dquery into `d_query` given dL/dC in `d_map`. Zero-norm cells pass no
/// gradient.
void correlation_map_backward(const Grid2D& frame, std::span<const double> query,
                              const Grid2D& d_map, Grid2D& d_frame, std::span<double> d_query);

std::vector<Grid2D> correlation_volume(const FeatureVideo& video, const Query& query);

/// Per-frame argmax of the correlation volume. Every frame is reported
/// visible and no occlusion probability is produced.
Trajectory zero_shot_track(const FeatureVideo& video, const Query& query);

/// Resamples every frame to new_height x new_width; the stride is rescaled so
/// the source resolution is preserved.
FeatureVideo resize_video(const FeatureVideo& video, int new_height, int new_width);

}  // namespace ptrack
