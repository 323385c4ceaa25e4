#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptrack/grid.hpp"

namespace ptrack {

/// Pixel thresholds of the delta / Jaccard family.
inline constexpr std::array<double, 5> kDefaultThresholds{1.0, 2.0, 4.0, 8.0, 16.0};

/// Side length of the square evaluation frame all coordinates are mapped to.
inline constexpr double kEvalResolution = 256.0;

/// One track, with all coordinates in evaluation pixels.
struct EvalTrack {
  std::vector<Point2D> gt_points;
  std::vector<bool> gt_visible;
  std::vector<Point2D> pred_points;
  std::vector<bool> pred_visible;
  int query_index = 0;
};

struct EvalVideo {
  std::string id;
  std::vector<EvalTrack> tracks;
};

enum class Pooling {
  kFrame,  // every evaluable frame in the dataset weighs the same
  kVideo,  // metric per video, then unweighted mean over videos
};

enum class JaccardMode {
  kStrict,  // FP = gt occluded but predicted visible
  kTapVid,  // additionally counts visible predictions outside the threshold as FP
};

struct MetricOptions {
  std::array<double, 5> thresholds = kDefaultThresholds;
  Pooling pooling = Pooling::kFrame;
  JaccardMode jaccard = JaccardMode::kStrict;
};

struct DeltaResult {
  double average = 0.0;
  std::array<double, 5> per_threshold{};
  std::size_t frames = 0;  // gt-visible, non-query frames
};

/// Fraction of gt-visible, non-query frames with error strictly below each
/// threshold, then averaged over thresholds. Throws UndefinedMetric when no
/// frame is evaluable.
DeltaResult delta_avg(std::span<const EvalTrack> tracks,
                      const std::array<double, 5>& thresholds = kDefaultThresholds);

/// Fraction of non-query frames whose predicted visibility matches.
double occlusion_accuracy(std::span<const EvalTrack> tracks);

/// Threshold-averaged TP / (TP + FP + FN). An empty denominator counts as 1.
double average_jaccard(std::span<const EvalTrack> tracks,
                       const std::array<double, 5>& thresholds = kDefaultThresholds,
                       JaccardMode mode = JaccardMode::kStrict);

struct MetricsReport {
  std::optional<double> aj;
  double delta_avg = 0.0;
  std::optional<double> oa;
  std::array<double, 5> thresholds = kDefaultThresholds;
  std::array<double, 5> deltas{};
  std::size_t videos = 0;
  std::size_t tracks = 0;
  std::size_t frames = 0;  // frames entering delta
};

/// Aggregates a dataset. `zero_shot` reports delta only, since a zero-shot
/// tracker makes no visibility prediction.
MetricsReport evaluate_videos(std::span<const EvalVideo> videos, bool zero_shot,
                              const MetricOptions& options = {});

/// Feature-grid coordinate to evaluation pixels: (p + 0.5) * 256 / grid_size.
Point2D grid_to_eval(Point2D p, int grid_h, int grid_w);
/// Source-pixel coordinate to evaluation pixels: p * 256 / source_size.
Point2D source_to_eval(Point2D p, int source_h, int source_w);
/// Source pixels to feature-grid units: p * grid_size / source_size - 0.5.
Point2D source_to_grid(Point2D p, int source_h, int source_w, int grid_h, int grid_w);
Point2D grid_to_source(Point2D p, int source_h, int source_w, int grid_h, int grid_w);

/// First frame flagged visible, or -1.
int first_visible(const std::vector<bool>& visible);

/// Human table with columns AJ, delta_avg, OA in that order.
std::string format_report_table(const MetricsReport& report, const std::string& label);

}  // namespace ptrack
