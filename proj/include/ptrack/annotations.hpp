#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptrack/grid.hpp"
#include "ptrack/metrics.hpp"

namespace ptrack {

/// Ground truth for one track, points in source pixels.
struct TrackAnnotation {
  std::vector<Point2D> points;
  std::vector<bool> visible;
};

struct VideoAnnotation {
  std::string id;
  int height = 0;  // source pixels
  int width = 0;
  int num_frames = 0;
  std::vector<TrackAnnotation> tracks;
};

struct AnnotationSet {
  std::vector<VideoAnnotation> videos;

  /// Shapes consistent and at least one visible frame per track.
  void validate() const;
  const VideoAnnotation* find(const std::string& id) const;
};

struct TrackPrediction {
  int query_frame = 0;
  std::vector<Point2D> points;  // source pixels
  std::vector<bool> visible;
  std::optional<std::vector<double>> occlusion_prob;
};

struct VideoPrediction {
  std::string id;
  int height = 0;
  int width = 0;
  std::vector<TrackPrediction> tracks;
};

struct PredictionSet {
  bool zero_shot = false;
  std::vector<VideoPrediction> videos;
};

nlohmann::json to_json(const AnnotationSet& set);
AnnotationSet annotations_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PredictionSet& set);
PredictionSet predictions_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MetricsReport& report, Pooling pooling);

void write_annotations(const std::filesystem::path& path, const AnnotationSet& set);
AnnotationSet read_annotations(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, const PredictionSet& set);
PredictionSet read_predictions(const std::filesystem::path& path);

/// Parses a JSON document; syntax errors become CorruptFile with the byte
/// offset, a missing file FileNotFound.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

/// Queried-first evaluation: each track's query is its first gt-visible frame,
/// predictions are matched to annotations by video id and track order, and
/// all coordinates are mapped to the 256x256 evaluation frame.
MetricsReport evaluate_queried_first(const AnnotationSet& annotations,
                                     const PredictionSet& predictions,
                                     const MetricOptions& options = {});

}  // namespace ptrack
