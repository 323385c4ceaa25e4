#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "ptrack/annotations.hpp"
#include "ptrack/lora_vit.hpp"
#include "ptrack/metrics.hpp"
#include "ptrack/optim.hpp"
#include "ptrack/probe.hpp"
#include "ptrack/tracker.hpp"

namespace ptrack {

/// One (video, query) pair in queried-first form, geometry in feature-grid
/// units of the video it belongs to.
struct TrackingSample {
  int video = 0;
  int track = 0;
  int query_frame = 0;
  Point2D query;
  std::vector<Point2D> targets;
  std::vector<bool> visible;
};

/// Samples of one annotated video on a grid_h x grid_w feature grid. Targets
/// use p_grid = p_source * grid / source - 0.5; the query point is clamped
/// into the grid.
std::vector<TrackingSample> make_samples(const VideoAnnotation& annotation, int video_index,
                                         int grid_h, int grid_w);

/// Frozen-feature probing task: one correlation volume per sample.
struct ProbeTask {
  std::vector<TrackingSample> samples;
  std::vector<std::vector<Grid2D>> volumes;
  AnnotationSet annotations;
  std::vector<std::pair<int, int>> grids;  // per video (h, w)
};

/// Matches videos to annotations by position; shapes must agree.
ProbeTask make_probe_task(const std::vector<FeatureVideo>& videos, const AnnotationSet& annotations);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // mean of the step losses
  double point_loss = 0.0;
  double occlusion_loss = 0.0;
  double lr = 0.0;  // at the last step of the epoch
  std::optional<MetricsReport> validation;
};

nlohmann::json to_json(const EpochRecord& record);

/// Invoked after every epoch, e.g. to stream history records.
using EpochCallback = std::function<void(const EpochRecord&)>;

struct ProbeTrainResult {
  ProbeParams params;
  std::vector<EpochRecord> history;
  double initial_loss = 0.0;  // whole training set, before the first step
  double final_loss = 0.0;    // whole training set, after the last step
};

/// Loss of `params` over every non-query frame of every sample.
double probe_task_loss(const ProbeTask& task, const ProbeParams& params,
                       const LossWeights& weights);

/// AdamW on shuffled batches of samples; each sample contributes all of its
/// non-query frames. Initial weights come from probe_init(config.seed) unless
/// `init` is given.
ProbeTrainResult train_probe(const ProbeTask& train, const ProbeTask* validation,
                             const OptimConfig& config, const LossWeights& weights = {},
                             const std::optional<ProbeParams>& init = std::nullopt,
                             const EpochCallback& on_epoch = {});

/// Probe prediction over a correlation volume. The query frame reports the
/// query point as visible.
Trajectory probe_track(const std::vector<Grid2D>& volume, const ProbeParams& params,
                       int query_frame, Point2D query);

PredictionSet probe_predictions(const ProbeTask& task, const ProbeParams& params);
PredictionSet zero_shot_predictions(const ProbeTask& task);

/// Argmax tracking of every annotated track, queried-first.
PredictionSet zero_shot_predictions(const std::vector<FeatureVideo>& videos,
                                    const AnnotationSet& annotations);

/// Converts a feature-grid trajectory to source pixels.
TrackPrediction to_prediction(const Trajectory& trajectory, int query_frame, int source_h,
                              int source_w, int grid_h, int grid_w);

// ---------------------------------------------------------------------------
// Backbone adaptation

struct AdaptedModel {
  LoRAViTParams backbone;
  ProbeParams probe;
};

/// Encodes every frame with the backbone.
FeatureVideo encode_video(const FeatureVideo& images, const LoRAViTParams& backbone);

/// vit_forward per frame, then the correlation and probe pipeline.
Trajectory adapt_forward_track(const FeatureVideo& images, const AdaptedModel& model,
                               const Query& query);

struct AdaptationLoss {
  double loss = 0.0;
  double point_loss = 0.0;
  double occlusion_loss = 0.0;
  std::vector<double> adapter_grad;  // flatten_adapters layout
  ProbeParams probe_grad;
};

/// Loss over the non-query frames of `batch` (indices into `samples`) and its
/// gradient with respect to the adapters and the probe.
AdaptationLoss adaptation_loss_and_grad(const std::vector<FeatureVideo>& images,
                                        const std::vector<TrackingSample>& samples,
                                        std::span<const int> batch, const AdaptedModel& model,
                                        const LossWeights& weights);

struct AdaptTrainResult {
  AdaptedModel model;
  std::vector<EpochRecord> history;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct ImageSplit {
  std::vector<FeatureVideo> images;
  AnnotationSet annotations;
};

/// Co-trains adapters and probe heads with AdamW. Batches hold consecutive
/// samples of a seeded order that shuffles videos and the tracks inside each
/// video, so a batch touches few videos. Base weights are never written.
AdaptTrainResult train_adaptation(const ImageSplit& train, const ImageSplit* validation,
                                  const AdaptedModel& init, const OptimConfig& config,
                                  const LossWeights& weights = {},
                                  const EpochCallback& on_epoch = {});

PredictionSet adapted_predictions(const ImageSplit& split, const AdaptedModel& model);

}  // namespace ptrack
