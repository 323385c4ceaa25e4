#include "ptrack/training.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ptrack/error.hpp"
#include "ptrack/rng.hpp"

namespace ptrack {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348;

long warmup_for(const OptimConfig& config, long steps_per_epoch, long total) {
  const long warmup = config.warmup_steps < 0 ? steps_per_epoch : config.warmup_steps;
  if (warmup > total) {
    throw InvalidConfig("warmup_steps " + std::to_string(warmup) + " exceeds total steps " +
                        std::to_string(total));
  }
  return warmup;
}

void check_pairing(const FeatureVideo& video, const VideoAnnotation& ann) {
  if (ann.num_frames != video.num_frames()) {
    throw InvalidInput("video " + ann.id + ": " + std::to_string(video.num_frames()) +
                       " feature frames, " + std::to_string(ann.num_frames) + " annotated");
  }
  if ((video.source_h != 0 && video.source_h != ann.height) ||
      (video.source_w != 0 && video.source_w != ann.width)) {
    throw InvalidInput("video " + ann.id + ": source resolution differs from annotation");
  }
}

struct Totals {
  double huber = 0.0;
  double bce = 0.0;
  std::size_t visible = 0;
  std::size_t frames = 0;

  double loss(const LossWeights& w) const {
    const double p = visible > 0 ? huber / static_cast<double>(visible) : 0.0;
    const double o = frames > 0 ? bce / static_cast<double>(frames) : 0.0;
    return w.point * p + w.occlusion * o;
  }
};

std::vector<TrackPrediction> predict_video(const ProbeTask& task, std::size_t& cursor, int video,
                                           const std::function<Trajectory(std::size_t)>& track) {
  const VideoAnnotation& ann = task.annotations.videos[video];
  const auto [gh, gw] = task.grids[video];
  std::vector<TrackPrediction> out;
  while (cursor < task.samples.size() && task.samples[cursor].video == video) {
    const TrackingSample& s = task.samples[cursor];
    out.push_back(to_prediction(track(cursor), s.query_frame, ann.height, ann.width, gh, gw));
    ++cursor;
  }
  return out;
}

PredictionSet predict_task(const ProbeTask& task, bool zero_shot,
                           const std::function<Trajectory(std::size_t)>& track) {
  PredictionSet set;
  set.zero_shot = zero_shot;
  std::size_t cursor = 0;
  for (std::size_t v = 0; v < task.annotations.videos.size(); ++v) {
    const VideoAnnotation& ann = task.annotations.videos[v];
    VideoPrediction vp;
    vp.id = ann.id;
    vp.height = ann.height;
    vp.width = ann.width;
    vp.tracks = predict_video(task, cursor, static_cast<int>(v), track);
    set.videos.push_back(std::move(vp));
  }
  return set;
}

ProbeTask encode_task(const ImageSplit& split, const LoRAViTParams& backbone) {
  std::vector<FeatureVideo> features;
  features.reserve(split.images.size());
  for (const FeatureVideo& v : split.images) features.push_back(encode_video(v, backbone));
  return make_probe_task(features, split.annotations);
}

}  // namespace

std::vector<TrackingSample> make_samples(const VideoAnnotation& annotation, int video_index,
                                         int grid_h, int grid_w) {
  std::vector<TrackingSample> out;
  for (std::size_t k = 0; k < annotation.tracks.size(); ++k) {
    const TrackAnnotation& tr = annotation.tracks[k];
    const int qf = first_visible(tr.visible);
    if (qf < 0) {
      throw InvalidInput("video " + annotation.id + " track " + std::to_string(k) +
                         " has no visible frame");
    }
    TrackingSample s;
    s.video = video_index;
    s.track = static_cast<int>(k);
    s.query_frame = qf;
    s.visible = tr.visible;
    s.targets.reserve(tr.points.size());
    for (const Point2D& p : tr.points) {
      s.targets.push_back(source_to_grid(p, annotation.height, annotation.width, grid_h, grid_w));
    }
    s.query = {std::clamp(s.targets[qf].x, 0.0, grid_w - 1.0),
               std::clamp(s.targets[qf].y, 0.0, grid_h - 1.0)};
    out.push_back(std::move(s));
  }
  return out;
}

ProbeTask make_probe_task(const std::vector<FeatureVideo>& videos, const AnnotationSet& annotations) {
  if (videos.size() != annotations.videos.size()) {
    throw InvalidInput(std::to_string(videos.size()) + " feature videos, " +
                       std::to_string(annotations.videos.size()) + " annotated");
  }
  annotations.validate();
  ProbeTask task;
  task.annotations = annotations;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const FeatureVideo& video = videos[v];
    video.validate();
    check_pairing(video, annotations.videos[v]);
    task.grids.emplace_back(video.height(), video.width());
    for (TrackingSample& s :
         make_samples(annotations.videos[v], static_cast<int>(v), video.height(), video.width())) {
      task.volumes.push_back(correlation_volume(video, Query{s.query_frame, s.query}));
      task.samples.push_back(std::move(s));
    }
  }
  return task;
}

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch},
                      {"loss", r.loss},
                      {"point_loss", r.point_loss},
                      {"occlusion_loss", r.occlusion_loss},
                      {"lr", r.lr}};
  j["validation"] = r.validation ? to_json(*r.validation, Pooling::kFrame) : nlohmann::json();
  return j;
}

double probe_task_loss(const ProbeTask& task, const ProbeParams& params,
                       const LossWeights& weights) {
  Totals totals;
  for (std::size_t i = 0; i < task.samples.size(); ++i) {
    const TrackingSample& s = task.samples[i];
    for (std::size_t t = 0; t < s.targets.size(); ++t) {
      if (static_cast<int>(t) == s.query_frame) continue;
      const ProbeOutput out = probe_forward(task.volumes[i][t], params);
      if (s.visible[t]) {
        totals.huber += huber_loss(out.point, s.targets[t], weights.huber_delta);
        ++totals.visible;
      }
      totals.bce += bce_loss(out.occlusion_logit, !s.visible[t]);
      ++totals.frames;
    }
  }
  return totals.loss(weights);
}

ProbeTrainResult train_probe(const ProbeTask& train, const ProbeTask* validation,
                             const OptimConfig& config, const LossWeights& weights,
                             const std::optional<ProbeParams>& init,
                             const EpochCallback& on_epoch) {
  config.validate();
  if (train.samples.empty()) throw InvalidInput("train_probe: empty training set");

  ProbeTrainResult result;
  result.params = init ? *init : probe_init(config.seed);
  const long n = static_cast<long>(train.samples.size());
  const long steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const long total = steps_per_epoch * config.epochs;
  const long warmup = warmup_for(config, steps_per_epoch, total);

  AdamWState state(result.params.parameter_count());
  CounterRng rng(config.seed, kShuffleStream);
  std::vector<int> order(n);
  for (long i = 0; i < n; ++i) order[i] = static_cast<int>(i);

  result.initial_loss = probe_task_loss(train, result.params, weights);
  std::vector<double> flat = result.params.flatten();
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(std::span<int>(order), rng);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    for (long b = 0; b < steps_per_epoch; ++b, ++step) {
      std::vector<ProbeSample> batch;
      const long end = std::min(n, (b + 1) * config.batch_size);
      for (long i = b * config.batch_size; i < end; ++i) {
        const TrackingSample& s = train.samples[order[i]];
        for (std::size_t t = 0; t < s.targets.size(); ++t) {
          if (static_cast<int>(t) == s.query_frame) continue;
          batch.push_back({std::cref(train.volumes[order[i]][t]), s.targets[t], !s.visible[t]});
        }
      }
      if (batch.empty()) continue;
      const ProbeLoss loss = probe_loss_and_grad(batch, result.params, weights);
      const double lr = lr_at(step, warmup, total, config.lr_peak);
      adamw_step(flat, loss.grad.flatten(), state, lr, config);
      result.params.assign(flat);
      rec.loss += loss.loss / steps_per_epoch;
      rec.point_loss += loss.point_loss / steps_per_epoch;
      rec.occlusion_loss += loss.occlusion_loss / steps_per_epoch;
      rec.lr = lr;
    }
    if (validation != nullptr && !validation->samples.empty()) {
      rec.validation =
          evaluate_queried_first(validation->annotations, probe_predictions(*validation, result.params));
    }
    if (on_epoch) on_epoch(rec);
    result.history.push_back(std::move(rec));
  }
  result.final_loss = probe_task_loss(train, result.params, weights);
  return result;
}

Trajectory probe_track(const std::vector<Grid2D>& volume, const ProbeParams& params,
                       int query_frame, Point2D query) {
  Trajectory traj;
  std::vector<double> prob;
  for (std::size_t t = 0; t < volume.size(); ++t) {
    if (static_cast<int>(t) == query_frame) {
      traj.points.push_back(query);
      traj.visible.push_back(true);
      prob.push_back(0.0);
      continue;
    }
    const ProbeOutput out = probe_forward(volume[t], params);
    traj.points.push_back(out.point);
    traj.visible.push_back(out.occlusion_logit <= 0.0);
    prob.push_back(sigmoid(out.occlusion_logit));
  }
  traj.occlusion_prob = std::move(prob);
  return traj;
}

TrackPrediction to_prediction(const Trajectory& trajectory, int query_frame, int source_h,
                              int source_w, int grid_h, int grid_w) {
  TrackPrediction p;
  p.query_frame = query_frame;
  p.visible = trajectory.visible;
  p.occlusion_prob = trajectory.occlusion_prob;
  p.points.reserve(trajectory.points.size());
  for (const Point2D& q : trajectory.points) {
    p.points.push_back(grid_to_source(q, source_h, source_w, grid_h, grid_w));
  }
  return p;
}

PredictionSet probe_predictions(const ProbeTask& task, const ProbeParams& params) {
  return predict_task(task, false, [&](std::size_t i) {
    const TrackingSample& s = task.samples[i];
    return probe_track(task.volumes[i], params, s.query_frame, s.query);
  });
}

PredictionSet zero_shot_predictions(const ProbeTask& task) {
  return predict_task(task, true, [&](std::size_t i) {
    Trajectory traj;
    for (const Grid2D& c : task.volumes[i]) traj.points.push_back(argmax2d(c));
    traj.visible.assign(traj.points.size(), true);
    return traj;
  });
}

PredictionSet zero_shot_predictions(const std::vector<FeatureVideo>& videos,
                                    const AnnotationSet& annotations) {
  if (videos.size() != annotations.videos.size()) {
    throw InvalidInput(std::to_string(videos.size()) + " feature videos, " +
                       std::to_string(annotations.videos.size()) + " annotated");
  }
  PredictionSet set;
  set.zero_shot = true;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const VideoAnnotation& ann = annotations.videos[v];
    check_pairing(videos[v], ann);
    VideoPrediction vp;
    vp.id = ann.id;
    vp.height = ann.height;
    vp.width = ann.width;
    const int gh = videos[v].height();
    const int gw = videos[v].width();
    for (const TrackingSample& s : make_samples(ann, static_cast<int>(v), gh, gw)) {
      const Trajectory traj = zero_shot_track(videos[v], Query{s.query_frame, s.query});
      vp.tracks.push_back(to_prediction(traj, s.query_frame, ann.height, ann.width, gh, gw));
    }
    set.videos.push_back(std::move(vp));
  }
  return set;
}

FeatureVideo encode_video(const FeatureVideo& images, const LoRAViTParams& backbone) {
  images.validate();
  FeatureVideo out;
  out.source_h = images.source_h;
  out.source_w = images.source_w;
  out.frames.reserve(images.frames.size());
  for (const Grid2D& frame : images.frames) out.frames.push_back(vit_forward(frame, backbone));
  out.stride = std::max(1, std::max(images.source_h, images.source_w) / out.width());
  return out;
}

Trajectory adapt_forward_track(const FeatureVideo& images, const AdaptedModel& model,
                               const Query& query) {
  const FeatureVideo features = encode_video(images, model.backbone);
  return probe_track(correlation_volume(features, query), model.probe, query.frame, query.point);
}

AdaptationLoss adaptation_loss_and_grad(const std::vector<FeatureVideo>& images,
                                        const std::vector<TrackingSample>& samples,
                                        std::span<const int> batch, const AdaptedModel& model,
                                        const LossWeights& weights) {
  if (batch.empty()) throw InvalidInput("adaptation_loss_and_grad: empty batch");
  Totals totals;
  for (int i : batch) {
    const TrackingSample& s = samples.at(i);
    for (std::size_t t = 0; t < s.visible.size(); ++t) {
      if (static_cast<int>(t) == s.query_frame) continue;
      totals.visible += s.visible[t] ? 1 : 0;
      ++totals.frames;
    }
  }
  const double n_vis = static_cast<double>(totals.visible);
  const double n_all = static_cast<double>(totals.frames);

  AdaptationLoss result;
  result.adapter_grad.assign(model.backbone.adapter_parameter_count(), 0.0);

  // Videos in order of first appearance in the batch.
  std::vector<int> videos;
  for (int i : batch) {
    if (std::find(videos.begin(), videos.end(), samples[i].video) == videos.end()) {
      videos.push_back(samples[i].video);
    }
  }
  for (int v : videos) {
    const FeatureVideo& video = images.at(v);
    const int frames = video.num_frames();
    std::vector<VitCache> caches(frames);
    std::vector<Grid2D> feats;
    std::vector<Grid2D> d_feats;
    for (int t = 0; t < frames; ++t) {
      feats.push_back(vit_forward(video.frames[t], model.backbone, &caches[t]));
      d_feats.emplace_back(feats.back().channels(), feats.back().height(), feats.back().width());
    }
    ProbeCache pc;
    Grid2D d_corr;
    for (int i : batch) {
      const TrackingSample& s = samples[i];
      if (s.video != v) continue;
      const std::vector<double> q = bilinear_sample(feats[s.query_frame], s.query);
      std::vector<double> dq(q.size(), 0.0);
      for (int t = 0; t < frames; ++t) {
        if (t == s.query_frame) continue;
        const Grid2D corr = correlation_map(feats[t], q);
        const ProbeOutput out = probe_forward(corr, model.probe, &pc);
        Point2D d_point{0.0, 0.0};
        if (s.visible[t]) {
          totals.huber += huber_loss(out.point, s.targets[t], weights.huber_delta);
          const Point2D g = huber_grad(out.point, s.targets[t], weights.huber_delta);
          d_point = {weights.point * g.x / n_vis, weights.point * g.y / n_vis};
        }
        totals.bce += bce_loss(out.occlusion_logit, !s.visible[t]);
        const double d_logit = weights.occlusion * bce_grad(out.occlusion_logit, !s.visible[t]) / n_all;
        probe_backward(pc, model.probe, d_point, d_logit, result.probe_grad, &d_corr);
        correlation_map_backward(feats[t], q, d_corr, d_feats[t], dq);
      }
      bilinear_sample_backward(s.query, dq, d_feats[s.query_frame]);
    }
    for (int t = 0; t < frames; ++t) {
      vit_backward(d_feats[t], model.backbone, caches[t], result.adapter_grad);
    }
  }
  result.point_loss = totals.visible > 0 ? totals.huber / n_vis : 0.0;
  result.occlusion_loss = totals.bce / n_all;
  result.loss = weights.point * result.point_loss + weights.occlusion * result.occlusion_loss;
  return result;
}

AdaptTrainResult train_adaptation(const ImageSplit& train, const ImageSplit* validation,
                                  const AdaptedModel& init, const OptimConfig& config,
                                  const LossWeights& weights, const EpochCallback& on_epoch) {
  config.validate();
  if (train.images.empty()) throw InvalidInput("train_adaptation: empty training set");
  if (train.images.size() != train.annotations.videos.size()) {
    throw InvalidInput("train_adaptation: image and annotation counts differ");
  }
  train.annotations.validate();
  const int grid = init.backbone.config.grid_size();

  std::vector<TrackingSample> samples;
  std::vector<std::vector<int>> by_video(train.images.size());
  for (std::size_t v = 0; v < train.images.size(); ++v) {
    check_pairing(train.images[v], train.annotations.videos[v]);
    for (TrackingSample& s : make_samples(train.annotations.videos[v], static_cast<int>(v), grid, grid)) {
      by_video[v].push_back(static_cast<int>(samples.size()));
      samples.push_back(std::move(s));
    }
  }
  if (samples.empty()) throw InvalidInput("train_adaptation: no tracks");

  AdaptTrainResult result;
  result.model = init;
  const std::size_t n_adapter = init.backbone.adapter_parameter_count();
  std::vector<double> flat = init.backbone.flatten_adapters();
  {
    const std::vector<double> probe = init.probe.flatten();
    flat.insert(flat.end(), probe.begin(), probe.end());
  }
  const long n = static_cast<long>(samples.size());
  const long steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const long total = steps_per_epoch * config.epochs;
  const long warmup = warmup_for(config, steps_per_epoch, total);
  AdamWState state(flat.size());
  CounterRng rng(config.seed, kShuffleStream);
  std::vector<int> video_order(train.images.size());
  for (std::size_t v = 0; v < video_order.size(); ++v) video_order[v] = static_cast<int>(v);

  result.initial_loss = probe_task_loss(encode_task(train, result.model.backbone), result.model.probe, weights);
  std::vector<double> grad(flat.size());
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(std::span<int>(video_order), rng);
    std::vector<int> order;
    order.reserve(n);
    for (int v : video_order) {
      std::vector<int> tracks = by_video[v];
      shuffle(std::span<int>(tracks), rng);
      order.insert(order.end(), tracks.begin(), tracks.end());
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    for (long b = 0; b < steps_per_epoch; ++b, ++step) {
      const long begin = b * config.batch_size;
      const long end = std::min(n, begin + config.batch_size);
      const std::span<const int> batch(order.data() + begin, static_cast<std::size_t>(end - begin));
      const AdaptationLoss loss =
          adaptation_loss_and_grad(train.images, samples, batch, result.model, weights);
      std::copy(loss.adapter_grad.begin(), loss.adapter_grad.end(), grad.begin());
      const std::vector<double> pg = loss.probe_grad.flatten();
      std::copy(pg.begin(), pg.end(), grad.begin() + static_cast<long>(n_adapter));
      const double lr = lr_at(step, warmup, total, config.lr_peak);
      adamw_step(flat, grad, state, lr, config);
      result.model.backbone.assign_adapters(std::span<const double>(flat.data(), n_adapter));
      result.model.probe.assign(std::span<const double>(flat.data() + n_adapter, flat.size() - n_adapter));
      rec.loss += loss.loss / steps_per_epoch;
      rec.point_loss += loss.point_loss / steps_per_epoch;
      rec.occlusion_loss += loss.occlusion_loss / steps_per_epoch;
      rec.lr = lr;
    }
    if (validation != nullptr && !validation->images.empty()) {
      rec.validation = evaluate_queried_first(validation->annotations,
                                              adapted_predictions(*validation, result.model));
    }
    if (on_epoch) on_epoch(rec);
    result.history.push_back(std::move(rec));
  }
  result.final_loss = probe_task_loss(encode_task(train, result.model.backbone), result.model.probe, weights);
  return result;
}

PredictionSet adapted_predictions(const ImageSplit& split, const AdaptedModel& model) {
  return probe_predictions(encode_task(split, model.backbone), model.probe);
}

}  // namespace ptrack
