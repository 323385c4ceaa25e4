#include "ptrack/commands.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "ptrack/checkpoint.hpp"
#include "ptrack/config.hpp"
#include "ptrack/error.hpp"
#include "ptrack/feature_io.hpp"
#include "ptrack/heatmap.hpp"
#include "ptrack/synth.hpp"
#include "ptrack/training.hpp"

namespace ptrack {

namespace {

using nlohmann::json;

void prepare_out(const RunOptions& run) {
  if (run.out.empty()) throw InvalidConfig("--out is required");
  fs::create_directories(run.out);
}

json load_config(const std::optional<fs::path>& path) {
  if (!path) return json::object();
  json j = read_json_file(*path);
  if (!j.is_object()) throw InvalidConfig(path->string() + ": config must be a JSON object");
  return j;
}

std::vector<FeatureVideo> maybe_resize(std::vector<FeatureVideo> videos, std::optional<int> res) {
  if (!res) return videos;
  if (*res < 1) throw InvalidConfig("--resolution must be >= 1");
  for (FeatureVideo& v : videos) v = resize_video(v, *res, *res);
  return videos;
}

class HistoryWriter {
 public:
  explicit HistoryWriter(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw InvalidInput("cannot open " + path.string() + " for writing");
  }
  void operator()(const EpochRecord& r) { out_ << to_json(r).dump() << '\n' << std::flush; }

 private:
  std::ofstream out_;
};

void write_report(const fs::path& path, const MetricsReport& report, Pooling pooling) {
  write_json_file(path, to_json(report, pooling));
}

}  // namespace

std::vector<FeatureVideo> load_feature_dir(const fs::path& dir, const AnnotationSet& annotations) {
  if (!fs::is_directory(dir)) throw FileNotFound(dir.string() + ": no such directory");
  std::vector<FeatureVideo> videos;
  videos.reserve(annotations.videos.size());
  for (const VideoAnnotation& v : annotations.videos) {
    videos.push_back(read_feature_video(dir / (v.id + ".fvid")));
  }
  return videos;
}

void cmd_gen_synth(const GenSynthArgs& args, std::ostream& log) {
  const json cfg = load_config(args.config);
  StrictObject top(cfg, "gen-synth config");
  const json features = top.object("features");
  const json images = top.object("images");
  top.finish();
  const bool is_images = cfg.contains("images");
  if (is_images == cfg.contains("features")) {
    throw InvalidConfig("gen-synth config needs exactly one of 'features' or 'images'");
  }
  prepare_out(args.run);
  const fs::path data_dir = args.run.out / (is_images ? "images" : "features");
  fs::create_directories(data_dir);

  AnnotationSet annotations;
  json echo;
  int count = 0;
  auto emit = [&](SyntheticVideo&& v) {
    write_feature_video(data_dir / (v.annotation.id + ".fvid"), v.features);
    annotations.videos.push_back(std::move(v.annotation));
  };
  if (is_images) {
    ImageSynthConfig c = image_synth_config_from_json(images);
    if (args.run.seed) c.seed = *args.run.seed;
    echo = {{"images", to_json(c)}};
    count = c.num_videos;
    for (int i = 0; i < c.num_videos; ++i) emit(synth_generate_image_video(c, i));
  } else {
    SyntheticConfig c = synthetic_config_from_json(features);
    if (args.run.seed) c.seed = *args.run.seed;
    echo = {{"features", to_json(c)}};
    count = c.num_videos;
    for (int i = 0; i < c.num_videos; ++i) emit(synth_generate_video(c, i));
  }
  write_annotations(args.run.out / "annotations.json", annotations);
  json ids = json::array();
  for (const auto& v : annotations.videos) ids.push_back(v.id);
  write_json_file(args.run.out / "manifest.json", {{"format", "ptrack-manifest"},
                                                   {"version", 1},
                                                   {"kind", is_images ? "images" : "features"},
                                                   {"data_dir", data_dir.filename().string()},
                                                   {"annotations", "annotations.json"},
                                                   {"videos", ids},
                                                   {"config", echo}});
  log << "wrote " << count << " videos to " << data_dir.string() << '\n';
}

MetricsReport cmd_eval_zeroshot(const EvalZeroShotArgs& args, std::ostream& log) {
  const AnnotationSet annotations = read_annotations(args.annotations);
  if (!fs::is_directory(args.features)) {
    throw FileNotFound(args.features.string() + ": no such directory");
  }
  prepare_out(args.run);
  PredictionSet predictions;
  predictions.zero_shot = true;
  // One video in memory at a time.
  for (const VideoAnnotation& ann : annotations.videos) {
    std::vector<FeatureVideo> one;
    one.push_back(read_feature_video(args.features / (ann.id + ".fvid")));
    one = maybe_resize(std::move(one), args.resolution);
    AnnotationSet single;
    single.videos.push_back(ann);
    PredictionSet p = zero_shot_predictions(one, single);
    predictions.videos.push_back(std::move(p.videos.front()));
  }
  MetricOptions options;
  options.pooling = args.pooling;
  const MetricsReport report = evaluate_queried_first(annotations, predictions, options);
  write_predictions(args.run.out / "predictions.json", predictions);
  write_report(args.run.out / "report.json", report, args.pooling);
  log << format_report_table(report, "zero-shot");
  return report;
}

MetricsReport cmd_train_probe(const TrainProbeArgs& args, std::ostream& log) {
  const json cfg = load_config(args.config);
  StrictObject top(cfg, "train-probe config");
  OptimConfig optim = optim_config_from_json(top.object("optim"), probing_config());
  const LossWeights weights = loss_weights_from_json(top.object("loss"));
  top.finish();
  if (args.run.seed) optim.seed = *args.run.seed;
  if (args.val_features.has_value() != args.val_annotations.has_value()) {
    throw InvalidConfig("--val-features and --val-annotations go together");
  }

  const AnnotationSet train_ann = read_annotations(args.annotations);
  const ProbeTask train = make_probe_task(
      maybe_resize(load_feature_dir(args.features, train_ann), args.resolution), train_ann);
  std::optional<ProbeTask> val;
  if (args.val_features) {
    const AnnotationSet val_ann = read_annotations(*args.val_annotations);
    val = make_probe_task(maybe_resize(load_feature_dir(*args.val_features, val_ann), args.resolution),
                          val_ann);
  }
  prepare_out(args.run);
  HistoryWriter history(args.run.out / "history.jsonl");
  const ProbeTrainResult result =
      train_probe(train, val ? &*val : nullptr, optim, weights, std::nullopt, std::ref(history));
  write_checkpoint(args.run.out / "probe.ptck", result.params);

  const ProbeTask& eval_task = val ? *val : train;
  const PredictionSet predictions = probe_predictions(eval_task, result.params);
  const MetricsReport report = evaluate_queried_first(eval_task.annotations, predictions);
  const MetricsReport zero = evaluate_queried_first(eval_task.annotations, zero_shot_predictions(eval_task));
  write_predictions(args.run.out / "predictions.json", predictions);
  write_report(args.run.out / "report.json", report, Pooling::kFrame);
  write_json_file(args.run.out / "summary.json",
                  {{"split", val ? "validation" : "train"},
                   {"optim", to_json(optim)},
                   {"loss", to_json(weights)},
                   {"parameter_count", result.params.parameter_count()},
                   {"initial_loss", result.initial_loss},
                   {"final_loss", result.final_loss},
                   {"zero_shot", to_json(zero, Pooling::kFrame)},
                   {"probe", to_json(report, Pooling::kFrame)}});
  log << format_report_table(zero, "zero-shot") << format_report_table(report, "probe");
  log << "learnable parameters: " << result.params.parameter_count() << '\n';
  log << "training loss: " << result.initial_loss << " -> " << result.final_loss << '\n';
  return report;
}

MetricsReport cmd_train_adapt(const TrainAdaptArgs& args, std::ostream& log) {
  const json cfg = load_config(args.config);
  StrictObject top(cfg, "train-adapt config");
  OptimConfig optim = optim_config_from_json(top.object("optim"), adaptation_config());
  const LossWeights weights = loss_weights_from_json(top.object("loss"));
  const ViTConfig vit = vit_config_from_json(top.object("vit"));
  json lora_json = top.object("lora");
  std::uint64_t backbone_seed = 0;
  top.read("backbone_seed", backbone_seed);
  top.finish();
  if (lora_json.contains("rank")) throw InvalidConfig("lora.rank is set with --rank");
  if (args.rank != 16 && args.rank != 32 && args.rank != 64) {
    throw InvalidConfig("--rank must be one of 16, 32, 64");
  }
  lora_json["rank"] = args.rank;
  const LoRAConfig lora = lora_config_from_json(lora_json);
  if (args.run.seed) optim.seed = *args.run.seed;
  if (args.val_features.has_value() != args.val_annotations.has_value()) {
    throw InvalidConfig("--val-features and --val-annotations go together");
  }

  AdaptedModel init{lora_vit_init(vit, lora, backbone_seed), probe_init(optim.seed)};
  if (args.backbone) {
    const LoRAViTParams base = read_lora_checkpoint(*args.backbone);
    if (!(base.config == vit)) throw Incompatible("backbone checkpoint shape differs from the vit config");
    init.backbone.assign_base(base.flatten_base());
  }
  // Adapters are drawn from the run seed so ranks and seeds vary independently of the base.
  {
    const LoRAViTParams fresh = lora_vit_init(vit, lora, optim.seed);
    init.backbone.assign_adapters(fresh.flatten_adapters());
  }

  ImageSplit train{{}, read_annotations(args.annotations)};
  train.images = load_feature_dir(args.features, train.annotations);
  std::optional<ImageSplit> val;
  if (args.val_features) {
    val = ImageSplit{{}, read_annotations(*args.val_annotations)};
    val->images = load_feature_dir(*args.val_features, val->annotations);
  }
  prepare_out(args.run);
  HistoryWriter history(args.run.out / "history.jsonl");
  const std::size_t adapters = init.backbone.adapter_parameter_count();
  const std::size_t probe = init.probe.parameter_count();
  log << "learnable parameters: " << adapters + probe << " (adapters " << adapters << ", probe "
      << probe << ")\n";
  const AdaptTrainResult result =
      train_adaptation(train, val ? &*val : nullptr, init, optim, weights, std::ref(history));
  write_checkpoint(args.run.out / "adapted.ptck", result.model);

  const ImageSplit& eval_split = val ? *val : train;
  const PredictionSet predictions = adapted_predictions(eval_split, result.model);
  const MetricsReport report = evaluate_queried_first(eval_split.annotations, predictions);
  write_predictions(args.run.out / "predictions.json", predictions);
  write_report(args.run.out / "report.json", report, Pooling::kFrame);
  write_json_file(args.run.out / "summary.json",
                  {{"split", val ? "validation" : "train"},
                   {"optim", to_json(optim)},
                   {"loss", to_json(weights)},
                   {"vit", to_json(vit)},
                   {"lora", to_json(lora)},
                   {"backbone_seed", backbone_seed},
                   {"adapter_parameter_count", adapters},
                   {"probe_parameter_count", probe},
                   {"learnable_parameter_count", adapters + probe},
                   {"initial_loss", result.initial_loss},
                   {"final_loss", result.final_loss},
                   {"adapted", to_json(report, Pooling::kFrame)}});
  log << format_report_table(report, "rank " + std::to_string(args.rank));
  log << "training loss: " << result.initial_loss << " -> " << result.final_loss << '\n';
  return report;
}

MetricsReport cmd_eval(const EvalArgs& args, std::ostream& log) {
  const AnnotationSet annotations = read_annotations(args.annotations);
  const PredictionSet predictions = read_predictions(args.predictions);
  MetricOptions options;
  options.pooling = args.pooling;
  options.jaccard = args.jaccard;
  const MetricsReport report = evaluate_queried_first(annotations, predictions, options);
  prepare_out(args.run);
  write_report(args.run.out / "report.json", report, args.pooling);
  log << format_report_table(report, predictions.zero_shot ? "zero-shot" : "predictions");
  return report;
}

std::vector<fs::path> cmd_viz(const VizArgs& args, std::ostream& log) {
  if (args.track.has_value() == args.query.has_value()) {
    throw InvalidConfig("give exactly one of --track or --query");
  }
  if (args.track && !args.annotations) throw InvalidConfig("--track needs --annotations");
  if (args.scale < 1) throw InvalidConfig("--scale must be >= 1");
  const fs::path file = fs::is_directory(args.features) ? args.features / (args.video + ".fvid")
                                                        : args.features;
  const FeatureVideo video = read_feature_video(file);

  Query query;
  std::optional<TrackingSample> sample;
  std::optional<VideoAnnotation> ann;
  if (args.annotations) {
    const AnnotationSet set = read_annotations(*args.annotations);
    const VideoAnnotation* found = set.find(args.video);
    if (found == nullptr) throw InvalidInput("video '" + args.video + "' is not annotated");
    ann = *found;
  }
  if (args.track) {
    const auto samples = make_samples(*ann, 0, video.height(), video.width());
    if (*args.track < 0 || *args.track >= static_cast<int>(samples.size())) {
      throw InvalidInput("track " + std::to_string(*args.track) + " out of range");
    }
    sample = samples[*args.track];
    query = {sample->query_frame, sample->query};
  } else {
    std::istringstream in(*args.query);
    char c1 = 0, c2 = 0;
    if (!(in >> query.frame >> c1 >> query.point.x >> c2 >> query.point.y) || c1 != ',' || c2 != ',') {
      throw InvalidConfig("--query expects t,x,y");
    }
  }

  const std::vector<Grid2D> volume = correlation_volume(video, query);
  std::optional<ProbeParams> probe;
  if (args.probe) probe = read_probe_checkpoint(*args.probe);
  prepare_out(args.run);
  std::vector<fs::path> written;
  for (std::size_t t = 0; t < volume.size(); ++t) {
    const Point2D predicted = probe ? probe_forward(volume[t], *probe).point : argmax2d(volume[t]);
    std::optional<Point2D> truth;
    if (sample && sample->visible[t]) truth = sample->targets[t];
    std::ostringstream name;
    name << args.video << "_frame" << std::setw(3) << std::setfill('0') << t << ".ppm";
    const fs::path path = args.run.out / name.str();
    write_ppm(path, render_heatmap(volume[t], args.scale, predicted, truth));
    written.push_back(path);
  }
  log << "wrote " << written.size() << " heatmaps to " << args.run.out.string() << '\n';
  return written;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InvalidConfig*>(&e) != nullptr) return 1;
  if (dynamic_cast<const TrainingFault*>(&e) != nullptr) return 3;
  return 2;
}

int run_guarded(const std::function<void()>& body, std::ostream& err) {
  try {
    body();
    return 0;
  } catch (const FileNotFound& e) {
    err << "error: missing file: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const InvalidConfig& e) {
    err << "error: invalid config: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const TrainingFault& e) {
    err << "error: numerical fault: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const CorruptFile& e) {
    err << "error: corrupt file: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace ptrack
