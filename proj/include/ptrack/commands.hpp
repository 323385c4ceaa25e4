#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ptrack/annotations.hpp"
#include "ptrack/metrics.hpp"
#include "ptrack/tracker.hpp"

namespace ptrack {

namespace fs = std::filesystem;

/// Options shared by every subcommand.
struct RunOptions {
  fs::path out;
  std::optional<std::uint64_t> seed;  // overrides the config seed
  bool deterministic = false;         // execution is always sequential; accepted for scripts
};

struct GenSynthArgs {
  RunOptions run;
  fs::path config;  // {"features": {...}} or {"images": {...}}
};

struct EvalZeroShotArgs {
  RunOptions run;
  fs::path features;     // directory holding <video id>.fvid
  fs::path annotations;
  std::optional<int> resolution;  // resample every frame to N x N cells
  Pooling pooling = Pooling::kFrame;
};

struct TrainProbeArgs {
  RunOptions run;
  fs::path features;
  fs::path annotations;
  std::optional<fs::path> val_features;
  std::optional<fs::path> val_annotations;
  std::optional<fs::path> config;  // {"optim": {...}, "loss": {...}}
  std::optional<int> resolution;
};

struct TrainAdaptArgs {
  RunOptions run;
  fs::path features;  // image videos
  fs::path annotations;
  std::optional<fs::path> val_features;
  std::optional<fs::path> val_annotations;
  std::optional<fs::path> config;  // {"optim", "loss", "vit", "lora", "backbone_seed"}
  std::optional<fs::path> backbone;  // lora-vit checkpoint used as the frozen base
  int rank = 16;
};

struct EvalArgs {
  RunOptions run;
  fs::path predictions;
  fs::path annotations;
  Pooling pooling = Pooling::kFrame;
  JaccardMode jaccard = JaccardMode::kStrict;
};

struct VizArgs {
  RunOptions run;
  fs::path features;
  std::optional<fs::path> annotations;
  std::string video;
  std::optional<int> track;        // queried-first query of this annotated track
  std::optional<std::string> query;  // "t,x,y" in feature-grid units
  std::optional<fs::path> probe;   // probe checkpoint for the predicted marker
  int scale = 8;
};

/// Writes out/manifest.json, out/annotations.json and one FVID file per
/// video under out/features or out/images.
void cmd_gen_synth(const GenSynthArgs& args, std::ostream& log);

/// Writes out/report.json and out/predictions.json.
MetricsReport cmd_eval_zeroshot(const EvalZeroShotArgs& args, std::ostream& log);

/// Writes out/probe.ptck, out/history.jsonl, out/report.json,
/// out/predictions.json and out/summary.json.
MetricsReport cmd_train_probe(const TrainProbeArgs& args, std::ostream& log);

/// Writes out/adapted.ptck, out/history.jsonl, out/report.json,
/// out/predictions.json and out/summary.json.
MetricsReport cmd_train_adapt(const TrainAdaptArgs& args, std::ostream& log);

/// Writes out/report.json.
MetricsReport cmd_eval(const EvalArgs& args, std::ostream& log);

/// Writes out/<video>_frame<NNN>.ppm per frame; returns the file paths.
std::vector<fs::path> cmd_viz(const VizArgs& args, std::ostream& log);

/// Reads <dir>/<id>.fvid for every annotated video, in annotation order.
std::vector<FeatureVideo> load_feature_dir(const fs::path& dir, const AnnotationSet& annotations);

/// 0 success, 1 usage or configuration error, 2 data error, 3 numerical fault.
int exit_code_for(const std::exception& e);

/// Runs `body`, printing a one-line diagnostic on failure; returns the exit code.
int run_guarded(const std::function<void()>& body, std::ostream& err);

}  // namespace ptrack
