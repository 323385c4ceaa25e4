// ptrack command-line interface.
#include <CLI11.hpp>

#include <iostream>
#include <map>

#include "ptrack/commands.hpp"

using namespace ptrack;

namespace {

void add_run_options(CLI::App* cmd, RunOptions& run) {
  cmd->add_option("--out", run.out, "Output directory")->required();
  cmd->add_option("--seed", run.seed, "Seed overriding the config");
  cmd->add_flag("--deterministic", run.deterministic, "Fixed-order execution (always on)");
}

const std::map<std::string, Pooling> kPooling{{"frame", Pooling::kFrame}, {"video", Pooling::kVideo}};
const std::map<std::string, JaccardMode> kJaccard{{"strict", JaccardMode::kStrict},
                                                   {"tapvid", JaccardMode::kTapVid}};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-tracking evaluation and adaptation engine"};
  app.require_subcommand(1);

  GenSynthArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Generate a synthetic benchmark");
  add_run_options(gen_cmd, gen.run);
  gen_cmd->add_option("--config", gen.config, "JSON config")->required()->check(CLI::ExistingFile);

  EvalZeroShotArgs zs;
  auto* zs_cmd = app.add_subcommand("eval-zeroshot", "Argmax tracking on feature files");
  add_run_options(zs_cmd, zs.run);
  zs_cmd->add_option("--features", zs.features, "Directory of <id>.fvid files")->required();
  zs_cmd->add_option("--annotations", zs.annotations, "Annotation JSON")->required();
  zs_cmd->add_option("--resolution", zs.resolution, "Resample features to N x N cells");
  zs_cmd->add_option("--pooling", zs.pooling, "frame or video")
      ->transform(CLI::CheckedTransformer(kPooling, CLI::ignore_case));

  TrainProbeArgs tp;
  auto* tp_cmd = app.add_subcommand("train-probe", "Train the probe heads on frozen features");
  add_run_options(tp_cmd, tp.run);
  tp_cmd->add_option("--features", tp.features)->required();
  tp_cmd->add_option("--annotations", tp.annotations)->required();
  tp_cmd->add_option("--val-features", tp.val_features);
  tp_cmd->add_option("--val-annotations", tp.val_annotations);
  tp_cmd->add_option("--config", tp.config, "JSON with optim / loss sections");
  tp_cmd->add_option("--resolution", tp.resolution);

  TrainAdaptArgs ta;
  auto* ta_cmd = app.add_subcommand("train-adapt", "LoRA adaptation of the toy ViT");
  add_run_options(ta_cmd, ta.run);
  ta_cmd->add_option("--features", ta.features, "Directory of image videos")->required();
  ta_cmd->add_option("--annotations", ta.annotations)->required();
  ta_cmd->add_option("--val-features", ta.val_features);
  ta_cmd->add_option("--val-annotations", ta.val_annotations);
  ta_cmd->add_option("--config", ta.config, "JSON with optim / loss / vit / lora sections");
  ta_cmd->add_option("--backbone", ta.backbone, "lora-vit checkpoint for the frozen base");
  ta_cmd->add_option("--rank", ta.rank, "Adapter rank")->check(CLI::IsMember({16, 32, 64}));

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Score predictions against annotations");
  add_run_options(ev_cmd, ev.run);
  ev_cmd->add_option("--predictions", ev.predictions)->required();
  ev_cmd->add_option("--annotations", ev.annotations)->required();
  ev_cmd->add_option("--pooling", ev.pooling)
      ->transform(CLI::CheckedTransformer(kPooling, CLI::ignore_case));
  ev_cmd->add_option("--jaccard", ev.jaccard, "strict or tapvid")
      ->transform(CLI::CheckedTransformer(kJaccard, CLI::ignore_case));

  VizArgs viz;
  auto* viz_cmd = app.add_subcommand("viz", "Export correlation heatmaps as PPM images");
  add_run_options(viz_cmd, viz.run);
  viz_cmd->add_option("--features", viz.features, "FVID file or directory")->required();
  viz_cmd->add_option("--annotations", viz.annotations);
  viz_cmd->add_option("--video", viz.video)->required();
  viz_cmd->add_option("--track", viz.track, "Annotated track, queried-first");
  viz_cmd->add_option("--query", viz.query, "t,x,y in feature-grid units");
  viz_cmd->add_option("--probe", viz.probe, "Probe checkpoint for the predicted marker");
  viz_cmd->add_option("--scale", viz.scale, "Pixels per cell");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  return run_guarded(
      [&] {
        if (*gen_cmd) cmd_gen_synth(gen, std::cout);
        if (*zs_cmd) cmd_eval_zeroshot(zs, std::cout);
        if (*tp_cmd) cmd_train_probe(tp, std::cout);
        if (*ta_cmd) cmd_train_adapt(ta, std::cout);
        if (*ev_cmd) cmd_eval(ev, std::cout);
        if (*viz_cmd) cmd_viz(viz, std::cout);
      },
      std::cerr);
}
