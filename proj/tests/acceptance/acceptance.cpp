// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>

#include <unistd.h>

#include "gradcheck.hpp"
#include "ptrack/checkpoint.hpp"
#include "ptrack/commands.hpp"
#include "ptrack/config.hpp"
#include "ptrack/error.hpp"
#include "ptrack/lora_vit.hpp"
#include "ptrack/metrics.hpp"
#include "ptrack/training.hpp"
#include "support.hpp"

using namespace ptrack;
using namespace ptrack::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work;

fs::path work(const std::string& name) { return g_work / name; }

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

fs::path gen(const std::string& name, const std::string& config_json) {
  const fs::path cfg = work(name + ".json");
  write_text(cfg, config_json);
  std::ostringstream sink;
  cmd_gen_synth({{work(name), std::nullopt, true}, cfg}, sink);
  return work(name);
}

// ---------------------------------------------------------------------------

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  double worst_probe = 0.0, worst_vit = 0.0, worst_pipe = 0.0;
  int probe_instances = 0, vit_instances = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const GroupError& e : probe_gradcheck(1000 + seed)) worst_probe = std::max(worst_probe, e.error);
    ++probe_instances;
    for (const GroupError& e : vit_gradcheck(2000 + seed)) worst_vit = std::max(worst_vit, e.error);
    ++vit_instances;
  }
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (const GroupError& e : pipeline_gradcheck(3000 + seed)) worst_pipe = std::max(worst_pipe, e.error);
  }
  const double t = seconds_since(t0);
  const bool pass = probe_instances >= 20 && vit_instances >= 20 && worst_probe <= 1e-4 &&
                    worst_vit <= 1e-4 && worst_pipe <= 1e-4 && t < 120.0;
  return {pass, "max rel err probe " + fmt("%.2e", worst_probe) + ", vit " + fmt("%.2e", worst_vit) +
                    ", end-to-end " + fmt("%.2e", worst_pipe) + " over " +
                    std::to_string(probe_instances) + "+" + std::to_string(vit_instances) +
                    " instances, " + fmt("%.1fs", t)};
}

Outcome lora_identity_merge() {
  CounterRng rng(7);
  ViTConfig cfg = tiny_vit_config();
  cfg.embed_dim = 64;
  cfg.num_heads = 4;
  const Grid2D image = random_grid(3, cfg.input_resolution, cfg.input_resolution, rng);
  bool identity = true;
  double worst = 0.0;
  for (int r : {16, 32, 64}) {
    const LoRAViTParams fresh = lora_vit_init(cfg, {r, double(r)}, 11);
    LoRAViTParams base = fresh;
    for (ViTBlock& b : base.blocks) {
      b.query_lora.a.setZero();
      b.value_lora.a.setZero();
    }
    identity = identity && vit_forward(image, fresh) == vit_forward(image, base);

    const LoRAViTParams adapted = random_adapted_vit(cfg, r, 12 + r);
    const Grid2D a = vit_forward(image, adapted);
    const Grid2D m = vit_forward(image, merge_adapters(adapted));
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - m.data()[i]));
  }
  return {identity && worst <= 1e-6,
          std::string("zero-init output ") + (identity ? "identical" : "differs") +
              ", merged max abs diff " + fmt("%.2e", worst) + " (ranks 16/32/64)"};
}

Outcome zero_shot_oracle() {
  const std::string shape =
      R"("num_videos":100,"num_frames":24,"num_tracks":8,"grid_h":32,"grid_w":32,"feature_dim":32,"stride":8)";
  const fs::path clean = gen("zs_clean", R"({"features":{)" + shape + R"(,"noise":0.0,"seed":1}})");
  const fs::path noisy = gen("zs_noisy", R"({"features":{)" + shape + R"(,"noise":0.5,"seed":1}})");
  std::ostringstream sink;
  const auto t0 = Clock::now();
  const MetricsReport a =
      cmd_eval_zeroshot({{work("zs_clean_eval"), std::nullopt, true}, clean / "features",
                         clean / "annotations.json", std::nullopt, Pooling::kFrame},
                        sink);
  const MetricsReport b =
      cmd_eval_zeroshot({{work("zs_noisy_eval"), std::nullopt, true}, noisy / "features",
                         noisy / "annotations.json", std::nullopt, Pooling::kFrame},
                        sink);
  const double t = seconds_since(t0);
  return {a.delta_avg == 1.0 && b.delta_avg >= 0.95 && t < 60.0,
          "noise 0 delta " + fmt("%.6f", a.delta_avg) + ", noise 0.5 delta " +
              fmt("%.5f", b.delta_avg) + ", " + fmt("%.1fs", t)};
}

// Brute-force evaluator: per-frame enumeration, reduced in the same order
// as the library (per-threshold ratios summed, then divided by 5) so that
// agreement can be exact.
struct Brute {
  double delta = 0.0, oa = 0.0, aj = 0.0;
  std::array<double, 5> per{};
  bool defined = false;
};

Brute brute_force(const std::vector<EvalTrack>& tracks) {
  Brute b;
  std::size_t vis = 0, frames = 0, agree = 0;
  std::array<std::size_t, 5> close{}, tp{}, fp{}, fn{};
  for (const EvalTrack& t : tracks) {
    for (std::size_t i = 0; i < t.gt_points.size(); ++i) {
      if (static_cast<int>(i) == t.query_index) continue;
      ++frames;
      const bool gv = t.gt_visible[i], pv = t.pred_visible[i];
      agree += gv == pv;
      vis += gv;
      // Squares of doubles are exact in binary128, so the threshold test is
      // decided on the true distance of the rounded offsets.
      const __float128 dx = t.pred_points[i].x - t.gt_points[i].x;
      const __float128 dy = t.pred_points[i].y - t.gt_points[i].y;
      const __float128 err2 = dx * dx + dy * dy;
      for (std::size_t k = 0; k < 5; ++k) {
        const __float128 thr = kDefaultThresholds[k];
        const bool in = err2 < thr * thr;
        close[k] += gv && in;
        tp[k] += gv && pv && in;
        fn[k] += gv && !(pv && in);
        fp[k] += !gv && pv;
      }
    }
  }
  b.defined = vis > 0;
  if (!b.defined) return b;
  b.oa = static_cast<double>(agree) / frames;
  for (std::size_t k = 0; k < 5; ++k) {
    b.per[k] = static_cast<double>(close[k]) / vis;
    b.delta += b.per[k];
    const std::size_t d = tp[k] + fp[k] + fn[k];
    b.aj += d == 0 ? 1.0 : static_cast<double>(tp[k]) / d;
  }
  b.delta /= 5;
  b.aj /= 5;
  return b;
}

Outcome metric_oracle() {
  CounterRng rng(2024);
  int instances = 0, mismatches = 0, non_monotone = 0, first_mismatch = -1;
  while (instances < 1000) {
    std::vector<EvalTrack> tracks(1 + rng.below(3));
    for (EvalTrack& t : tracks) {
      const int n = 2 + static_cast<int>(rng.below(6));
      for (int i = 0; i < n; ++i) {
        const Point2D g{rng.uniform(0, 256), rng.uniform(0, 256)};
        // Integer and half-integer offsets hit thresholds exactly now and then.
        const double r = rng.uniform() < 0.2 ? static_cast<double>(rng.below(33)) / 2
                                             : std::pow(2.0, rng.uniform(-1.0, 5.0));
        const double a = rng.uniform(0, 6.283185307179586);
        t.gt_points.push_back(g);
        t.pred_points.push_back({g.x + r * std::cos(a), g.y + r * std::sin(a)});
        t.gt_visible.push_back(rng.uniform() < 0.7);
        t.pred_visible.push_back(rng.uniform() < 0.7);
      }
      t.query_index = static_cast<int>(rng.below(n));
      t.gt_visible[t.query_index] = true;
    }
    const Brute ref = brute_force(tracks);
    if (!ref.defined) continue;
    ++instances;
    const DeltaResult d = delta_avg(tracks);
    if (d.average != ref.delta || occlusion_accuracy(tracks) != ref.oa ||
        average_jaccard(tracks) != ref.aj || d.per_threshold != ref.per) {
      if (mismatches++ == 0) first_mismatch = instances;
    }
    for (std::size_t k = 1; k < 5; ++k) non_monotone += d.per_threshold[k] < d.per_threshold[k - 1];
  }
  return {mismatches == 0 && non_monotone == 0,
          std::to_string(instances) + " instances, " + std::to_string(mismatches) +
              " mismatches" +
              (mismatches ? " (first at " + std::to_string(first_mismatch) + ")" : std::string()) + ", " +
              std::to_string(non_monotone) + " monotonicity violations"};
}

const char* kProbeSplit =
    R"("num_frames":4,"num_tracks":8,"grid_h":8,"grid_w":8,"feature_dim":32,"stride":32,)"
    R"("subcell":true,"noise":0.3,"occlusion_rate":0.25)";

Outcome probing_gain() {
  const fs::path tr = gen("probe_train", std::string(R"({"features":{"num_videos":128,)") + kProbeSplit + R"(,"seed":0}})");
  const fs::path va = gen("probe_val", std::string(R"({"features":{"num_videos":32,)") + kProbeSplit + R"(,"seed":99}})");
  std::ostringstream sink;
  TrainProbeArgs args;
  args.run = {work("probe_run"), std::nullopt, true};
  args.features = tr / "features";
  args.annotations = tr / "annotations.json";
  args.val_features = va / "features";
  args.val_annotations = va / "annotations.json";
  const auto t0 = Clock::now();
  cmd_train_probe(args, sink);
  const double t = seconds_since(t0);
  const nlohmann::json s = nlohmann::json::parse(slurp(args.run.out / "summary.json"));
  const double zs = s.at("zero_shot").at("delta_avg");
  const double pr = s.at("probe").at("delta_avg");
  const double oa = s.at("probe").at("oa");
  const double l0 = s.at("initial_loss"), l1 = s.at("final_loss");
  const int epochs = s.at("optim").at("epochs");
  return {epochs == 20 && pr - zs >= 0.05 && oa >= 0.90 && l1 < 0.5 * l0,
          "delta " + fmt("%.3f", zs) + " -> " + fmt("%.3f", pr) + " (" + fmt("%+.1f", 100 * (pr - zs)) +
              " points), OA " + fmt("%.3f", oa) + ", loss " + fmt("%.3f", l0) + " -> " +
              fmt("%.3f", l1) + ", " + std::to_string(epochs) + " epochs, " + fmt("%.0fs", t)};
}

// 32x32 frames with 2-pixel patches: a 16x16 token grid, fine enough for the
// 256-px evaluation thresholds.
const char* kImageSplit =
    R"("num_frames":6,"num_tracks":8,"resolution":32,"sprite_size":3,"max_speed":1.6,)"
    R"("acceleration":0.5333333333333333,"occlusion_rate":0.1)";
const char* kAdaptConfig =
    R"({"optim":{"seed":3},"backbone_seed":0,)"
    R"("vit":{"patch_size":2,"embed_dim":32,"num_heads":4,"num_blocks":2,"input_resolution":32,"mlp_ratio":2}})";

Outcome adaptation_gain() {
  const fs::path tr = gen("adapt_train", std::string(R"({"images":{"num_videos":64,)") + kImageSplit + R"(,"seed":1}})");
  const fs::path va = gen("adapt_val", std::string(R"({"images":{"num_videos":16,)") + kImageSplit + R"(,"seed":2}})");
  const fs::path cfg = work("adapt.json");
  write_text(cfg, kAdaptConfig);

  std::ostringstream sink;
  TrainAdaptArgs args;
  args.run = {work("adapt_run"), std::nullopt, true};
  args.features = tr / "images";
  args.annotations = tr / "annotations.json";
  args.val_features = va / "images";
  args.val_annotations = va / "annotations.json";
  args.config = cfg;
  args.rank = 16;
  const auto t0 = Clock::now();
  cmd_train_adapt(args, sink);
  const double t_adapt = seconds_since(t0);
  const nlohmann::json s = nlohmann::json::parse(slurp(args.run.out / "summary.json"));
  const double adapted = s.at("adapted").at("delta_avg");
  const OptimConfig optim = optim_config_from_json(s.at("optim"), adaptation_config());
  const ViTConfig vit = vit_config_from_json(s.at("vit"));
  const std::uint64_t backbone_seed = s.at("backbone_seed");

  // Probe-only baseline: same optimiser settings, features from the frozen base.
  const auto t1 = Clock::now();
  const LoRAViTParams frozen = lora_vit_init(vit, {16, 16.0}, backbone_seed);
  auto encode_split = [&](const fs::path& dir) {
    const AnnotationSet ann = read_annotations(dir / "annotations.json");
    std::vector<FeatureVideo> features;
    for (const FeatureVideo& v : load_feature_dir(dir / "images", ann)) features.push_back(encode_video(v, frozen));
    return make_probe_task(features, ann);
  };
  const ProbeTask train_task = encode_split(tr), val_task = encode_split(va);
  const ProbeTrainResult probe = train_probe(train_task, nullptr, optim);
  const double probe_only = evaluate_queried_first(val_task.annotations, probe_predictions(val_task, probe.params)).delta_avg;
  const double zero_shot = evaluate_queried_first(val_task.annotations, zero_shot_predictions(val_task)).delta_avg;
  const double t_base = seconds_since(t1);

  const std::size_t r16 = s.at("adapter_parameter_count");
  const std::size_t r64 = lora_vit_init(vit, {64, 16.0}, 0).adapter_parameter_count();
  const double ratio = static_cast<double>(r64) / static_cast<double>(r16);
  const bool frozen_base = read_adapted_checkpoint(args.run.out / "adapted.ptck").backbone.flatten_base() ==
                           frozen.flatten_base();
  return {adapted - probe_only >= 0.10 && std::abs(ratio - 4.0) < 0.05 && frozen_base,
          "val delta zero-shot " + fmt("%.3f", zero_shot) + ", probe-only " + fmt("%.3f", probe_only) +
              ", rank 16 " + fmt("%.3f", adapted) + " (" + fmt("%+.1f", 100 * (adapted - probe_only)) +
              " points), " + std::to_string(optim.epochs) + " epochs lr " + fmt("%g", optim.lr_peak) +
              "; adapters rank 64/16 = " + std::to_string(r64) + "/" + std::to_string(r16) + " = " +
              fmt("%.2f", ratio) + "x; base " + (frozen_base ? "unchanged" : "CHANGED") + "; " +
              fmt("%.0fs", t_adapt) + " + " + fmt("%.0fs", t_base)};
}

Outcome determinism() {
  const std::string small = R"("num_frames":4,"num_tracks":4,"grid_h":8,"grid_w":8,"feature_dim":16,"stride":8,"subcell":true,"noise":0.3,"occlusion_rate":0.25)";
  const fs::path a = gen("det_gen_a", std::string(R"({"features":{"num_videos":6,)") + small + R"(,"seed":5}})");
  const fs::path b = gen("det_gen_b", std::string(R"({"features":{"num_videos":6,)") + small + R"(,"seed":5}})");
  std::vector<std::string> differing;
  auto compare_dirs = [&](const fs::path& x, const fs::path& y) {
    for (const auto& entry : fs::recursive_directory_iterator(x)) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), x);
      if (!fs::exists(y / rel) || slurp(entry.path()) != slurp(y / rel)) differing.push_back(rel.string());
    }
  };
  compare_dirs(a, b);

  std::ostringstream sink;
  auto probe_run = [&](const std::string& name) {
    TrainProbeArgs args;
    args.run = {work(name), 42, true};
    args.features = a / "features";
    args.annotations = a / "annotations.json";
    const fs::path cfg = work("det_probe.json");
    write_text(cfg, R"({"optim":{"epochs":3,"batch_size":4}})");
    args.config = cfg;
    cmd_train_probe(args, sink);
    return args.run.out;
  };
  compare_dirs(probe_run("det_probe_a"), probe_run("det_probe_b"));

  auto zs_run = [&](const std::string& name) {
    cmd_eval_zeroshot({{work(name), 42, true}, a / "features", a / "annotations.json", std::nullopt,
                       Pooling::kFrame},
                      sink);
    return work(name);
  };
  compare_dirs(zs_run("det_zs_a"), zs_run("det_zs_b"));

  const fs::path img = gen("det_img", R"({"images":{"num_videos":2,"num_frames":3,"num_tracks":3,"resolution":16,"sprite_size":3,"seed":3}})");
  auto adapt_run = [&](const std::string& name) {
    TrainAdaptArgs args;
    args.run = {work(name), 42, true};
    args.features = img / "images";
    args.annotations = img / "annotations.json";
    const fs::path cfg = work("det_adapt.json");
    write_text(cfg, R"({"optim":{"epochs":2,"batch_size":3},"vit":{"patch_size":4,"embed_dim":16,"num_heads":2,"num_blocks":1,"input_resolution":16,"mlp_ratio":2}})");
    args.config = cfg;
    cmd_train_adapt(args, sink);
    return args.run.out;
  };
  compare_dirs(adapt_run("det_adapt_a"), adapt_run("det_adapt_b"));

  auto eval_run = [&](const std::string& name) {
    EvalArgs args;
    args.run = {work(name), 42, true};
    args.predictions = work("det_probe_a") / "predictions.json";
    args.annotations = a / "annotations.json";
    cmd_eval(args, sink);
    return args.run.out;
  };
  compare_dirs(eval_run("det_eval_a"), eval_run("det_eval_b"));

  std::string detail = "gen-synth, train-probe, eval-zeroshot, train-adapt, eval re-runs ";
  detail += differing.empty() ? "bit-identical" : "differ in " + differing.front();
  return {differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  g_work = fs::temp_directory_path() / ("ptrack_accept_" + std::to_string(::getpid()));
  fs::create_directories(g_work);
  const std::string only = argc > 1 ? argv[1] : "";

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-fidelity", gradient_fidelity},
      {"lora-identity-merge", lora_identity_merge},
      {"zero-shot-oracle", zero_shot_oracle},
      {"metric-oracle", metric_oracle},
      {"probing-gain", probing_gain},
      {"adaptation-gain", adaptation_gain},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && name != only) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("%s %-20s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  fs::remove_all(g_work);
  return failed == 0 ? 0 : 1;
}
