#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ptrack/annotations.hpp"
#include "ptrack/checkpoint.hpp"
#include "ptrack/commands.hpp"
#include "ptrack/error.hpp"
#include "ptrack/feature_io.hpp"
#include "ptrack/probe.hpp"
#include "ptrack/tracker.hpp"

namespace py = pybind11;
using namespace ptrack;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Grid2D to_grid(const Array& a) {
  if (a.ndim() == 2) return Grid2D(1, a.shape(0), a.shape(1), {a.data(), a.data() + a.size()});
  if (a.ndim() != 3) throw InvalidInput("expected a (C, H, W) or (H, W) array");
  return Grid2D(a.shape(0), a.shape(1), a.shape(2), {a.data(), a.data() + a.size()});
}

Array from_grid(const Grid2D& g, bool squeeze) {
  Array out = squeeze && g.channels() == 1
                  ? Array({g.height(), g.width()})
                  : Array({g.channels(), g.height(), g.width()});
  std::copy(g.data().begin(), g.data().end(), out.mutable_data());
  return out;
}

FeatureVideo to_video(const Array& a, int stride, int source_h, int source_w) {
  if (a.ndim() != 4) throw InvalidInput("expected a (T, D, H, W) array");
  FeatureVideo v;
  v.stride = stride;
  v.source_h = source_h;
  v.source_w = source_w;
  const std::size_t frame = a.shape(1) * a.shape(2) * a.shape(3);
  for (py::ssize_t t = 0; t < a.shape(0); ++t) {
    const double* p = a.data() + t * frame;
    v.frames.emplace_back(a.shape(1), a.shape(2), a.shape(3), std::vector<double>(p, p + frame));
  }
  return v;
}

Array from_video(const FeatureVideo& v) {
  Array out({v.num_frames(), v.dim(), v.height(), v.width()});
  double* dst = out.mutable_data();
  for (const Grid2D& f : v.frames) dst = std::copy(f.data().begin(), f.data().end(), dst);
  return out;
}

Array points_array(const std::vector<Point2D>& pts) {
  Array out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{2}});
  auto r = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    r(i, 0) = pts[i].x;
    r(i, 1) = pts[i].y;
  }
  return out;
}

RunOptions run_options(const fs::path& out, std::optional<std::uint64_t> seed) {
  return {out, seed, true};
}

std::string report_json(const MetricsReport& r, Pooling p) { return to_json(r, p).dump(); }

}  // namespace

PYBIND11_MODULE(_ptrack, m) {
  m.doc() = "Point-tracking evaluation and adaptation engine";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<InvalidInput>(m, "InvalidInput", base.ptr());
  py::register_exception<FileNotFound>(m, "FileNotFound", base.ptr());
  py::register_exception<InvalidState>(m, "InvalidState", base.ptr());
  py::register_exception<InvalidConfig>(m, "InvalidConfig", base.ptr());
  py::register_exception<UndefinedMetric>(m, "UndefinedMetric", base.ptr());
  py::register_exception<CorruptFile>(m, "CorruptFile", base.ptr());
  py::register_exception<Incompatible>(m, "Incompatible", base.ptr());
  py::register_exception<TypeMismatch>(m, "TypeMismatch", base.ptr());
  py::register_exception<TrainingFault>(m, "TrainingFault", base.ptr());

  m.def("correlation_map",
        [](const Array& frame, const Array& query) {
          const Grid2D g = to_grid(frame);
          return from_grid(correlation_map(g, {query.data(), static_cast<std::size_t>(query.size())}), true);
        },
        py::arg("frame"), py::arg("query"));
  m.def("bilinear_sample",
        [](const Array& map, double x, double y) { return bilinear_sample(to_grid(map), {x, y}); },
        py::arg("map"), py::arg("x"), py::arg("y"));
  m.def("argmax2d", [](const Array& map) {
    const Point2D p = argmax2d(to_grid(map));
    return std::make_pair(p.x, p.y);
  });
  m.def("soft_argmax2d",
        [](const Array& map, double temperature) {
          const Point2D p = soft_argmax2d(to_grid(map), temperature);
          return std::make_pair(p.x, p.y);
        },
        py::arg("map"), py::arg("temperature") = 1.0);
  m.def("zero_shot_track",
        [](const Array& volume, int frame, double x, double y) {
          const FeatureVideo v = to_video(volume, 1, 0, 0);
          return points_array(zero_shot_track(v, {frame, {x, y}}).points);
        },
        py::arg("features"), py::arg("frame"), py::arg("x"), py::arg("y"),
        "Argmax trajectory (T, 2) in feature-grid units for a query at (frame, x, y).");

  m.def("read_features", [](const fs::path& path) {
    const FeatureVideo v = read_feature_video(path);
    return py::make_tuple(from_video(v), v.stride, v.source_h, v.source_w);
  });
  m.def("write_features",
        [](const fs::path& path, const Array& features, int stride, int source_h, int source_w) {
          write_feature_video(path, to_video(features, stride, source_h, source_w));
        },
        py::arg("path"), py::arg("features"), py::arg("stride") = 1, py::arg("source_h") = 0,
        py::arg("source_w") = 0);

  m.def("probe_parameter_count", [] { return ProbeParams::kParameterCount; });
  m.def("probe_init", [](std::uint64_t seed) { return probe_init(seed).flatten(); });
  m.def("checkpoint_info", [](const fs::path& path) {
    const CheckpointInfo info = read_checkpoint_info(path);
    return py::make_tuple(info.version, to_string(info.kind), info.config.dump(), info.parameter_count);
  });

  m.def("evaluate",
        [](const fs::path& annotations, const fs::path& predictions, const std::string& pooling,
           const std::string& jaccard) {
          MetricOptions o;
          if (pooling == "video") o.pooling = Pooling::kVideo;
          else if (pooling != "frame") throw InvalidConfig("pooling must be frame or video");
          if (jaccard == "tapvid") o.jaccard = JaccardMode::kTapVid;
          else if (jaccard != "strict") throw InvalidConfig("jaccard must be strict or tapvid");
          const MetricsReport r =
              evaluate_queried_first(read_annotations(annotations), read_predictions(predictions), o);
          return report_json(r, o.pooling);
        },
        py::arg("annotations"), py::arg("predictions"), py::arg("pooling") = "frame",
        py::arg("jaccard") = "strict");

  m.def("gen_synth",
        [](const fs::path& config, const fs::path& out, std::optional<std::uint64_t> seed) {
          std::ostringstream log;
          cmd_gen_synth({run_options(out, seed), config}, log);
          return log.str();
        },
        py::arg("config"), py::arg("out"), py::arg("seed") = py::none());
  m.def("eval_zeroshot",
        [](const fs::path& features, const fs::path& annotations, const fs::path& out,
           std::optional<int> resolution) {
          std::ostringstream log;
          const MetricsReport r = cmd_eval_zeroshot(
              {run_options(out, std::nullopt), features, annotations, resolution, Pooling::kFrame}, log);
          return report_json(r, Pooling::kFrame);
        },
        py::arg("features"), py::arg("annotations"), py::arg("out"),
        py::arg("resolution") = py::none());
  m.def("train_probe",
        [](const fs::path& features, const fs::path& annotations, const fs::path& out,
           std::optional<fs::path> val_features, std::optional<fs::path> val_annotations,
           std::optional<fs::path> config, std::optional<std::uint64_t> seed) {
          TrainProbeArgs a;
          a.run = run_options(out, seed);
          a.features = features;
          a.annotations = annotations;
          a.val_features = val_features;
          a.val_annotations = val_annotations;
          a.config = config;
          std::ostringstream log;
          return report_json(cmd_train_probe(a, log), Pooling::kFrame);
        },
        py::arg("features"), py::arg("annotations"), py::arg("out"),
        py::arg("val_features") = py::none(), py::arg("val_annotations") = py::none(),
        py::arg("config") = py::none(), py::arg("seed") = py::none());
}
