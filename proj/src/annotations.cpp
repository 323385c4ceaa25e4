#include "ptrack/annotations.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ptrack/error.hpp"

namespace ptrack {

using nlohmann::json;

namespace {

constexpr const char* kAnnotationFormat = "ptrack-annotations";
constexpr const char* kPredictionFormat = "ptrack-predictions";
constexpr int kTextVersion = 1;

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
  throw InvalidInput("schema mismatch at " + where + ": " + what);
}

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object()) schema_error(where, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) schema_error(where, std::string("missing field '") + key + "'");
  return *it;
}

int int_field(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_number_integer()) schema_error(where + "." + key, "expected an integer");
  return v.get<int>();
}

void check_header(const json& j, const char* format) {
  const json& f = field(j, "format", "$");
  if (!f.is_string() || f.get<std::string>() != format) {
    schema_error("$.format", std::string("expected \"") + format + "\"");
  }
  const int version = int_field(j, "version", "$");
  if (version != kTextVersion) {
    throw Incompatible(std::string(format) + " version " + std::to_string(version) +
                       " is not supported (expected " + std::to_string(kTextVersion) + ")");
  }
}

std::vector<Point2D> points_from(const json& j, const std::string& where) {
  if (!j.is_array()) schema_error(where, "expected an array of [x, y]");
  std::vector<Point2D> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& p = j[i];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      schema_error(where + "[" + std::to_string(i) + "]", "expected [x, y]");
    }
    out.push_back({p[0].get<double>(), p[1].get<double>()});
    if (!std::isfinite(out.back().x) || !std::isfinite(out.back().y)) {
      schema_error(where + "[" + std::to_string(i) + "]", "non-finite coordinate");
    }
  }
  return out;
}

std::vector<bool> flags_from(const json& j, const std::string& where) {
  if (!j.is_array()) schema_error(where, "expected an array of booleans");
  std::vector<bool> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_boolean()) schema_error(where + "[" + std::to_string(i) + "]", "expected a boolean");
    out.push_back(j[i].get<bool>());
  }
  return out;
}

json points_to(const std::vector<Point2D>& pts) {
  json a = json::array();
  for (const Point2D& p : pts) a.push_back({p.x, p.y});
  return a;
}

json flags_to(const std::vector<bool>& flags) {
  json a = json::array();
  for (bool b : flags) a.push_back(b);
  return a;
}

}  // namespace

void AnnotationSet::validate() const {
  for (const VideoAnnotation& v : videos) {
    if (v.height < 1 || v.width < 1 || v.num_frames < 1) {
      throw InvalidInput("video " + v.id + ": non-positive resolution or frame count");
    }
    for (std::size_t k = 0; k < v.tracks.size(); ++k) {
      const TrackAnnotation& t = v.tracks[k];
      if (t.points.size() != static_cast<std::size_t>(v.num_frames) ||
          t.visible.size() != t.points.size()) {
        throw InvalidInput("video " + v.id + " track " + std::to_string(k) +
                           ": length differs from num_frames");
      }
      if (first_visible(t.visible) < 0) {
        throw InvalidInput("video " + v.id + " track " + std::to_string(k) +
                           ": no visible frame");
      }
    }
  }
}

const VideoAnnotation* AnnotationSet::find(const std::string& id) const {
  for (const VideoAnnotation& v : videos) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

json to_json(const AnnotationSet& set) {
  json videos = json::array();
  for (const VideoAnnotation& v : set.videos) {
    json tracks = json::array();
    for (const TrackAnnotation& t : v.tracks) {
      tracks.push_back({{"points", points_to(t.points)}, {"visible", flags_to(t.visible)}});
    }
    videos.push_back({{"id", v.id},
                      {"height", v.height},
                      {"width", v.width},
                      {"num_frames", v.num_frames},
                      {"tracks", std::move(tracks)}});
  }
  return {{"format", kAnnotationFormat}, {"version", kTextVersion}, {"videos", std::move(videos)}};
}

AnnotationSet annotations_from_json(const json& j) {
  check_header(j, kAnnotationFormat);
  const json& videos = field(j, "videos", "$");
  if (!videos.is_array()) schema_error("$.videos", "expected an array");
  AnnotationSet set;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const std::string where = "$.videos[" + std::to_string(i) + "]";
    const json& v = videos[i];
    VideoAnnotation va;
    const json& id = field(v, "id", where);
    if (!id.is_string()) schema_error(where + ".id", "expected a string");
    va.id = id.get<std::string>();
    va.height = int_field(v, "height", where);
    va.width = int_field(v, "width", where);
    va.num_frames = int_field(v, "num_frames", where);
    const json& tracks = field(v, "tracks", where);
    if (!tracks.is_array()) schema_error(where + ".tracks", "expected an array");
    for (std::size_t k = 0; k < tracks.size(); ++k) {
      const std::string tw = where + ".tracks[" + std::to_string(k) + "]";
      TrackAnnotation t;
      t.points = points_from(field(tracks[k], "points", tw), tw + ".points");
      t.visible = flags_from(field(tracks[k], "visible", tw), tw + ".visible");
      va.tracks.push_back(std::move(t));
    }
    set.videos.push_back(std::move(va));
  }
  set.validate();
  return set;
}

json to_json(const PredictionSet& set) {
  json videos = json::array();
  for (const VideoPrediction& v : set.videos) {
    json tracks = json::array();
    for (const TrackPrediction& t : v.tracks) {
      json tj = {{"query_frame", t.query_frame},
                 {"points", points_to(t.points)},
                 {"visible", flags_to(t.visible)}};
      if (t.occlusion_prob) tj["occlusion_prob"] = *t.occlusion_prob;
      tracks.push_back(std::move(tj));
    }
    videos.push_back(
        {{"id", v.id}, {"height", v.height}, {"width", v.width}, {"tracks", std::move(tracks)}});
  }
  return {{"format", kPredictionFormat},
          {"version", kTextVersion},
          {"zero_shot", set.zero_shot},
          {"videos", std::move(videos)}};
}

PredictionSet predictions_from_json(const json& j) {
  check_header(j, kPredictionFormat);
  PredictionSet set;
  const json& zs = field(j, "zero_shot", "$");
  if (!zs.is_boolean()) schema_error("$.zero_shot", "expected a boolean");
  set.zero_shot = zs.get<bool>();
  const json& videos = field(j, "videos", "$");
  if (!videos.is_array()) schema_error("$.videos", "expected an array");
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const std::string where = "$.videos[" + std::to_string(i) + "]";
    const json& v = videos[i];
    VideoPrediction vp;
    const json& id = field(v, "id", where);
    if (!id.is_string()) schema_error(where + ".id", "expected a string");
    vp.id = id.get<std::string>();
    vp.height = int_field(v, "height", where);
    vp.width = int_field(v, "width", where);
    const json& tracks = field(v, "tracks", where);
    if (!tracks.is_array()) schema_error(where + ".tracks", "expected an array");
    for (std::size_t k = 0; k < tracks.size(); ++k) {
      const std::string tw = where + ".tracks[" + std::to_string(k) + "]";
      TrackPrediction t;
      t.query_frame = int_field(tracks[k], "query_frame", tw);
      t.points = points_from(field(tracks[k], "points", tw), tw + ".points");
      t.visible = flags_from(field(tracks[k], "visible", tw), tw + ".visible");
      if (tracks[k].contains("occlusion_prob")) {
        const json& op = tracks[k]["occlusion_prob"];
        if (!op.is_array()) schema_error(tw + ".occlusion_prob", "expected an array");
        t.occlusion_prob = op.get<std::vector<double>>();
      }
      if (t.visible.size() != t.points.size()) {
        schema_error(tw, "points and visible differ in length");
      }
      vp.tracks.push_back(std::move(t));
    }
    set.videos.push_back(std::move(vp));
  }
  return set;
}

json to_json(const MetricsReport& report, Pooling pooling) {
  json deltas = json::object();
  for (std::size_t k = 0; k < report.thresholds.size(); ++k) {
    std::ostringstream key;
    key << report.thresholds[k];
    deltas[key.str()] = report.deltas[k];
  }
  return {{"format", "ptrack-report"},
          {"version", kTextVersion},
          {"aj", report.aj ? json(*report.aj) : json(nullptr)},
          {"delta_avg", report.delta_avg},
          {"oa", report.oa ? json(*report.oa) : json(nullptr)},
          {"deltas", std::move(deltas)},
          {"pooling", pooling == Pooling::kFrame ? "frame" : "video"},
          {"counts",
           {{"videos", report.videos}, {"tracks", report.tracks}, {"frames", report.frames}}}};
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound("missing file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw CorruptFile(path.string() + ": " + e.what(), e.byte);
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
  out << j.dump(1) << '\n';
  if (!out) throw InvalidInput("failed writing " + path.string());
}

void write_annotations(const std::filesystem::path& path, const AnnotationSet& set) {
  write_json_file(path, to_json(set));
}

AnnotationSet read_annotations(const std::filesystem::path& path) {
  return annotations_from_json(read_json_file(path));
}

void write_predictions(const std::filesystem::path& path, const PredictionSet& set) {
  write_json_file(path, to_json(set));
}

PredictionSet read_predictions(const std::filesystem::path& path) {
  return predictions_from_json(read_json_file(path));
}

MetricsReport evaluate_queried_first(const AnnotationSet& annotations,
                                     const PredictionSet& predictions,
                                     const MetricOptions& options) {
  if (annotations.videos.size() != predictions.videos.size()) {
    throw InvalidInput("predictions cover " + std::to_string(predictions.videos.size()) +
                       " videos, annotations " + std::to_string(annotations.videos.size()));
  }
  std::vector<EvalVideo> videos;
  videos.reserve(annotations.videos.size());
  for (const VideoPrediction& vp : predictions.videos) {
    const VideoAnnotation* va = annotations.find(vp.id);
    if (va == nullptr) throw InvalidInput("prediction for unknown video '" + vp.id + "'");
    if (va->tracks.size() != vp.tracks.size()) {
      throw InvalidInput("video " + vp.id + ": " + std::to_string(vp.tracks.size()) +
                         " predicted tracks, " + std::to_string(va->tracks.size()) + " annotated");
    }
    EvalVideo ev;
    ev.id = vp.id;
    for (std::size_t k = 0; k < vp.tracks.size(); ++k) {
      const TrackAnnotation& gt = va->tracks[k];
      const TrackPrediction& pr = vp.tracks[k];
      if (pr.points.size() != gt.points.size()) {
        throw InvalidInput("video " + vp.id + " track " + std::to_string(k) +
                           ": prediction length differs from annotation");
      }
      const int query = first_visible(gt.visible);
      if (pr.query_frame != query) {
        throw InvalidInput("video " + vp.id + " track " + std::to_string(k) +
                           ": query frame is not the first visible frame");
      }
      EvalTrack et;
      et.query_index = query;
      et.gt_visible = gt.visible;
      et.pred_visible = pr.visible;
      for (const Point2D& p : gt.points) et.gt_points.push_back(source_to_eval(p, va->height, va->width));
      for (const Point2D& p : pr.points) {
        et.pred_points.push_back(source_to_eval(p, vp.height, vp.width));
      }
      ev.tracks.push_back(std::move(et));
    }
    videos.push_back(std::move(ev));
  }
  return evaluate_videos(videos, predictions.zero_shot, options);
}

}  // namespace ptrack
