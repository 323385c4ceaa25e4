#include "ptrack/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ptrack/error.hpp"

namespace ptrack {

namespace {

struct Counts {
  std::array<std::size_t, 5> within{};
  std::size_t visible_frames = 0;
  std::size_t occlusion_hits = 0;
  std::size_t occlusion_frames = 0;
  std::array<std::size_t, 5> tp{};
  std::array<std::size_t, 5> fp{};
  std::array<std::size_t, 5> fn{};
};

// Sign of the exact sum of the terms: grows a nonoverlapping expansion with
// error-free additions; its largest nonzero component carries the sign.
int exact_sign(const std::array<double, 6>& terms) {
  std::array<double, 6> e{};
  std::size_t len = 0;
  for (double x : terms) {
    double q = x;
    std::size_t out = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const double s = q + e[i];
      const double bv = s - q;
      const double err = (q - (s - bv)) + (e[i] - bv);
      q = s;
      if (err != 0.0) e[out++] = err;
    }
    e[out++] = q;
    len = out;
  }
  for (std::size_t i = len; i-- > 0;) {
    if (e[i] != 0.0) return e[i] > 0.0 ? 1 : -1;
  }
  return 0;
}

// dx^2 + dy^2 < r^2 decided exactly; rounding of a computed distance would
// misclassify points lying on a threshold.
bool within(double dx, double dy, double r) {
  dx = std::abs(dx);
  dy = std::abs(dy);
  if (!(dx < r && dy < r)) return false;  // also rejects NaN
  if (dx + dy < r) return true;
  const double px = dx * dx, py = dy * dy, pr = r * r;
  return exact_sign({px, std::fma(dx, dx, -px), py, std::fma(dy, dy, -py), -pr,
                     -std::fma(r, r, -pr)}) < 0;
}

void check_track(const EvalTrack& track) {
  const std::size_t n = track.gt_points.size();
  if (track.gt_visible.size() != n || track.pred_points.size() != n ||
      track.pred_visible.size() != n) {
    throw InvalidInput("evaluation track has mismatched lengths");
  }
  if (track.query_index < 0 || static_cast<std::size_t>(track.query_index) >= n) {
    throw InvalidInput("evaluation track query index out of range");
  }
}

Counts count(std::span<const EvalTrack> tracks, const std::array<double, 5>& thresholds,
             JaccardMode mode) {
  Counts c;
  for (const EvalTrack& track : tracks) {
    check_track(track);
    for (std::size_t t = 0; t < track.gt_points.size(); ++t) {
      if (static_cast<int>(t) == track.query_index) continue;
      const bool gv = track.gt_visible[t];
      const bool pv = track.pred_visible[t];
      ++c.occlusion_frames;
      if (gv == pv) ++c.occlusion_hits;
      const double dx = track.pred_points[t].x - track.gt_points[t].x;
      const double dy = track.pred_points[t].y - track.gt_points[t].y;
      if (gv) ++c.visible_frames;
      for (std::size_t k = 0; k < thresholds.size(); ++k) {
        const bool close = within(dx, dy, thresholds[k]);
        if (gv && close) ++c.within[k];
        if (gv && pv && close) {
          ++c.tp[k];
        } else if (gv) {
          ++c.fn[k];
          if (mode == JaccardMode::kTapVid && pv) ++c.fp[k];
        } else if (pv) {
          ++c.fp[k];
        }
      }
    }
  }
  return c;
}

DeltaResult delta_from(const Counts& c) {
  if (c.visible_frames == 0) {
    throw UndefinedMetric("delta_avg: no ground-truth-visible non-query frames");
  }
  DeltaResult r;
  r.frames = c.visible_frames;
  for (std::size_t k = 0; k < c.within.size(); ++k) {
    r.per_threshold[k] = static_cast<double>(c.within[k]) / c.visible_frames;
    r.average += r.per_threshold[k];
  }
  r.average /= c.within.size();
  return r;
}

double oa_from(const Counts& c) {
  if (c.occlusion_frames == 0) throw UndefinedMetric("occlusion_accuracy: no non-query frames");
  return static_cast<double>(c.occlusion_hits) / c.occlusion_frames;
}

double aj_from(const Counts& c) {
  double total = 0.0;
  for (std::size_t k = 0; k < c.tp.size(); ++k) {
    const std::size_t denom = c.tp[k] + c.fp[k] + c.fn[k];
    total += denom == 0 ? 1.0 : static_cast<double>(c.tp[k]) / denom;
  }
  return total / c.tp.size();
}

}  // namespace

DeltaResult delta_avg(std::span<const EvalTrack> tracks, const std::array<double, 5>& thresholds) {
  return delta_from(count(tracks, thresholds, JaccardMode::kStrict));
}

double occlusion_accuracy(std::span<const EvalTrack> tracks) {
  return oa_from(count(tracks, kDefaultThresholds, JaccardMode::kStrict));
}

double average_jaccard(std::span<const EvalTrack> tracks, const std::array<double, 5>& thresholds,
                       JaccardMode mode) {
  if (tracks.empty()) throw UndefinedMetric("average_jaccard: no tracks");
  return aj_from(count(tracks, thresholds, mode));
}

MetricsReport evaluate_videos(std::span<const EvalVideo> videos, bool zero_shot,
                              const MetricOptions& options) {
  MetricsReport report;
  report.thresholds = options.thresholds;
  report.videos = videos.size();
  for (const EvalVideo& v : videos) report.tracks += v.tracks.size();

  if (options.pooling == Pooling::kFrame) {
    Counts total;
    for (const EvalVideo& v : videos) {
      const Counts c = count(v.tracks, options.thresholds, options.jaccard);
      for (std::size_t k = 0; k < 5; ++k) {
        total.within[k] += c.within[k];
        total.tp[k] += c.tp[k];
        total.fp[k] += c.fp[k];
        total.fn[k] += c.fn[k];
      }
      total.visible_frames += c.visible_frames;
      total.occlusion_hits += c.occlusion_hits;
      total.occlusion_frames += c.occlusion_frames;
    }
    const DeltaResult d = delta_from(total);
    report.delta_avg = d.average;
    report.deltas = d.per_threshold;
    report.frames = d.frames;
    if (!zero_shot) {
      report.oa = oa_from(total);
      report.aj = aj_from(total);
    }
    return report;
  }

  // Per-video metrics, then the mean over videos that have evaluable frames.
  std::size_t scored = 0;
  double aj = 0.0;
  double oa = 0.0;
  for (const EvalVideo& v : videos) {
    const Counts c = count(v.tracks, options.thresholds, options.jaccard);
    if (c.visible_frames == 0) continue;
    const DeltaResult d = delta_from(c);
    ++scored;
    report.delta_avg += d.average;
    for (std::size_t k = 0; k < 5; ++k) report.deltas[k] += d.per_threshold[k];
    report.frames += d.frames;
    if (!zero_shot) {
      aj += aj_from(c);
      oa += oa_from(c);
    }
  }
  if (scored == 0) throw UndefinedMetric("no video has ground-truth-visible non-query frames");
  report.delta_avg /= scored;
  for (double& d : report.deltas) d /= scored;
  if (!zero_shot) {
    report.aj = aj / scored;
    report.oa = oa / scored;
  }
  return report;
}

Point2D grid_to_eval(Point2D p, int grid_h, int grid_w) {
  return {(p.x + 0.5) * kEvalResolution / grid_w, (p.y + 0.5) * kEvalResolution / grid_h};
}

Point2D source_to_eval(Point2D p, int source_h, int source_w) {
  return {p.x * kEvalResolution / source_w, p.y * kEvalResolution / source_h};
}

Point2D source_to_grid(Point2D p, int source_h, int source_w, int grid_h, int grid_w) {
  return {p.x * grid_w / source_w - 0.5, p.y * grid_h / source_h - 0.5};
}

Point2D grid_to_source(Point2D p, int source_h, int source_w, int grid_h, int grid_w) {
  return {(p.x + 0.5) * source_w / grid_w, (p.y + 0.5) * source_h / grid_h};
}

int first_visible(const std::vector<bool>& visible) {
  for (std::size_t t = 0; t < visible.size(); ++t) {
    if (visible[t]) return static_cast<int>(t);
  }
  return -1;
}

std::string format_report_table(const MetricsReport& report, const std::string& label) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("    -");
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%5.3f", *v);
    return std::string(buf);
  };
  std::ostringstream os;
  char head[128];
  std::snprintf(head, sizeof(head), "%-24s %6s %9s %6s\n", "setup", "AJ", "delta_avg", "OA");
  os << head;
  char row[160];
  std::snprintf(row, sizeof(row), "%-24s %6s %9s %6s\n", label.c_str(), cell(report.aj).c_str(),
                cell(report.delta_avg).c_str(), cell(report.oa).c_str());
  os << row;
  return os.str();
}

}  // namespace ptrack
