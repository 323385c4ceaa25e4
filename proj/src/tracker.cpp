#include "ptrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ptrack/error.hpp"

namespace ptrack {

void FeatureVideo::validate() const {
  if (frames.empty()) throw InvalidInput("feature video has no frames");
  if (stride < 1) throw InvalidInput("feature video stride must be >= 1");
  for (std::size_t t = 1; t < frames.size(); ++t) {
    if (!frames[t].same_shape(frames.front())) {
      throw InvalidInput("frame " + std::to_string(t) + " differs in shape from frame 0");
    }
  }
}

std::vector<double> extract_query_feature(const FeatureVideo& video, const Query& query) {
  if (query.frame < 0 || query.frame >= video.num_frames()) {
    throw InvalidInput("query frame " + std::to_string(query.frame) + " outside [0, " +
                       std::to_string(video.num_frames()) + ")");
  }
  const Point2D p = query.point;
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0.0 || p.y < 0.0 ||
      p.x > video.width() - 1.0 || p.y > video.height() - 1.0) {
    throw InvalidInput("query point outside the feature grid");
  }
  return bilinear_sample(video.frames[query.frame], p);
}

Grid2D correlation_map(const Grid2D& frame, std::span<const double> query) {
  if (frame.empty()) throw InvalidInput("correlation_map: empty frame");
  if (static_cast<int>(query.size()) != frame.channels()) {
    throw InvalidInput("correlation_map: query has " + std::to_string(query.size()) +
                       " channels, frame has " + std::to_string(frame.channels()));
  }
  double qnorm2 = 0.0;
  for (double v : query) qnorm2 += v * v;
  if (!(qnorm2 > 0.0)) throw InvalidInput("correlation_map: zero query feature");

  const std::size_t cells = frame.plane_size();
  std::vector<double> dot(cells, 0.0);
  std::vector<double> norm2(cells, 0.0);
  for (int c = 0; c < frame.channels(); ++c) {
    const auto plane = frame.plane(c);
    const double qc = query[c];
    for (std::size_t i = 0; i < cells; ++i) {
      dot[i] += qc * plane[i];
      norm2[i] += plane[i] * plane[i];
    }
  }
  Grid2D out(1, frame.height(), frame.width());
  auto dst = out.plane(0);
  for (std::size_t i = 0; i < cells; ++i) {
    // sqrt(|q|^2 |f|^2) rather than |q| |f| keeps self-similarity exactly 1.
    dst[i] = norm2[i] > 0.0 ? std::clamp(dot[i] / std::sqrt(qnorm2 * norm2[i]), -1.0, 1.0) : 0.0;
  }
  return out;
}

// C = <q^, f^>; dC/df = (q^ - C f^) / |f|, dC/dq = (f^ - C q^) / |q|.
void correlation_map_backward(const Grid2D& frame, std::span<const double> query,
                              const Grid2D& d_map, Grid2D& d_frame, std::span<double> d_query) {
  const int d = frame.channels();
  if (static_cast<int>(query.size()) != d || static_cast<int>(d_query.size()) != d ||
      !d_frame.same_shape(frame) || d_map.channels() != 1 || d_map.height() != frame.height() ||
      d_map.width() != frame.width()) {
    throw InvalidInput("correlation_map_backward: shape mismatch");
  }
  double qnorm2 = 0.0;
  for (double v : query) qnorm2 += v * v;
  if (!(qnorm2 > 0.0)) throw InvalidInput("correlation_map_backward: zero query feature");
  const double qnorm = std::sqrt(qnorm2);

  const std::size_t cells = frame.plane_size();
  std::vector<double> dot(cells, 0.0);
  std::vector<double> norm2(cells, 0.0);
  for (int c = 0; c < d; ++c) {
    const auto plane = frame.plane(c);
    for (std::size_t i = 0; i < cells; ++i) {
      dot[i] += query[c] * plane[i];
      norm2[i] += plane[i] * plane[i];
    }
  }
  const auto g = d_map.plane(0);
  // Per cell: coefficient on f (for dq) and on q, f (for df).
  std::vector<double> inv_f(cells, 0.0), corr(cells, 0.0);
  for (std::size_t i = 0; i < cells; ++i) {
    if (norm2[i] > 0.0) {
      inv_f[i] = 1.0 / std::sqrt(norm2[i]);
      corr[i] = dot[i] * inv_f[i] / qnorm;
    }
  }
  std::vector<double> dq(d, 0.0);
  for (int c = 0; c < d; ++c) {
    const auto f = frame.plane(c);
    auto df = d_frame.plane(c);
    const double qh = query[c] / qnorm;
    double acc = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
      if (inv_f[i] == 0.0 || g[i] == 0.0) continue;
      const double fh = f[i] * inv_f[i];
      df[i] += g[i] * (qh - corr[i] * fh) * inv_f[i];
      acc += g[i] * (fh - corr[i] * qh);
    }
    dq[c] = acc / qnorm;
  }
  for (int c = 0; c < d; ++c) d_query[c] += dq[c];
}

std::vector<Grid2D> correlation_volume(const FeatureVideo& video, const Query& query) {
  video.validate();
  const std::vector<double> q = extract_query_feature(video, query);
  std::vector<Grid2D> maps;
  maps.reserve(video.frames.size());
  for (const Grid2D& frame : video.frames) maps.push_back(correlation_map(frame, q));
  return maps;
}

Trajectory zero_shot_track(const FeatureVideo& video, const Query& query) {
  const std::vector<Grid2D> maps = correlation_volume(video, query);
  Trajectory traj;
  traj.points.reserve(maps.size());
  for (const Grid2D& c : maps) traj.points.push_back(argmax2d(c));
  traj.visible.assign(maps.size(), true);
  return traj;
}

FeatureVideo resize_video(const FeatureVideo& video, int new_height, int new_width) {
  video.validate();
  FeatureVideo out;
  out.source_h = video.source_h;
  out.source_w = video.source_w;
  const int src = std::max(video.source_h, video.source_w);
  out.stride = std::max(1, src / std::max(new_height, new_width));
  out.frames.reserve(video.frames.size());
  for (const Grid2D& f : video.frames) out.frames.push_back(resize_bilinear(f, new_height, new_width));
  return out;
}

}  // namespace ptrack
