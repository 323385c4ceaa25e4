#include "ptrack/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "ptrack/error.hpp"
#include "ptrack/metrics.hpp"
#include "ptrack/rng.hpp"

namespace ptrack {

namespace {

enum Stream : std::uint64_t {
  kMotion = 1,
  kOcclusion = 2,
  kNoise = 3,
  kIdentity = 4,
  kBackground = 5,
  kSprites = 6,
  kPhotometric = 7,
};

CounterRng stream_rng(std::uint64_t seed, int video, Stream s) {
  return CounterRng(seed, (static_cast<std::uint64_t>(video) << 4) | s);
}

struct Walker {
  double x = 0.0, y = 0.0, vx = 0.0, vy = 0.0;
};

double reflect(double v, double lo, double hi, double& vel) {
  if (hi <= lo) return lo;
  for (int guard = 0; guard < 4 && (v < lo || v > hi); ++guard) {
    if (v < lo) v = 2 * lo - v;
    if (v > hi) v = 2 * hi - v;
    vel = -vel;
  }
  return std::clamp(v, lo, hi);
}

// Positions start uniform inside [lo, hi]^2; velocity performs a clamped
// random walk.
std::vector<std::vector<Walker>> simulate(int tracks, int frames, double lo_x, double hi_x,
                                          double lo_y, double hi_y, double max_speed,
                                          double accel, CounterRng& rng) {
  std::vector<std::vector<Walker>> paths(tracks, std::vector<Walker>(frames));
  for (int k = 0; k < tracks; ++k) {
    Walker w;
    w.x = rng.uniform(lo_x, hi_x);
    w.y = rng.uniform(lo_y, hi_y);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double speed = rng.uniform(0.0, max_speed);
    w.vx = speed * std::cos(angle);
    w.vy = speed * std::sin(angle);
    for (int t = 0; t < frames; ++t) {
      if (t > 0) {
        w.vx += accel * rng.normal();
        w.vy += accel * rng.normal();
        const double s = std::hypot(w.vx, w.vy);
        if (s > max_speed && s > 0.0) {
          w.vx *= max_speed / s;
          w.vy *= max_speed / s;
        }
        w.x = reflect(w.x + w.vx, lo_x, hi_x, w.vx);
        w.y = reflect(w.y + w.vy, lo_y, hi_y, w.vy);
      }
      paths[k][t] = w;
    }
  }
  return paths;
}

std::vector<std::vector<bool>> sample_visibility(int tracks, int frames, double rate,
                                                 CounterRng& rng) {
  std::vector<std::vector<bool>> vis(tracks, std::vector<bool>(frames, true));
  for (int k = 0; k < tracks; ++k) {
    for (int t = 1; t < frames; ++t) vis[k][t] = !(rng.uniform() < rate);
  }
  return vis;
}

// Orthonormal identities (Gram-Schmidt on Gaussian draws) when they fit,
// otherwise independent random unit vectors.
std::vector<std::vector<double>> identities(int count, int dim, CounterRng& rng) {
  std::vector<std::vector<double>> out;
  while (static_cast<int>(out.size()) < count) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    if (static_cast<int>(out.size()) < dim) {
      for (const auto& u : out) {
        double dot = 0.0;
        for (int i = 0; i < dim; ++i) dot += u[i] * v[i];
        for (int i = 0; i < dim; ++i) v[i] -= dot * u[i];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

// Nearest free cell to (cx, cy), scanning Chebyshev rings in row-major order.
std::pair<int, int> free_cell(int cx, int cy, int h, int w, const std::vector<char>& taken) {
  for (int r = 0; r < std::max(h, w); ++r) {
    for (int y = cy - r; y <= cy + r; ++y) {
      for (int x = cx - r; x <= cx + r; ++x) {
        if (std::max(std::abs(x - cx), std::abs(y - cy)) != r) continue;
        if (x < 0 || y < 0 || x >= w || y >= h) continue;
        if (!taken[static_cast<std::size_t>(y) * w + x]) return {x, y};
      }
    }
  }
  throw InvalidConfig("no free cell left for a track");
}

}  // namespace

std::string synthetic_video_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "synth_%04d", index);
  return buf;
}

void SyntheticConfig::validate() const {
  if (num_videos < 1 || num_frames < 1 || num_tracks < 1 || grid_h < 1 || grid_w < 1 ||
      feature_dim < 1 || stride < 1) {
    throw InvalidConfig("synthetic config sizes must be positive");
  }
  if (num_tracks > grid_h * grid_w) throw InvalidConfig("more tracks than grid cells");
  if (!(noise >= 0.0)) throw InvalidConfig("noise must be >= 0");
  if (!(occlusion_rate >= 0.0 && occlusion_rate <= 1.0)) {
    throw InvalidConfig("occlusion_rate must lie in [0, 1]");
  }
  if (!(max_speed >= 0.0) || !(acceleration >= 0.0)) {
    throw InvalidConfig("motion parameters must be >= 0");
  }
}

SyntheticVideo synth_generate_video(const SyntheticConfig& cfg, int index) {
  cfg.validate();
  const int h = cfg.grid_h;
  const int w = cfg.grid_w;
  const int d = cfg.feature_dim;

  CounterRng motion = stream_rng(cfg.seed, index, kMotion);
  CounterRng occl = stream_rng(cfg.seed, index, kOcclusion);
  CounterRng noise = stream_rng(cfg.seed, index, kNoise);
  CounterRng ident = stream_rng(cfg.seed, index, kIdentity);

  const auto paths = simulate(cfg.num_tracks, cfg.num_frames, 0.0, w - 1.0, 0.0, h - 1.0,
                              cfg.max_speed, cfg.acceleration, motion);
  const auto vis = sample_visibility(cfg.num_tracks, cfg.num_frames, cfg.occlusion_rate, occl);
  const auto ids = identities(cfg.num_tracks, d, ident);

  SyntheticVideo out;
  out.features.stride = cfg.stride;
  out.features.source_h = h * cfg.stride;
  out.features.source_w = w * cfg.stride;
  VideoAnnotation& ann = out.annotation;
  ann.id = synthetic_video_id(index);
  ann.height = out.features.source_h;
  ann.width = out.features.source_w;
  ann.num_frames = cfg.num_frames;
  ann.tracks.resize(cfg.num_tracks);
  for (auto& t : ann.tracks) {
    t.points.resize(cfg.num_frames);
    t.visible.resize(cfg.num_frames);
  }

  const double noise_scale = cfg.noise / std::sqrt(static_cast<double>(d));
  std::vector<char> taken(static_cast<std::size_t>(h) * w);
  for (int t = 0; t < cfg.num_frames; ++t) {
    Grid2D frame(d, h, w);
    if (cfg.noise > 0.0) {
      for (double& v : frame.data()) v = noise_scale * noise.normal();
    }
    std::fill(taken.begin(), taken.end(), 0);
    for (int k = 0; k < cfg.num_tracks; ++k) {
      Point2D pos{paths[k][t].x, paths[k][t].y};
      if (!cfg.subcell) {
        const auto [cx, cy] = free_cell(static_cast<int>(std::lround(pos.x)),
                                        static_cast<int>(std::lround(pos.y)), h, w, taken);
        taken[static_cast<std::size_t>(cy) * w + cx] = 1;
        pos = {static_cast<double>(cx), static_cast<double>(cy)};
      }
      ann.tracks[k].points[t] = grid_to_source(pos, ann.height, ann.width, h, w);
      ann.tracks[k].visible[t] = vis[k][t];
      if (!vis[k][t]) continue;
      const BilinearTaps taps = bilinear_taps(h, w, pos);
      const struct {
        int x, y;
        double weight;
      } splat[4] = {{taps.x0, taps.y0, (1 - taps.wx) * (1 - taps.wy)},
                    {taps.x1, taps.y0, taps.wx * (1 - taps.wy)},
                    {taps.x0, taps.y1, (1 - taps.wx) * taps.wy},
                    {taps.x1, taps.y1, taps.wx * taps.wy}};
      for (const auto& s : splat) {
        if (s.weight == 0.0) continue;
        for (int c = 0; c < d; ++c) frame.at(c, s.y, s.x) += s.weight * ids[k][c];
      }
    }
    out.features.frames.push_back(std::move(frame));
  }
  return out;
}

SyntheticDataset synth_generate(const SyntheticConfig& config) {
  config.validate();
  SyntheticDataset ds;
  for (int i = 0; i < config.num_videos; ++i) {
    SyntheticVideo v = synth_generate_video(config, i);
    ds.videos.push_back(std::move(v.features));
    ds.annotations.videos.push_back(std::move(v.annotation));
  }
  return ds;
}

void ImageSynthConfig::validate() const {
  if (num_videos < 1 || num_frames < 1 || num_tracks < 1 || resolution < 4 || sprite_size < 1) {
    throw InvalidConfig("image synthetic config sizes must be positive");
  }
  if (sprite_size >= resolution) throw InvalidConfig("sprite_size must be below resolution");
  if (num_tracks > resolution * resolution) throw InvalidConfig("more tracks than pixels");
  if (!(noise >= 0.0) || !(jitter >= 0.0) || !(background_contrast >= 0.0)) {
    throw InvalidConfig("noise, jitter and background_contrast must be >= 0");
  }
  if (!(occlusion_rate >= 0.0 && occlusion_rate <= 1.0)) {
    throw InvalidConfig("occlusion_rate must lie in [0, 1]");
  }
  if (!(max_speed >= 0.0) || !(acceleration >= 0.0)) {
    throw InvalidConfig("motion parameters must be >= 0");
  }
}

SyntheticVideo synth_generate_image_video(const ImageSynthConfig& cfg, int index) {
  cfg.validate();
  const int r = cfg.resolution;
  const int s = cfg.sprite_size;
  const double half = 0.5 * s;

  CounterRng motion = stream_rng(cfg.seed, index, kMotion);
  CounterRng occl = stream_rng(cfg.seed, index, kOcclusion);
  CounterRng noise = stream_rng(cfg.seed, index, kNoise);
  CounterRng bg_rng = stream_rng(cfg.seed, index, kBackground);
  CounterRng sprite_rng = stream_rng(cfg.seed, index, kSprites);
  CounterRng photo = stream_rng(cfg.seed, index, kPhotometric);

  // Smooth background: coarse random field upsampled bilinearly.
  const int coarse = std::max(2, r / 8);
  Grid2D low(3, coarse, coarse);
  for (double& v : low.data()) v = bg_rng.uniform(-0.5, 0.5);
  Grid2D background = resize_bilinear(low, r, r);
  for (double& v : background.data()) v = cfg.background_contrast * v;

  // Sprite appearance: a base colour modulated by a random two-tone pattern.
  std::vector<std::array<double, 3>> colours(cfg.num_tracks);
  std::vector<std::vector<double>> patterns(cfg.num_tracks, std::vector<double>(s * s));
  for (int k = 0; k < cfg.num_tracks; ++k) {
    for (double& c : colours[k]) c = sprite_rng.uniform(-1.0, 1.0);
    for (double& p : patterns[k]) p = sprite_rng.uniform() < 0.5 ? 0.55 : 1.0;
  }

  const auto paths = simulate(cfg.num_tracks, cfg.num_frames, half, r - half, half, r - half,
                              cfg.max_speed, cfg.acceleration, motion);
  const auto vis = sample_visibility(cfg.num_tracks, cfg.num_frames, cfg.occlusion_rate, occl);

  SyntheticVideo out;
  out.features.stride = 1;
  out.features.source_h = r;
  out.features.source_w = r;
  VideoAnnotation& ann = out.annotation;
  ann.id = synthetic_video_id(index);
  ann.height = r;
  ann.width = r;
  ann.num_frames = cfg.num_frames;
  ann.tracks.resize(cfg.num_tracks);

  for (int t = 0; t < cfg.num_frames; ++t) {
    Grid2D img = background;
    for (int k = 0; k < cfg.num_tracks; ++k) {
      const double cx = paths[k][t].x;
      const double cy = paths[k][t].y;
      ann.tracks[k].points.push_back({cx, cy});
      ann.tracks[k].visible.push_back(vis[k][t]);
      if (!vis[k][t]) continue;
      const int x_lo = std::max(0, static_cast<int>(std::floor(cx - half)));
      const int x_hi = std::min(r - 1, static_cast<int>(std::ceil(cx + half)));
      const int y_lo = std::max(0, static_cast<int>(std::floor(cy - half)));
      const int y_hi = std::min(r - 1, static_cast<int>(std::ceil(cy + half)));
      for (int py = y_lo; py <= y_hi; ++py) {
        // Pixel py spans [py, py + 1); coverage of the sprite's extent.
        const double cov_y = std::clamp(std::min(py + 1.0, cy + half) - std::max(1.0 * py, cy - half), 0.0, 1.0);
        if (cov_y <= 0.0) continue;
        const int v = std::clamp(static_cast<int>(std::floor(py + 0.5 - (cy - half))), 0, s - 1);
        for (int px = x_lo; px <= x_hi; ++px) {
          const double cov_x = std::clamp(std::min(px + 1.0, cx + half) - std::max(1.0 * px, cx - half), 0.0, 1.0);
          const double cov = cov_x * cov_y;
          if (cov <= 0.0) continue;
          const int u = std::clamp(static_cast<int>(std::floor(px + 0.5 - (cx - half))), 0, s - 1);
          const double tone = patterns[k][v * s + u];
          for (int c = 0; c < 3; ++c) {
            img.at(c, py, px) = (1.0 - cov) * img.at(c, py, px) + cov * colours[k][c] * tone;
          }
        }
      }
    }
    for (int c = 0; c < 3; ++c) {
      const double gain = 1.0 + cfg.jitter * photo.uniform(-1.0, 1.0);
      const double bias = 0.25 * cfg.jitter * photo.uniform(-1.0, 1.0);
      for (double& v : img.plane(c)) v = gain * v + bias;
    }
    if (cfg.noise > 0.0) {
      for (double& v : img.data()) v += cfg.noise * noise.normal();
    }
    out.features.frames.push_back(std::move(img));
  }
  return out;
}

SyntheticDataset synth_generate_images(const ImageSynthConfig& config) {
  config.validate();
  SyntheticDataset ds;
  for (int i = 0; i < config.num_videos; ++i) {
    SyntheticVideo v = synth_generate_image_video(config, i);
    ds.videos.push_back(std::move(v.features));
    ds.annotations.videos.push_back(std::move(v.annotation));
  }
  return ds;
}

}  // namespace ptrack
