#pragma once

#include <cstdint>
#include <vector>

#include "ptrack/annotations.hpp"
#include "ptrack/tracker.hpp"

namespace ptrack {

/// Feature-space benchmark. Every track owns a unit identity vector (mutually
/// orthonormal when num_tracks <= feature_dim) written into the cells at its
/// ground-truth position; every cell also receives noise * g with
/// g ~ N(0, I / feature_dim). Occluded frames omit the identity.
struct SyntheticConfig {
  int num_videos = 8;
  int num_frames = 24;
  int num_tracks = 8;
  int grid_h = 32;
  int grid_w = 32;
  int feature_dim = 32;
  int stride = 8;  // source resolution = grid * stride
  // Motion: velocity random walk (cells / frame), reflected at the borders.
  double max_speed = 1.0;
  double acceleration = 0.3;
  // false: positions snap to cell centres (one-hot identity); true:
  // continuous positions, bilinearly splatted over the four nearest cells.
  bool subcell = false;
  double occlusion_rate = 0.0;  // per frame after the first
  double noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticVideo {
  FeatureVideo features;
  VideoAnnotation annotation;
};

/// Video `index` of the benchmark; a pure function of (config, index).
SyntheticVideo synth_generate_video(const SyntheticConfig& config, int index);

struct SyntheticDataset {
  std::vector<FeatureVideo> videos;
  AnnotationSet annotations;
};

SyntheticDataset synth_generate(const SyntheticConfig& config);

/// Image-space benchmark for backbone adaptation: RGB frames with a smooth
/// static background, one textured square sprite per track moving with the
/// same random-walk model (pixels / frame), per-frame photometric gain/bias
/// jitter and pixel noise. Pixel values are centred on 0 (roughly [-1, 1]),
/// the range a normalised ViT input has.
struct ImageSynthConfig {
  int num_videos = 8;
  int num_frames = 8;
  int num_tracks = 8;
  int resolution = 64;
  int sprite_size = 6;
  double max_speed = 3.0;
  double acceleration = 1.0;
  double occlusion_rate = 0.0;
  double noise = 0.05;
  double jitter = 0.2;
  double background_contrast = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Frames are stored as a FeatureVideo with three channels and stride 1.
SyntheticVideo synth_generate_image_video(const ImageSynthConfig& config, int index);
SyntheticDataset synth_generate_images(const ImageSynthConfig& config);

std::string synthetic_video_id(int index);

}  // namespace ptrack
