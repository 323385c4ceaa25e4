#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ptrack/grid.hpp"

namespace ptrack {

/// 3x3 convolution, stride 1, zero padding, spatial size preserved.
/// Weights are laid out [out][in][ky][kx].
struct Conv3x3 {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  Conv3x3() = default;
  Conv3x3(int in, int out)
      : in_channels(in), out_channels(out), weight(static_cast<std::size_t>(in) * out * 9, 0.0),
        bias(out, 0.0) {}

  std::size_t parameter_count() const noexcept { return weight.size() + bias.size(); }
  double& w(int o, int i, int ky, int kx) { return weight[((o * in_channels + i) * 3 + ky) * 3 + kx]; }

  friend bool operator==(const Conv3x3&, const Conv3x3&) = default;
};

Grid2D conv3x3_forward(const Conv3x3& conv, const Grid2D& input);

/// Heads over a one-channel correlation map (default-constructed values are
/// all zero):
///   shared encoder   conv 1->16, relu, conv 16->32
///   point branch     relu, conv 32->1, soft-argmax
///   occlusion branch relu, conv 32->1, spatial mean -> logit
struct ProbeParams {
  static constexpr std::size_t kParameterCount = 5378;

  Conv3x3 encoder1{1, 16};
  Conv3x3 encoder2{16, 32};
  Conv3x3 point_head{32, 1};
  Conv3x3 occlusion_head{32, 1};

  std::size_t parameter_count() const noexcept;
  /// Concatenation [encoder1.w, encoder1.b, encoder2.w, encoder2.b, point.w,
  /// point.b, occlusion.w, occlusion.b]; the layout used by checkpoints and
  /// the optimizer.
  std::vector<double> flatten() const;
  void assign(std::span<const double> values);

  friend bool operator==(const ProbeParams&, const ProbeParams&) = default;
};

/// Weights uniform in +-sqrt(6 / fan_in) (fan_in = 9 * in_channels), biases zero.
ProbeParams probe_init(std::uint64_t seed);

struct ProbeOutput {
  Point2D point;                 // feature-grid units
  double occlusion_logit = 0.0;  // > 0 leans occluded
  Grid2D heatmap;                // logits before soft-argmax
};

/// Activations kept by probe_forward for probe_backward.
struct ProbeCache {
  Grid2D input;
  Grid2D pre1;  // encoder1 output before relu
  Grid2D act1;
  Grid2D pre2;  // encoder output before the branch relu
  Grid2D act2;
  Grid2D softmax;
  Point2D point;
  bool valid = false;
};

ProbeOutput probe_forward(const Grid2D& correlation, const ProbeParams& params,
                          ProbeCache* cache = nullptr);

/// Accumulates parameter gradients into `grad` given upstream gradients of the
/// predicted point and occlusion logit. Writes the input-map gradient to
/// `d_input` when non-null.
void probe_backward(const ProbeCache& cache, const ProbeParams& params, Point2D d_point,
                    double d_logit, ProbeParams& grad, Grid2D* d_input = nullptr);

/// Per-coordinate Huber loss, summed over x and y.
double huber_loss(Point2D pred, Point2D gt, double delta);
Point2D huber_grad(Point2D pred, Point2D gt, double delta);

/// Sigmoid cross-entropy; `occluded` is the positive label.
double bce_loss(double logit, bool occluded);
double bce_grad(double logit, bool occluded);

double sigmoid(double x);

struct LossWeights {
  double point = 1.0;
  double occlusion = 1.0;
  double huber_delta = 1.0;
};

struct ProbeSample {
  std::reference_wrapper<const Grid2D> map;
  Point2D target;  // feature-grid units
  bool occluded = false;
};

struct ProbeLoss {
  double loss = 0.0;
  double point_loss = 0.0;      // mean Huber over visible samples
  double occlusion_loss = 0.0;  // mean BCE over all samples
  ProbeParams grad;
};

/// loss = w_point * mean_visible(huber) + w_occ * mean(bce) and its gradient.
/// Items are reduced in order, so results do not depend on scheduling.
ProbeLoss probe_loss_and_grad(std::span<const ProbeSample> batch, const ProbeParams& params,
                              const LossWeights& weights = {});

}  // namespace ptrack
