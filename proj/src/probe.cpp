#include "ptrack/probe.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "ptrack/error.hpp"
#include "ptrack/rng.hpp"

namespace ptrack {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// Patch matrix: row (i, ky, kx), column (y, x) holds input[i][y + ky - 1][x + kx - 1]
// or 0 outside the grid.
RowMatrix im2col(const Grid2D& input) {
  const int h = input.height();
  const int w = input.width();
  RowMatrix cols = RowMatrix::Zero(input.channels() * 9, h * w);
  for (int i = 0; i < input.channels(); ++i) {
    const auto src = input.plane(i);
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = cols.row((i * 3 + ky) * 3 + kx).data();
        for (int y = std::max(0, 1 - ky); y < std::min(h, h + 1 - ky); ++y) {
          const double* in = src.data() + static_cast<std::size_t>(y + ky - 1) * w + (kx - 1);
          for (int x = std::max(0, 1 - kx); x < std::min(w, w + 1 - kx); ++x) row[y * w + x] = in[x];
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: accumulates patch gradients back onto the grid.
void col2im(const RowMatrix& cols, Grid2D& d_input) {
  const int h = d_input.height();
  const int w = d_input.width();
  for (int i = 0; i < d_input.channels(); ++i) {
    auto dst = d_input.plane(i);
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = cols.row((i * 3 + ky) * 3 + kx).data();
        for (int y = std::max(0, 1 - ky); y < std::min(h, h + 1 - ky); ++y) {
          double* out = dst.data() + static_cast<std::size_t>(y + ky - 1) * w + (kx - 1);
          for (int x = std::max(0, 1 - kx); x < std::min(w, w + 1 - kx); ++x) out[x] += row[y * w + x];
        }
      }
    }
  }
}

void conv_accumulate(const Conv3x3& conv, const Grid2D& input, Grid2D& out) {
  const long hw = static_cast<long>(input.plane_size());
  const ConstMap weight(conv.weight.data(), conv.out_channels, conv.in_channels * 9);
  MutMap dst(out.data().data(), conv.out_channels, hw);
  dst.noalias() = weight * im2col(input);
  for (int o = 0; o < conv.out_channels; ++o) dst.row(o).array() += conv.bias[o];
}

// d_input = conv^T(d_out); grad.weight/bias += correlation of d_out with input.
void conv_backward(const Conv3x3& conv, const Grid2D& input, const Grid2D& d_out, Conv3x3& grad,
                   Grid2D* d_input) {
  const long hw = static_cast<long>(input.plane_size());
  const ConstMap weight(conv.weight.data(), conv.out_channels, conv.in_channels * 9);
  const ConstMap g(d_out.data().data(), conv.out_channels, hw);
  MutMap gw(grad.weight.data(), conv.out_channels, conv.in_channels * 9);
  const RowMatrix cols = im2col(input);
  gw.noalias() += g * cols.transpose();
  for (int o = 0; o < conv.out_channels; ++o) grad.bias[o] += g.row(o).sum();
  if (d_input != nullptr) {
    const RowMatrix d_cols = weight.transpose() * g;
    col2im(d_cols, *d_input);
  }
}

Grid2D relu(const Grid2D& x) {
  Grid2D out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

void relu_backward(const Grid2D& pre, Grid2D& grad) {
  auto g = grad.data();
  const auto p = pre.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(p[i] > 0.0)) g[i] = 0.0;
  }
}

void init_conv(Conv3x3& conv, CounterRng& rng) {
  const double bound = std::sqrt(6.0 / (9.0 * conv.in_channels));
  for (double& v : conv.weight) v = rng.uniform(-bound, bound);
  std::fill(conv.bias.begin(), conv.bias.end(), 0.0);
}

}  // namespace

Grid2D conv3x3_forward(const Conv3x3& conv, const Grid2D& input) {
  if (input.channels() != conv.in_channels) {
    throw InvalidInput("conv3x3: expected " + std::to_string(conv.in_channels) +
                       " input channels, got " + std::to_string(input.channels()));
  }
  Grid2D out(conv.out_channels, input.height(), input.width());
  conv_accumulate(conv, input, out);
  return out;
}

std::size_t ProbeParams::parameter_count() const noexcept {
  return encoder1.parameter_count() + encoder2.parameter_count() + point_head.parameter_count() +
         occlusion_head.parameter_count();
}

std::vector<double> ProbeParams::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const Conv3x3* c : {&encoder1, &encoder2, &point_head, &occlusion_head}) {
    out.insert(out.end(), c->weight.begin(), c->weight.end());
    out.insert(out.end(), c->bias.begin(), c->bias.end());
  }
  return out;
}

void ProbeParams::assign(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw InvalidInput("probe parameter vector has " + std::to_string(values.size()) +
                       " entries, expected " + std::to_string(parameter_count()));
  }
  std::size_t pos = 0;
  for (Conv3x3* c : {&encoder1, &encoder2, &point_head, &occlusion_head}) {
    std::copy_n(values.begin() + pos, c->weight.size(), c->weight.begin());
    pos += c->weight.size();
    std::copy_n(values.begin() + pos, c->bias.size(), c->bias.begin());
    pos += c->bias.size();
  }
}

ProbeParams probe_init(std::uint64_t seed) {
  ProbeParams p;
  std::uint64_t stream = 0;
  for (Conv3x3* c : {&p.encoder1, &p.encoder2, &p.point_head, &p.occlusion_head}) {
    CounterRng rng(seed, stream++);
    init_conv(*c, rng);
  }
  return p;
}

ProbeOutput probe_forward(const Grid2D& correlation, const ProbeParams& params, ProbeCache* cache) {
  if (correlation.empty() || correlation.channels() != 1) {
    throw InvalidInput("probe_forward: expected a one-channel correlation map");
  }
  Grid2D pre1 = conv3x3_forward(params.encoder1, correlation);
  Grid2D act1 = relu(pre1);
  Grid2D pre2 = conv3x3_forward(params.encoder2, act1);
  Grid2D act2 = relu(pre2);

  ProbeOutput out;
  out.heatmap = conv3x3_forward(params.point_head, act2);
  const Grid2D occ = conv3x3_forward(params.occlusion_head, act2);
  double total = 0.0;
  for (double v : occ.data()) total += v;
  out.occlusion_logit = total / static_cast<double>(occ.size());

  Grid2D prob = softmax2d(out.heatmap, 1.0);
  double ex = 0.0;
  double ey = 0.0;
  for (int y = 0; y < prob.height(); ++y) {
    for (int x = 0; x < prob.width(); ++x) {
      ex += prob.at(0, y, x) * x;
      ey += prob.at(0, y, x) * y;
    }
  }
  out.point = {ex, ey};

  if (cache != nullptr) {
    cache->input = correlation;
    cache->pre1 = std::move(pre1);
    cache->act1 = std::move(act1);
    cache->pre2 = std::move(pre2);
    cache->act2 = std::move(act2);
    cache->softmax = std::move(prob);
    cache->point = out.point;
    cache->valid = true;
  }
  return out;
}

void probe_backward(const ProbeCache& cache, const ProbeParams& params, Point2D d_point,
                    double d_logit, ProbeParams& grad, Grid2D* d_input) {
  if (!cache.valid) throw InvalidState("probe_backward: forward cache missing");
  const int h = cache.input.height();
  const int w = cache.input.width();

  // Soft-argmax: d heat_k = P_k * ((x_k - x) dx + (y_k - y) dy).
  Grid2D d_heat(1, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      d_heat.at(0, y, x) = cache.softmax.at(0, y, x) *
                           ((x - cache.point.x) * d_point.x + (y - cache.point.y) * d_point.y);
    }
  }
  Grid2D d_occ(1, h, w, d_logit / static_cast<double>(h * w));

  Grid2D d_act2(params.encoder2.out_channels, h, w);
  conv_backward(params.point_head, cache.act2, d_heat, grad.point_head, &d_act2);
  conv_backward(params.occlusion_head, cache.act2, d_occ, grad.occlusion_head, &d_act2);
  relu_backward(cache.pre2, d_act2);

  Grid2D d_act1(params.encoder1.out_channels, h, w);
  conv_backward(params.encoder2, cache.act1, d_act2, grad.encoder2, &d_act1);
  relu_backward(cache.pre1, d_act1);

  if (d_input != nullptr) *d_input = Grid2D(1, h, w);
  conv_backward(params.encoder1, cache.input, d_act1, grad.encoder1, d_input);
}

double huber_loss(Point2D pred, Point2D gt, double delta) {
  auto term = [delta](double e) {
    const double a = std::abs(e);
    return a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
  };
  return term(pred.x - gt.x) + term(pred.y - gt.y);
}

Point2D huber_grad(Point2D pred, Point2D gt, double delta) {
  auto term = [delta](double e) { return std::abs(e) <= delta ? e : (e > 0 ? delta : -delta); };
  return {term(pred.x - gt.x), term(pred.y - gt.y)};
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double bce_loss(double logit, bool occluded) {
  // max(z, 0) - z*y + log(1 + exp(-|z|))
  const double y = occluded ? 1.0 : 0.0;
  return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
}

double bce_grad(double logit, bool occluded) { return sigmoid(logit) - (occluded ? 1.0 : 0.0); }

ProbeLoss probe_loss_and_grad(std::span<const ProbeSample> batch, const ProbeParams& params,
                              const LossWeights& weights) {
  if (batch.empty()) throw InvalidInput("probe_loss_and_grad: empty batch");
  if (!(weights.huber_delta > 0.0)) throw InvalidInput("Huber delta must be positive");
  std::size_t visible = 0;
  for (const ProbeSample& s : batch) visible += s.occluded ? 0 : 1;

  ProbeLoss result;
  ProbeCache cache;
  const double n = static_cast<double>(batch.size());
  for (const ProbeSample& s : batch) {
    const ProbeOutput out = probe_forward(s.map.get(), params, &cache);
    Point2D d_point{0.0, 0.0};
    if (!s.occluded) {
      result.point_loss += huber_loss(out.point, s.target, weights.huber_delta) / visible;
      const Point2D g = huber_grad(out.point, s.target, weights.huber_delta);
      d_point = {weights.point * g.x / visible, weights.point * g.y / visible};
    }
    result.occlusion_loss += bce_loss(out.occlusion_logit, s.occluded) / n;
    const double d_logit = weights.occlusion * bce_grad(out.occlusion_logit, s.occluded) / n;
    probe_backward(cache, params, d_point, d_logit, result.grad);
  }
  result.loss = weights.point * result.point_loss + weights.occlusion * result.occlusion_loss;
  return result;
}

}  // namespace ptrack
