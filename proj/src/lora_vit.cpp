#include "ptrack/lora_vit.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ptrack/error.hpp"
#include "ptrack/rng.hpp"

namespace ptrack {

namespace {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

constexpr double kNormEps = 1e-6;

MatrixXd gaussian(int rows, int cols, double stddev, CounterRng& rng) {
  MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = stddev * rng.normal();
  }
  return m;
}

Linear make_linear(int in, int out, CounterRng& rng) {
  return {gaussian(out, in, 1.0 / std::sqrt(static_cast<double>(in)), rng), VectorXd::Zero(out)};
}

LayerNorm make_norm(int d) { return {VectorXd::Ones(d), VectorXd::Zero(d)}; }

MatrixXd apply(const Linear& l, const MatrixXd& x) {
  MatrixXd y = x * l.weight.transpose();
  y.rowwise() += l.bias.transpose();
  return y;
}

bool has_adapter(const LoRAAdapter& a) { return a.a.rows() > 0; }

// Row-wise layer norm; keeps normalized values and reciprocal std for backward.
MatrixXd layer_norm(const MatrixXd& x, const LayerNorm& ln, MatrixXd& hat, VectorXd& rstd) {
  const Eigen::Index d = x.cols();
  hat.resize(x.rows(), d);
  rstd.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / static_cast<double>(d);
    rstd(r) = 1.0 / std::sqrt(var + kNormEps);
    hat.row(r) = (x.row(r).array() - mean) * rstd(r);
  }
  MatrixXd y = hat.array().rowwise() * ln.gamma.transpose().array();
  y.rowwise() += ln.beta.transpose();
  return y;
}

MatrixXd layer_norm_backward(const MatrixXd& dy, const LayerNorm& ln, const MatrixXd& hat,
                             const VectorXd& rstd) {
  const double d = static_cast<double>(dy.cols());
  MatrixXd dhat = dy.array().rowwise() * ln.gamma.transpose().array();
  MatrixXd dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dhat.row(r).sum() / d;
    const double m2 = dhat.row(r).dot(hat.row(r)) / d;
    dx.row(r) = rstd(r) * (dhat.row(r).array() - m1 - hat.row(r).array() * m2);
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

MatrixXd patchify(const Grid2D& image, const ViTConfig& cfg) {
  const int g = cfg.grid_size();
  const int p = cfg.patch_size;
  MatrixXd patches(cfg.num_patches(), cfg.patch_dim());
  for (int gy = 0; gy < g; ++gy) {
    for (int gx = 0; gx < g; ++gx) {
      const int row = gy * g + gx;
      int col = 0;
      for (int c = 0; c < cfg.in_channels; ++c) {
        for (int py = 0; py < p; ++py) {
          for (int px = 0; px < p; ++px) patches(row, col++) = image.at(c, gy * p + py, gx * p + px);
        }
      }
    }
  }
  return patches;
}

template <typename Fn>
void for_each_base_tensor(LoRAViTParams& p, Fn&& fn) {
  fn(p.patch_embed.weight);
  fn(p.patch_embed.bias);
  fn(p.cls_token);
  fn(p.pos_embed);
  for (ViTBlock& b : p.blocks) {
    fn(b.norm1.gamma);
    fn(b.norm1.beta);
    for (Linear* l : {&b.query, &b.key, &b.value, &b.proj}) {
      fn(l->weight);
      fn(l->bias);
    }
    fn(b.norm2.gamma);
    fn(b.norm2.beta);
    fn(b.fc1.weight);
    fn(b.fc1.bias);
    fn(b.fc2.weight);
    fn(b.fc2.bias);
  }
  fn(p.final_norm.gamma);
  fn(p.final_norm.beta);
}

template <typename Fn>
void for_each_adapter_tensor(LoRAViTParams& p, Fn&& fn) {
  for (ViTBlock& b : p.blocks) {
    fn(b.query_lora.a);
    fn(b.query_lora.b);
    fn(b.value_lora.a);
    fn(b.value_lora.b);
  }
}

template <typename Each>
std::vector<double> flatten_with(const LoRAViTParams& p, Each each) {
  std::vector<double> out;
  each(const_cast<LoRAViTParams&>(p), [&out](auto& m) {
    out.insert(out.end(), m.data(), m.data() + m.size());
  });
  return out;
}

template <typename Each>
void assign_with(LoRAViTParams& p, std::span<const double> values, Each each, const char* what) {
  std::size_t total = 0;
  each(p, [&total](auto& m) { total += static_cast<std::size_t>(m.size()); });
  if (total != values.size()) {
    throw InvalidInput(std::string(what) + " vector has " + std::to_string(values.size()) +
                       " entries, expected " + std::to_string(total));
  }
  std::size_t pos = 0;
  each(p, [&](auto& m) {
    std::copy_n(values.begin() + pos, m.size(), m.data());
    pos += static_cast<std::size_t>(m.size());
  });
}

}  // namespace

void ViTConfig::validate() const {
  if (patch_size < 1 || embed_dim < 1 || num_heads < 1 || num_blocks < 1 || mlp_ratio < 1 ||
      in_channels < 1 || input_resolution < 1) {
    throw InvalidConfig("ViT config fields must be positive");
  }
  if (embed_dim % num_heads != 0) throw InvalidConfig("embed_dim must be divisible by num_heads");
  if (input_resolution % patch_size != 0) {
    throw InvalidConfig("input_resolution must be divisible by patch_size");
  }
}

std::size_t LoRAViTParams::adapter_parameter_count() const noexcept {
  std::size_t n = 0;
  for (const ViTBlock& b : blocks) {
    n += b.query_lora.a.size() + b.query_lora.b.size() + b.value_lora.a.size() +
         b.value_lora.b.size();
  }
  return n;
}

std::size_t LoRAViTParams::base_parameter_count() const noexcept {
  std::size_t n = 0;
  for_each_base_tensor(const_cast<LoRAViTParams&>(*this),
                       [&n](auto& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

std::vector<double> LoRAViTParams::flatten_adapters() const {
  return flatten_with(*this, [](LoRAViTParams& p, auto fn) { for_each_adapter_tensor(p, fn); });
}

void LoRAViTParams::assign_adapters(std::span<const double> values) {
  assign_with(*this, values, [](LoRAViTParams& p, auto fn) { for_each_adapter_tensor(p, fn); },
              "adapter");
}

std::vector<double> LoRAViTParams::flatten_base() const {
  return flatten_with(*this, [](LoRAViTParams& p, auto fn) { for_each_base_tensor(p, fn); });
}

void LoRAViTParams::assign_base(std::span<const double> values) {
  assign_with(*this, values, [](LoRAViTParams& p, auto fn) { for_each_base_tensor(p, fn); },
              "base");
}

LoRAViTParams lora_vit_init(const ViTConfig& config, const LoRAConfig& lora, std::uint64_t seed) {
  config.validate();
  if (lora.rank < 1) throw InvalidConfig("LoRA rank must be >= 1");
  if (!(lora.alpha > 0.0)) throw InvalidConfig("LoRA alpha must be positive");
  const int d = config.embed_dim;

  LoRAViTParams p;
  p.config = config;
  p.lora = lora;
  CounterRng base(seed, 0x7669740000000000ULL);
  p.patch_embed = make_linear(config.patch_dim(), d, base);
  p.cls_token = gaussian(1, d, 0.02, base);
  p.pos_embed = gaussian(config.num_tokens(), d, 0.02, base);
  for (int i = 0; i < config.num_blocks; ++i) {
    ViTBlock b;
    b.norm1 = make_norm(d);
    b.query = make_linear(d, d, base);
    b.key = make_linear(d, d, base);
    b.value = make_linear(d, d, base);
    b.proj = make_linear(d, d, base);
    b.norm2 = make_norm(d);
    b.fc1 = make_linear(d, config.mlp_dim(), base);
    b.fc2 = make_linear(config.mlp_dim(), d, base);
    p.blocks.push_back(std::move(b));
  }
  p.final_norm = make_norm(d);

  CounterRng adapters(seed, 0x6c6f726100000000ULL);
  for (ViTBlock& b : p.blocks) {
    b.query_lora = {gaussian(lora.rank, d, 0.02, adapters), MatrixXd::Zero(d, lora.rank)};
    b.value_lora = {gaussian(lora.rank, d, 0.02, adapters), MatrixXd::Zero(d, lora.rank)};
  }
  return p;
}

MatrixXd lora_merge(const MatrixXd& w, const MatrixXd& a, const MatrixXd& b, double alpha,
                    int rank) {
  if (rank < 1 || a.rows() != rank || b.cols() != rank || b.rows() != w.rows() ||
      a.cols() != w.cols()) {
    throw InvalidInput("lora_merge: incompatible shapes");
  }
  MatrixXd merged = w;
  merged.noalias() += (alpha / rank) * (b * a);
  return merged;
}

LoRAViTParams merge_adapters(const LoRAViTParams& params) {
  LoRAViTParams out = params;
  const int r = params.lora.rank;
  for (ViTBlock& b : out.blocks) {
    b.query.weight = lora_merge(b.query.weight, b.query_lora.a, b.query_lora.b, params.lora.alpha, r);
    b.value.weight = lora_merge(b.value.weight, b.value_lora.a, b.value_lora.b, params.lora.alpha, r);
    b.query_lora.b.setZero();
    b.value_lora.b.setZero();
  }
  return out;
}

LoRAViTParams unmerge_adapters(const LoRAViTParams& merged, const LoRAViTParams& adapters) {
  if (merged.blocks.size() != adapters.blocks.size() || !(merged.config == adapters.config)) {
    throw InvalidInput("unmerge_adapters: parameter sets differ in architecture");
  }
  LoRAViTParams out = merged;
  const double s = adapters.lora.scale();
  for (std::size_t i = 0; i < out.blocks.size(); ++i) {
    const ViTBlock& src = adapters.blocks[i];
    ViTBlock& b = out.blocks[i];
    b.query.weight.noalias() -= s * (src.query_lora.b * src.query_lora.a);
    b.value.weight.noalias() -= s * (src.value_lora.b * src.value_lora.a);
    b.query_lora = src.query_lora;
    b.value_lora = src.value_lora;
  }
  out.lora = adapters.lora;
  return out;
}

Grid2D vit_forward(const Grid2D& image, const LoRAViTParams& params, VitCache* cache) {
  const ViTConfig& cfg = params.config;
  if (image.channels() != cfg.in_channels || image.height() != cfg.input_resolution ||
      image.width() != cfg.input_resolution) {
    throw InvalidInput("vit_forward: expected a " + std::to_string(cfg.in_channels) + "x" +
                       std::to_string(cfg.input_resolution) + "x" +
                       std::to_string(cfg.input_resolution) + " image");
  }
  const int n = cfg.num_tokens();
  const int d = cfg.embed_dim;
  const int heads = cfg.num_heads;
  const int hd = cfg.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const double s = params.lora.scale();

  MatrixXd x(n, d);
  x.row(0) = params.cls_token;
  x.bottomRows(n - 1) = apply(params.patch_embed, patchify(image, cfg));
  x += params.pos_embed;

  VitCache local;
  VitCache& c = cache != nullptr ? *cache : local;
  c.valid = false;
  c.blocks.resize(params.blocks.size());

  for (std::size_t bi = 0; bi < params.blocks.size(); ++bi) {
    const ViTBlock& blk = params.blocks[bi];
    BlockCache& bc = c.blocks[bi];
    bc.input = x;
    bc.h1 = layer_norm(x, blk.norm1, bc.norm1_hat, bc.norm1_rstd);
    bc.q = apply(blk.query, bc.h1);
    bc.k = apply(blk.key, bc.h1);
    bc.v = apply(blk.value, bc.h1);
    if (has_adapter(blk.query_lora)) {
      bc.q_low = bc.h1 * blk.query_lora.a.transpose();
      bc.q.noalias() += s * (bc.q_low * blk.query_lora.b.transpose());
    }
    if (has_adapter(blk.value_lora)) {
      bc.v_low = bc.h1 * blk.value_lora.a.transpose();
      bc.v.noalias() += s * (bc.v_low * blk.value_lora.b.transpose());
    }
    bc.attn.resize(heads);
    bc.context.resize(n, d);
    for (int h = 0; h < heads; ++h) {
      MatrixXd logits = att_scale * (bc.q.middleCols(h * hd, hd) * bc.k.middleCols(h * hd, hd).transpose());
      for (int r = 0; r < n; ++r) {
        const double peak = logits.row(r).maxCoeff();
        logits.row(r) = (logits.row(r).array() - peak).exp();
        logits.row(r) /= logits.row(r).sum();
      }
      bc.context.middleCols(h * hd, hd).noalias() = logits * bc.v.middleCols(h * hd, hd);
      bc.attn[h] = std::move(logits);
    }
    bc.mid = x + apply(blk.proj, bc.context);
    bc.h2 = layer_norm(bc.mid, blk.norm2, bc.norm2_hat, bc.norm2_rstd);
    bc.fc1_out = apply(blk.fc1, bc.h2);
    const MatrixXd act = bc.fc1_out.unaryExpr([](double v) { return gelu(v); });
    x = bc.mid + apply(blk.fc2, act);
  }
  const MatrixXd out = layer_norm(x, params.final_norm, c.final_hat, c.final_rstd);
  c.valid = true;

  const int g = cfg.grid_size();
  Grid2D grid(d, g, g);
  for (int t = 1; t < n; ++t) {
    const int gy = (t - 1) / g;
    const int gx = (t - 1) % g;
    for (int ch = 0; ch < d; ++ch) grid.at(ch, gy, gx) = out(t, ch);
  }
  return grid;
}

void vit_backward(const Grid2D& d_tokens, const LoRAViTParams& params, const VitCache& cache,
                  std::span<double> adapter_grad) {
  if (!cache.valid || cache.blocks.size() != params.blocks.size()) {
    throw InvalidState("vit_backward: forward cache missing");
  }
  const ViTConfig& cfg = params.config;
  const int g = cfg.grid_size();
  const int n = cfg.num_tokens();
  const int d = cfg.embed_dim;
  if (d_tokens.channels() != d || d_tokens.height() != g || d_tokens.width() != g) {
    throw InvalidInput("vit_backward: gradient shape does not match the token grid");
  }
  if (adapter_grad.size() != params.adapter_parameter_count()) {
    throw InvalidInput("vit_backward: adapter gradient buffer has the wrong size");
  }
  const int heads = cfg.num_heads;
  const int hd = cfg.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const double s = params.lora.scale();

  MatrixXd dy = MatrixXd::Zero(n, d);
  for (int t = 1; t < n; ++t) {
    for (int ch = 0; ch < d; ++ch) dy(t, ch) = d_tokens.at(ch, (t - 1) / g, (t - 1) % g);
  }
  MatrixXd dx = layer_norm_backward(dy, params.final_norm, cache.final_hat, cache.final_rstd);

  // Offsets of each block's adapter gradients inside the flat buffer.
  std::vector<std::size_t> offsets(params.blocks.size());
  {
    std::size_t pos = 0;
    for (std::size_t bi = 0; bi < params.blocks.size(); ++bi) {
      offsets[bi] = pos;
      const ViTBlock& b = params.blocks[bi];
      pos += b.query_lora.a.size() + b.query_lora.b.size() + b.value_lora.a.size() +
             b.value_lora.b.size();
    }
  }

  for (std::size_t bi = params.blocks.size(); bi-- > 0;) {
    const ViTBlock& blk = params.blocks[bi];
    const BlockCache& bc = cache.blocks[bi];

    // MLP branch.
    MatrixXd d_act = dx * blk.fc2.weight;
    const MatrixXd d_fc1 = d_act.array() * bc.fc1_out.unaryExpr([](double v) { return gelu_grad(v); }).array();
    const MatrixXd d_h2 = d_fc1 * blk.fc1.weight;
    MatrixXd d_mid = dx + layer_norm_backward(d_h2, blk.norm2, bc.norm2_hat, bc.norm2_rstd);

    // Attention branch.
    const MatrixXd d_ctx = d_mid * blk.proj.weight;
    MatrixXd dq(n, d), dk(n, d), dv(n, d);
    for (int h = 0; h < heads; ++h) {
      const MatrixXd& p = bc.attn[h];
      const auto dc = d_ctx.middleCols(h * hd, hd);
      const MatrixXd dp = dc * bc.v.middleCols(h * hd, hd).transpose();
      dv.middleCols(h * hd, hd).noalias() = p.transpose() * dc;
      MatrixXd ds = p.array() * (dp.colwise() - (dp.array() * p.array()).rowwise().sum().matrix()).array();
      ds *= att_scale;
      dq.middleCols(h * hd, hd).noalias() = ds * bc.k.middleCols(h * hd, hd);
      dk.middleCols(h * hd, hd).noalias() = ds.transpose() * bc.q.middleCols(h * hd, hd);
    }

    MatrixXd d_h1 = dq * blk.query.weight + dk * blk.key.weight + dv * blk.value.weight;
    double* gbuf = adapter_grad.data() + offsets[bi];
    auto adapter_backward = [&](const LoRAAdapter& ad, const MatrixXd& low, const MatrixXd& dout) {
      if (!has_adapter(ad)) return;
      const int r = static_cast<int>(ad.a.rows());
      Eigen::Map<MatrixXd> ga(gbuf, r, ad.a.cols());
      gbuf += ad.a.size();
      Eigen::Map<MatrixXd> gb(gbuf, ad.b.rows(), r);
      gbuf += ad.b.size();
      const MatrixXd d_low = s * (dout * ad.b);  // n x r
      gb.noalias() += s * (dout.transpose() * low);
      ga.noalias() += d_low.transpose() * bc.h1;
      d_h1.noalias() += d_low * ad.a;
    };
    adapter_backward(blk.query_lora, bc.q_low, dq);
    adapter_backward(blk.value_lora, bc.v_low, dv);

    dx = d_mid + layer_norm_backward(d_h1, blk.norm1, bc.norm1_hat, bc.norm1_rstd);
  }
}

}  // namespace ptrack
