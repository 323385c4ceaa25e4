#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ptrack/grid.hpp"

namespace ptrack {

/// Pre-norm Vision Transformer shape. Defaults are the desk-scale model:
/// 64x64 input, patch 8 (8x8 tokens), width 64, 4 heads, 4 blocks.
struct ViTConfig {
  int patch_size = 8;
  int embed_dim = 64;
  int num_heads = 4;
  int num_blocks = 4;
  int input_resolution = 64;
  int mlp_ratio = 4;
  int in_channels = 3;

  void validate() const;
  int grid_size() const noexcept { return input_resolution / patch_size; }
  int num_patches() const noexcept { return grid_size() * grid_size(); }
  int num_tokens() const noexcept { return num_patches() + 1; }  // + class token
  int patch_dim() const noexcept { return in_channels * patch_size * patch_size; }
  int head_dim() const noexcept { return embed_dim / num_heads; }
  int mlp_dim() const noexcept { return embed_dim * mlp_ratio; }

  friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

struct LoRAConfig {
  int rank = 16;
  double alpha = 16.0;  // scale alpha / rank; alpha = rank gives scale 1

  double scale() const noexcept { return alpha / rank; }
  friend bool operator==(const LoRAConfig&, const LoRAConfig&) = default;
};

/// y = x * weight^T + bias, tokens as rows.
struct Linear {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

struct LayerNorm {
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
};

/// Low-rank update (alpha / r) * b * a added to a frozen projection.
struct LoRAAdapter {
  Eigen::MatrixXd a;  // r x in
  Eigen::MatrixXd b;  // out x r
};

struct ViTBlock {
  LayerNorm norm1;
  Linear query, key, value, proj;
  LayerNorm norm2;
  Linear fc1, fc2;
  LoRAAdapter query_lora;
  LoRAAdapter value_lora;
};

struct LoRAViTParams {
  ViTConfig config;
  LoRAConfig lora;
  Linear patch_embed;
  Eigen::RowVectorXd cls_token;
  Eigen::MatrixXd pos_embed;  // num_tokens x embed_dim
  std::vector<ViTBlock> blocks;
  LayerNorm final_norm;

  /// num_blocks * 2 * r * (d_in + d_out).
  std::size_t adapter_parameter_count() const noexcept;
  std::size_t base_parameter_count() const noexcept;

  /// Adapter layout per block: query a, query b, value a, value b, each
  /// column-major.
  std::vector<double> flatten_adapters() const;
  void assign_adapters(std::span<const double> values);
  std::vector<double> flatten_base() const;
  void assign_base(std::span<const double> values);
};

/// Base weights ~ N(0, 1/fan_in) for projections, N(0, 0.02^2) for class and
/// positional embeddings, unit layer-norm gains, zero biases. Adapter a ~
/// N(0, 0.02^2), adapter b = 0.
LoRAViTParams lora_vit_init(const ViTConfig& config, const LoRAConfig& lora, std::uint64_t seed);

/// Dense w + (alpha / rank) * b * a.
Eigen::MatrixXd lora_merge(const Eigen::MatrixXd& w, const Eigen::MatrixXd& a,
                           const Eigen::MatrixXd& b, double alpha, int rank);

/// Folds every adapter into its projection and zeroes the adapter b factor.
LoRAViTParams merge_adapters(const LoRAViTParams& params);

/// Inverse of merge_adapters: subtracts the update described by `adapters`
/// from the merged projections and reinstalls those adapters.
LoRAViTParams unmerge_adapters(const LoRAViTParams& merged, const LoRAViTParams& adapters);

struct BlockCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd norm1_hat;
  Eigen::VectorXd norm1_rstd;
  Eigen::MatrixXd h1;
  Eigen::MatrixXd q, k, v;
  Eigen::MatrixXd q_low, v_low;  // h1 * a^T
  std::vector<Eigen::MatrixXd> attn;  // per head, rows sum to 1
  Eigen::MatrixXd context;
  Eigen::MatrixXd mid;
  Eigen::MatrixXd norm2_hat;
  Eigen::VectorXd norm2_rstd;
  Eigen::MatrixXd h2;
  Eigen::MatrixXd fc1_out;  // before GELU
};

struct VitCache {
  std::vector<BlockCache> blocks;
  Eigen::MatrixXd final_hat;
  Eigen::VectorXd final_rstd;
  bool valid = false;
};

/// Image (in_channels x R x R) to patch-token feature grid
/// (embed_dim x R/patch x R/patch) taken after the final layer norm. The class
/// token is dropped from the output.
Grid2D vit_forward(const Grid2D& image, const LoRAViTParams& params, VitCache* cache = nullptr);

/// Accumulates d loss / d adapters (flatten_adapters layout) for the upstream
/// gradient `d_tokens` of the forward output. Base weights get no gradient.
void vit_backward(const Grid2D& d_tokens, const LoRAViTParams& params, const VitCache& cache,
                  std::span<double> adapter_grad);

}  // namespace ptrack
