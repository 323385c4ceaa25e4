#include "ptrack/config.hpp"

#include <algorithm>
#include <cstdint>

#include "ptrack/error.hpp"

namespace ptrack {

using nlohmann::json;

StrictObject::StrictObject(const json& j, std::string context)
    : json_(j), context_(std::move(context)) {
  if (!j.is_object()) throw InvalidConfig(context_ + ": expected an object");
}

template <typename T>
void StrictObject::read(const char* key, T& out) {
  seen_.emplace_back(key);
  const auto it = json_.find(key);
  if (it == json_.end()) return;
  const json& v = *it;
  const bool ok = [&] {
    if constexpr (std::is_same_v<T, bool>) {
      return v.is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
      return v.is_number_integer() && !(std::is_unsigned_v<T> && v.get<std::int64_t>() < 0);
    } else if constexpr (std::is_floating_point_v<T>) {
      return v.is_number();
    } else {
      return v.is_string();
    }
  }();
  if (!ok) throw InvalidConfig(context_ + "." + key + ": wrong type");
  out = v.get<T>();
}

json StrictObject::object(const char* key) {
  seen_.emplace_back(key);
  const auto it = json_.find(key);
  if (it == json_.end()) return json::object();
  if (!it->is_object()) throw InvalidConfig(context_ + "." + key + ": expected an object");
  return *it;
}

void StrictObject::finish() const {
  for (const auto& [key, value] : json_.items()) {
    if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
      throw InvalidConfig(context_ + ": unknown key '" + key + "'");
    }
  }
}

template void StrictObject::read<int>(const char*, int&);
template void StrictObject::read<double>(const char*, double&);
template void StrictObject::read<bool>(const char*, bool&);
template void StrictObject::read<std::uint64_t>(const char*, std::uint64_t&);
template void StrictObject::read<std::string>(const char*, std::string&);

json to_json(const SyntheticConfig& c) {
  return {{"num_videos", c.num_videos},   {"num_frames", c.num_frames},
          {"num_tracks", c.num_tracks},   {"grid_h", c.grid_h},
          {"grid_w", c.grid_w},           {"feature_dim", c.feature_dim},
          {"stride", c.stride},           {"max_speed", c.max_speed},
          {"acceleration", c.acceleration}, {"subcell", c.subcell},
          {"occlusion_rate", c.occlusion_rate}, {"noise", c.noise},
          {"seed", c.seed}};
}

SyntheticConfig synthetic_config_from_json(const json& j) {
  SyntheticConfig c;
  StrictObject o(j, "synthetic");
  o.read("num_videos", c.num_videos);
  o.read("num_frames", c.num_frames);
  o.read("num_tracks", c.num_tracks);
  o.read("grid_h", c.grid_h);
  o.read("grid_w", c.grid_w);
  o.read("feature_dim", c.feature_dim);
  o.read("stride", c.stride);
  o.read("max_speed", c.max_speed);
  o.read("acceleration", c.acceleration);
  o.read("subcell", c.subcell);
  o.read("occlusion_rate", c.occlusion_rate);
  o.read("noise", c.noise);
  o.read("seed", c.seed);
  o.finish();
  c.validate();
  return c;
}

json to_json(const ImageSynthConfig& c) {
  return {{"num_videos", c.num_videos},
          {"num_frames", c.num_frames},
          {"num_tracks", c.num_tracks},
          {"resolution", c.resolution},
          {"sprite_size", c.sprite_size},
          {"max_speed", c.max_speed},
          {"acceleration", c.acceleration},
          {"occlusion_rate", c.occlusion_rate},
          {"noise", c.noise},
          {"jitter", c.jitter},
          {"background_contrast", c.background_contrast},
          {"seed", c.seed}};
}

ImageSynthConfig image_synth_config_from_json(const json& j) {
  ImageSynthConfig c;
  StrictObject o(j, "image_synthetic");
  o.read("num_videos", c.num_videos);
  o.read("num_frames", c.num_frames);
  o.read("num_tracks", c.num_tracks);
  o.read("resolution", c.resolution);
  o.read("sprite_size", c.sprite_size);
  o.read("max_speed", c.max_speed);
  o.read("acceleration", c.acceleration);
  o.read("occlusion_rate", c.occlusion_rate);
  o.read("noise", c.noise);
  o.read("jitter", c.jitter);
  o.read("background_contrast", c.background_contrast);
  o.read("seed", c.seed);
  o.finish();
  c.validate();
  return c;
}

json to_json(const OptimConfig& c) {
  return {{"lr_peak", c.lr_peak},   {"batch_size", c.batch_size}, {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},     {"warmup_steps", c.warmup_steps}, {"beta1", c.beta1},
          {"beta2", c.beta2},       {"epsilon", c.epsilon},       {"seed", c.seed},
          {"deterministic", c.deterministic}};
}

OptimConfig optim_config_from_json(const json& j, OptimConfig c) {
  StrictObject o(j, "optim");
  o.read("lr_peak", c.lr_peak);
  o.read("batch_size", c.batch_size);
  o.read("weight_decay", c.weight_decay);
  o.read("epochs", c.epochs);
  o.read("warmup_steps", c.warmup_steps);
  o.read("beta1", c.beta1);
  o.read("beta2", c.beta2);
  o.read("epsilon", c.epsilon);
  o.read("seed", c.seed);
  o.read("deterministic", c.deterministic);
  o.finish();
  c.validate();
  return c;
}

json to_json(const ViTConfig& c) {
  return {{"patch_size", c.patch_size}, {"embed_dim", c.embed_dim},
          {"num_heads", c.num_heads},   {"num_blocks", c.num_blocks},
          {"input_resolution", c.input_resolution}, {"mlp_ratio", c.mlp_ratio},
          {"in_channels", c.in_channels}};
}

ViTConfig vit_config_from_json(const json& j) {
  ViTConfig c;
  StrictObject o(j, "vit");
  o.read("patch_size", c.patch_size);
  o.read("embed_dim", c.embed_dim);
  o.read("num_heads", c.num_heads);
  o.read("num_blocks", c.num_blocks);
  o.read("input_resolution", c.input_resolution);
  o.read("mlp_ratio", c.mlp_ratio);
  o.read("in_channels", c.in_channels);
  o.finish();
  c.validate();
  return c;
}

json to_json(const LoRAConfig& c) { return {{"rank", c.rank}, {"alpha", c.alpha}}; }

LoRAConfig lora_config_from_json(const json& j) {
  LoRAConfig c;
  StrictObject o(j, "lora");
  o.read("rank", c.rank);
  c.alpha = c.rank;
  o.read("alpha", c.alpha);
  o.finish();
  if (c.rank < 1 || !(c.alpha > 0.0)) throw InvalidConfig("lora: rank and alpha must be positive");
  return c;
}

json to_json(const LossWeights& w) {
  return {{"point", w.point}, {"occlusion", w.occlusion}, {"huber_delta", w.huber_delta}};
}

LossWeights loss_weights_from_json(const json& j) {
  LossWeights w;
  StrictObject o(j, "loss");
  o.read("point", w.point);
  o.read("occlusion", w.occlusion);
  o.read("huber_delta", w.huber_delta);
  o.finish();
  if (!(w.huber_delta > 0.0) || !(w.point >= 0.0) || !(w.occlusion >= 0.0)) {
    throw InvalidConfig("loss: weights must be >= 0 and huber_delta > 0");
  }
  return w;
}

}  // namespace ptrack
