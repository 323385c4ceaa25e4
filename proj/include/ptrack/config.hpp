#pragma once

#include <json.hpp>

#include "ptrack/lora_vit.hpp"
#include "ptrack/optim.hpp"
#include "ptrack/probe.hpp"
#include "ptrack/synth.hpp"

namespace ptrack {

// JSON (de)serialization of configuration records. Readers start from the
// defaults, accept any subset of the documented keys and reject unknown keys
// with InvalidConfig.

nlohmann::json to_json(const SyntheticConfig& c);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ImageSynthConfig& c);
ImageSynthConfig image_synth_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const OptimConfig& c);
OptimConfig optim_config_from_json(const nlohmann::json& j, OptimConfig defaults);

nlohmann::json to_json(const ViTConfig& c);
ViTConfig vit_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LoRAConfig& c);
LoRAConfig lora_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j);

/// Tracks which keys of an object were consumed.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string context);

  template <typename T>
  void read(const char* key, T& out);
  /// Nested object, or an empty object when absent.
  nlohmann::json object(const char* key);
  /// Throws InvalidConfig naming the first unknown key.
  void finish() const;

 private:
  const nlohmann::json& json_;
  std::string context_;
  std::vector<std::string> seen_;
};

}  // namespace ptrack
