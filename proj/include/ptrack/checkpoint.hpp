#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "ptrack/lora_vit.hpp"
#include "ptrack/probe.hpp"
#include "ptrack/training.hpp"

namespace ptrack {

/// Checkpoint layout, little-endian:
///
///   offset  field
///   0       magic "PTCK"
///   4       version u32 (1)
///   8       kind u32 (1 probe, 2 lora-vit, 3 adapted model)
///   12      config length L u32
///   16      config echo, L bytes of JSON
///   16+L    parameter count N u64
///   24+L    N float64 values
///
/// Payload order: probe = ProbeParams::flatten; lora-vit = base weights then
/// adapters; adapted model = base, adapters, probe.
inline constexpr std::array<char, 4> kCheckpointMagic{'P', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint32_t { kProbe = 1, kLoRAViT = 2, kAdapted = 3 };

const char* to_string(CheckpointKind kind);

struct CheckpointInfo {
  std::uint32_t version = kCheckpointVersion;
  CheckpointKind kind = CheckpointKind::kProbe;
  nlohmann::json config;
  std::uint64_t parameter_count = 0;
};

void write_checkpoint(const std::filesystem::path& path, const ProbeParams& params);
void write_checkpoint(const std::filesystem::path& path, const LoRAViTParams& params);
void write_checkpoint(const std::filesystem::path& path, const AdaptedModel& model);

/// Header and config echo only.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Throw TypeMismatch when the file holds another kind, Incompatible on a
/// version mismatch and CorruptFile on malformed content.
ProbeParams read_probe_checkpoint(const std::filesystem::path& path);
LoRAViTParams read_lora_checkpoint(const std::filesystem::path& path);
AdaptedModel read_adapted_checkpoint(const std::filesystem::path& path);

}  // namespace ptrack
