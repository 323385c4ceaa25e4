#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "ptrack/tracker.hpp"

namespace ptrack {

/// Feature file layout, all integers unsigned 32-bit little-endian:
///
///   offset  field
///   0       magic "FVID"
///   4       version (1)
///   8       T  frames
///   12      D  channels
///   16      H  rows
///   20      W  columns
///   24      stride (source pixels per cell)
///   28      source height
///   32      source width
///   36      payload: T*D*H*W float32 little-endian, T-major, then D, H, W
inline constexpr std::array<char, 4> kFeatureMagic{'F', 'V', 'I', 'D'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::uint64_t kFeatureHeaderBytes = 36;

struct FeatureFileHeader {
  std::uint32_t version = kFeatureVersion;
  std::uint32_t frames = 0;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t stride = 1;
  std::uint32_t source_h = 0;
  std::uint32_t source_w = 0;

  std::uint64_t payload_bytes() const noexcept {
    return std::uint64_t{frames} * channels * height * width * 4;
  }
};

FeatureFileHeader make_header(const FeatureVideo& video);

/// Values are rounded to float32 on write.
void write_feature_video(const std::filesystem::path& path, const FeatureVideo& video);

/// Validates magic, version, dimensions and exact payload length; throws
/// CorruptFile with the failing byte offset.
FeatureVideo read_feature_video(const std::filesystem::path& path);
FeatureFileHeader read_feature_header(const std::filesystem::path& path);

}  // namespace ptrack
