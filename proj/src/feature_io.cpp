#include "ptrack/feature_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "ptrack/error.hpp"

namespace ptrack {

namespace {

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

std::uint32_t checked_u32(int v, const char* what) {
  if (v < 0) throw InvalidInput(std::string("negative ") + what + " in feature video");
  return static_cast<std::uint32_t>(v);
}

FeatureFileHeader parse_header(std::ifstream& in, const std::filesystem::path& path) {
  unsigned char raw[kFeatureHeaderBytes];
  in.read(reinterpret_cast<char*>(raw), sizeof(raw));
  const auto got = static_cast<std::uint64_t>(in.gcount());
  if (got < 4 || std::memcmp(raw, kFeatureMagic.data(), 4) != 0) {
    throw CorruptFile(path.string() + ": bad magic, not a feature file", 0);
  }
  if (got < kFeatureHeaderBytes) {
    throw CorruptFile(path.string() + ": truncated header", got);
  }
  FeatureFileHeader h;
  h.version = get_u32(raw + 4);
  if (h.version != kFeatureVersion) {
    throw Incompatible(path.string() + ": unsupported feature format version " +
                       std::to_string(h.version));
  }
  h.frames = get_u32(raw + 8);
  h.channels = get_u32(raw + 12);
  h.height = get_u32(raw + 16);
  h.width = get_u32(raw + 20);
  h.stride = get_u32(raw + 24);
  h.source_h = get_u32(raw + 28);
  h.source_w = get_u32(raw + 32);
  if (h.frames == 0 || h.channels == 0 || h.height == 0 || h.width == 0) {
    throw CorruptFile(path.string() + ": zero dimension in header", 8);
  }
  if (h.stride == 0) throw CorruptFile(path.string() + ": zero stride in header", 24);
  return h;
}

}  // namespace

FeatureFileHeader make_header(const FeatureVideo& video) {
  video.validate();
  FeatureFileHeader h;
  h.frames = checked_u32(video.num_frames(), "frame count");
  h.channels = checked_u32(video.dim(), "channel count");
  h.height = checked_u32(video.height(), "height");
  h.width = checked_u32(video.width(), "width");
  h.stride = checked_u32(video.stride, "stride");
  h.source_h = checked_u32(video.source_h, "source height");
  h.source_w = checked_u32(video.source_w, "source width");
  return h;
}

void write_feature_video(const std::filesystem::path& path, const FeatureVideo& video) {
  const FeatureFileHeader h = make_header(video);
  std::vector<unsigned char> buf;
  buf.reserve(kFeatureHeaderBytes + h.payload_bytes());
  buf.insert(buf.end(), kFeatureMagic.begin(), kFeatureMagic.end());
  for (std::uint32_t v : {h.version, h.frames, h.channels, h.height, h.width, h.stride, h.source_h,
                          h.source_w}) {
    put_u32(buf, v);
  }
  for (const Grid2D& frame : video.frames) {
    for (double v : frame.data()) put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw InvalidInput("failed writing " + path.string());
}

FeatureFileHeader read_feature_header(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw FileNotFound(path.string() + ": no such file");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return parse_header(in, path);
}

FeatureVideo read_feature_video(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw FileNotFound(path.string() + ": no such file");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  const FeatureFileHeader h = parse_header(in, path);

  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  const std::uint64_t expected = kFeatureHeaderBytes + h.payload_bytes();
  if (file_size < expected) {
    throw CorruptFile(path.string() + ": truncated payload, expected " + std::to_string(expected) +
                          " bytes, file has " + std::to_string(file_size),
                      file_size);
  }
  if (file_size > expected) {
    throw CorruptFile(path.string() + ": trailing bytes after payload", expected);
  }
  in.seekg(static_cast<std::streamoff>(kFeatureHeaderBytes));
  std::vector<unsigned char> payload(h.payload_bytes());
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));

  FeatureVideo video;
  video.stride = static_cast<int>(h.stride);
  video.source_h = static_cast<int>(h.source_h);
  video.source_w = static_cast<int>(h.source_w);
  const std::size_t per_frame = std::size_t{h.channels} * h.height * h.width;
  video.frames.reserve(h.frames);
  const unsigned char* p = payload.data();
  for (std::uint32_t t = 0; t < h.frames; ++t) {
    std::vector<double> data(per_frame);
    for (std::size_t i = 0; i < per_frame; ++i, p += 4) {
      const float v = std::bit_cast<float>(get_u32(p));
      if (!std::isfinite(v)) {
        throw CorruptFile(path.string() + ": non-finite value in payload",
                          static_cast<std::uint64_t>(p - payload.data()) + kFeatureHeaderBytes);
      }
      data[i] = v;
    }
    video.frames.emplace_back(static_cast<int>(h.channels), static_cast<int>(h.height),
                              static_cast<int>(h.width), std::move(data));
  }
  return video;
}

}  // namespace ptrack
