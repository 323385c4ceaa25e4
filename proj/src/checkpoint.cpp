#include "ptrack/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "ptrack/config.hpp"
#include "ptrack/error.hpp"

namespace ptrack {

namespace {

using Bytes = std::vector<unsigned char>;

void put_le(Bytes& buf, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

void write_file(const std::filesystem::path& path, CheckpointKind kind, const nlohmann::json& config,
                const std::vector<double>& values) {
  const std::string text = config.dump();
  Bytes buf;
  buf.reserve(24 + text.size() + 8 * values.size());
  buf.insert(buf.end(), kCheckpointMagic.begin(), kCheckpointMagic.end());
  put_le(buf, kCheckpointVersion, 4);
  put_le(buf, static_cast<std::uint32_t>(kind), 4);
  put_le(buf, text.size(), 4);
  buf.insert(buf.end(), text.begin(), text.end());
  put_le(buf, values.size(), 8);
  for (double v : values) put_le(buf, std::bit_cast<std::uint64_t>(v), 8);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw InvalidInput("failed writing " + path.string());
}

struct Loaded {
  CheckpointInfo info;
  std::vector<double> values;
};

Loaded load(const std::filesystem::path& path, bool with_values) {
  if (!std::filesystem::exists(path)) throw FileNotFound(path.string() + ": no such file");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  const Bytes buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (buf.size() < 4 || std::memcmp(buf.data(), kCheckpointMagic.data(), 4) != 0) {
    throw CorruptFile(name + ": bad magic, not a checkpoint", 0);
  }
  if (buf.size() < 16) throw CorruptFile(name + ": truncated header", buf.size());
  Loaded out;
  out.info.version = static_cast<std::uint32_t>(get_le(buf.data() + 4, 4));
  if (out.info.version != kCheckpointVersion) {
    throw Incompatible(name + ": unsupported checkpoint version " +
                       std::to_string(out.info.version));
  }
  const auto kind = static_cast<std::uint32_t>(get_le(buf.data() + 8, 4));
  if (kind < 1 || kind > 3) throw CorruptFile(name + ": unknown checkpoint kind", 8);
  out.info.kind = static_cast<CheckpointKind>(kind);
  const std::uint64_t len = get_le(buf.data() + 12, 4);
  if (buf.size() < 16 + len + 8) throw CorruptFile(name + ": truncated config echo", buf.size());
  try {
    out.info.config = nlohmann::json::parse(buf.begin() + 16, buf.begin() + 16 + static_cast<long>(len));
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptFile(name + ": malformed config echo", 16 + e.byte);
  }
  out.info.parameter_count = get_le(buf.data() + 16 + len, 8);
  const std::uint64_t start = 24 + len;
  const std::uint64_t expected = start + 8 * out.info.parameter_count;
  if (buf.size() < expected) throw CorruptFile(name + ": truncated parameters", buf.size());
  if (buf.size() > expected) throw CorruptFile(name + ": trailing bytes after parameters", expected);
  if (with_values) {
    out.values.resize(out.info.parameter_count);
    for (std::uint64_t i = 0; i < out.info.parameter_count; ++i) {
      out.values[i] = std::bit_cast<double>(get_le(buf.data() + start + 8 * i, 8));
    }
  }
  return out;
}

Loaded load_kind(const std::filesystem::path& path, CheckpointKind kind) {
  Loaded l = load(path, true);
  if (l.info.kind != kind) {
    throw TypeMismatch(path.string() + ": checkpoint holds " + to_string(l.info.kind) +
                       " parameters, expected " + to_string(kind));
  }
  return l;
}

nlohmann::json vit_echo(const LoRAViTParams& p) {
  return {{"vit", to_json(p.config)},
          {"lora", to_json(p.lora)},
          {"base_parameter_count", p.base_parameter_count()},
          {"adapter_parameter_count", p.adapter_parameter_count()}};
}

LoRAViTParams vit_from_echo(const nlohmann::json& echo, const std::string& name) {
  try {
    return lora_vit_init(vit_config_from_json(echo.at("vit")), lora_config_from_json(echo.at("lora")), 0);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(name + ": config echo lacks the model shape", 16);
  } catch (const InvalidConfig& e) {
    throw CorruptFile(name + ": invalid model shape in config echo: " + e.what(), 16);
  }
}

void check_count(const Loaded& l, std::size_t expected, const std::string& name) {
  if (l.values.size() != expected) {
    throw CorruptFile(name + ": " + std::to_string(l.values.size()) +
                          " parameters, model shape needs " + std::to_string(expected),
                      16);
  }
}

}  // namespace

const char* to_string(CheckpointKind kind) {
  switch (kind) {
    case CheckpointKind::kProbe: return "probe";
    case CheckpointKind::kLoRAViT: return "lora-vit";
    case CheckpointKind::kAdapted: return "adapted";
  }
  return "unknown";
}

void write_checkpoint(const std::filesystem::path& path, const ProbeParams& params) {
  write_file(path, CheckpointKind::kProbe,
             {{"kind", "probe"}, {"parameter_count", params.parameter_count()}}, params.flatten());
}

void write_checkpoint(const std::filesystem::path& path, const LoRAViTParams& params) {
  nlohmann::json echo = vit_echo(params);
  echo["kind"] = "lora-vit";
  std::vector<double> values = params.flatten_base();
  const std::vector<double> adapters = params.flatten_adapters();
  values.insert(values.end(), adapters.begin(), adapters.end());
  echo["parameter_count"] = values.size();
  write_file(path, CheckpointKind::kLoRAViT, echo, values);
}

void write_checkpoint(const std::filesystem::path& path, const AdaptedModel& model) {
  nlohmann::json echo = vit_echo(model.backbone);
  echo["kind"] = "adapted";
  echo["probe_parameter_count"] = model.probe.parameter_count();
  std::vector<double> values = model.backbone.flatten_base();
  for (const auto& part : {model.backbone.flatten_adapters(), model.probe.flatten()}) {
    values.insert(values.end(), part.begin(), part.end());
  }
  echo["parameter_count"] = values.size();
  write_file(path, CheckpointKind::kAdapted, echo, values);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) { return load(path, false).info; }

ProbeParams read_probe_checkpoint(const std::filesystem::path& path) {
  const Loaded l = load_kind(path, CheckpointKind::kProbe);
  ProbeParams p;
  check_count(l, p.parameter_count(), path.string());
  p.assign(l.values);
  return p;
}

LoRAViTParams read_lora_checkpoint(const std::filesystem::path& path) {
  const Loaded l = load_kind(path, CheckpointKind::kLoRAViT);
  LoRAViTParams p = vit_from_echo(l.info.config, path.string());
  const std::size_t nb = p.base_parameter_count();
  check_count(l, nb + p.adapter_parameter_count(), path.string());
  const std::span<const double> all(l.values);
  p.assign_base(all.first(nb));
  p.assign_adapters(all.subspan(nb));
  return p;
}

AdaptedModel read_adapted_checkpoint(const std::filesystem::path& path) {
  const Loaded l = load_kind(path, CheckpointKind::kAdapted);
  AdaptedModel m{vit_from_echo(l.info.config, path.string()), ProbeParams{}};
  const std::size_t nb = m.backbone.base_parameter_count();
  const std::size_t na = m.backbone.adapter_parameter_count();
  check_count(l, nb + na + m.probe.parameter_count(), path.string());
  const std::span<const double> all(l.values);
  m.backbone.assign_base(all.first(nb));
  m.backbone.assign_adapters(all.subspan(nb, na));
  m.probe.assign(all.subspan(nb + na));
  return m;
}

}  // namespace ptrack
