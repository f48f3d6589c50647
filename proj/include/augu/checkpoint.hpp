#pragma once

#include <filesystem>
#include <optional>

#include "augu/binary_io.hpp"
#include "augu/model.hpp"

namespace augu {

// Layout: "AUGU1" | u32 n | n x i32 config | parameters as f32 in declaration
// order | u32 CRC32 of all preceding bytes.
inline constexpr std::string_view kCheckpointMagic = "AUGU1";

inline void save_checkpoint(const UnityModel<float>& model, const std::filesystem::path& path) {
  io::Writer w;
  w.magic(kCheckpointMagic);
  const auto ints = model.config().to_ints();
  w.pod(static_cast<std::uint32_t>(ints.size()));
  w.array(std::span<const std::int32_t>(ints));
  for (const auto& p : model.parameters()) w.array(p.value.data());
  w.finish(path);
}

/// Loads a checkpoint. When `expected` is given, a differing config block is
/// rejected with ConfigError.
inline UnityModel<float> load_checkpoint(const std::filesystem::path& path,
                                         const std::optional<ModelConfig>& expected = std::nullopt) {
  io::Reader r(path);
  r.expect_magic(kCheckpointMagic);
  const auto n = r.pod<std::uint32_t>();
  if (n > 64) throw DataError(r.name() + ": implausible config block size");
  std::vector<std::int32_t> ints(n);
  r.array(std::span<std::int32_t>(ints));
  const ModelConfig cfg = ModelConfig::from_ints(ints);
  if (expected && !(*expected == cfg)) {
    throw ConfigError(r.name() + ": checkpoint config does not match the requested model config");
  }
  UnityModel<float> model(cfg, UnityModel<float>::Uninitialized{});
  for (auto& p : model.parameters()) r.array(p.value.data());
  r.expect_end();
  return model;
}

}  // namespace augu
