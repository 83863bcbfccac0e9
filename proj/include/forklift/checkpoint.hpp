#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "forklift/nn.hpp"

namespace forklift::io {

// Binary container shared by policy and classifier checkpoints:
//   "FKCP" | u32 version | u32 n | n bytes of JSON metadata |
//   u32 array count | per array: u32 name length, name, u32 rank,
//   rank x u32 dims, prod(dims) x f32
// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
};

std::vector<std::uint8_t> encode(const Checkpoint& c);
Checkpoint decode(std::span<const std::uint8_t> bytes);

// Written to a sibling temporary file and renamed into place, so a crash
// never leaves a half-written checkpoint under the final name.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

void save(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load(const std::filesystem::path& path);

// Metadata keys written by the packers.
//   kind                 "actor_critic" | "classifier"
//   obs_schema_version   observation layout the weights were trained on
//   config_hash          hash of the run config (hex)
//   steps, update        training progress
//   shape                layer widths
//   created              wall-clock timestamp, informational only
Checkpoint pack(const nn::ActorCritic<float>& net, nlohmann::json metadata);
Checkpoint pack(const nn::Classifier<float>& c, nlohmann::json metadata);

// Throw ConfigError on a kind, shape or observation-schema mismatch.
nn::ActorCritic<float> unpack_actor_critic(const Checkpoint& c, std::uint32_t expected_obs_schema);
nn::Classifier<float> unpack_classifier(const Checkpoint& c, std::uint32_t expected_obs_schema);

// The payload without metadata: what must match bit for bit between two
// runs with the same config and seed.
std::vector<std::uint8_t> payload_bytes(const Checkpoint& c);

}  // namespace forklift::io
