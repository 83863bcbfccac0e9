#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "forklift/decision.hpp"
#include "forklift/env.hpp"
#include "forklift/ppo.hpp"

namespace forklift::harness {

struct EvalSettings {
  int episodes = 100;
  bool decide = true;  // run stop -> delay -> decide -> lift after a successful approach
  double threshold = 0.5;
};

struct ServerSettings {
  int port = 8765;
  double tick_hz = 15.0;
  double command_timeout = 1.0;  // s without a command before throttle drops to zero
  bool debug = false;            // frames carry ground-truth poses
};

// Everything a run depends on. Serialized as JSON; see the README for the
// schema. Unknown keys are rejected.
struct RunConfig {
  std::string run_id = "run";
  std::uint64_t seed = 1;
  env::EnvConfig env;
  ppo::PpoConfig ppo;
  decision::DatasetConfig dataset;
  decision::ClassifierConfig classifier;
  EvalSettings eval;
  ServerSettings server;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
// Missing keys keep their defaults. Throws ConfigError naming the offending
// key path on unknown keys or wrong types.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

// 16 hex digits: FNV-1a over the canonical JSON dump.
std::string config_hash(const RunConfig& c);

}  // namespace forklift::harness
