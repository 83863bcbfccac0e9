#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "forklift/parallel.hpp"
#include "forklift/refpath.hpp"
#include "forklift/reward.hpp"
#include "forklift/sensing.hpp"
#include "forklift/sim.hpp"

namespace forklift::env {

struct EnvConfig {
  sim::SimConfig sim;
  sensing::CameraRig cameras;
  sensing::RandomizationConfig randomization;
  reward::RewardWeights reward;
  double goal_standoff = 0.30;  // reference path goal, in front of the pocket face
  int path_samples = 1000;

  void validate() const;
};

// Everything needed to regenerate an episode's randomness.
struct EpisodeKey {
  std::uint64_t seed = 0;
  std::uint64_t env = 0;
  std::uint64_t episode = 0;
  std::uint64_t shared = 0;  // index of the shared lighting/floor draw
  bool operator==(const EpisodeKey&) const = default;
};

// Appearance drawn once per synchronized reset and used by every env.
sensing::EpisodeAppearance shared_appearance(const EnvConfig& cfg, std::uint64_t seed, std::uint64_t index);

// Reference path for an episode: from the fork center at reset to a pose
// `goal_standoff` in front of the pockets, continued straight to the target
// depth point.
path::ReferencePath reference_for(const sim::EpisodeState& ep, const EnvConfig& cfg);

struct StepResult {
  reward::RewardBreakdown reward;
  sim::StepInfo info;
  sim::Action commanded;
  sim::Action applied;
  double t = 0.0;  // episode time after the step
};

class ForkliftEnv {
 public:
  ForkliftEnv(std::shared_ptr<const EnvConfig> cfg, std::uint64_t seed, std::uint64_t index);

  // Starts the next episode of this env under the given shared draw.
  void reset(std::uint64_t shared_index, const sensing::EpisodeAppearance& shared);
  // Starts the episode identified by `key` (replay, evaluation).
  void reset_to(const EpisodeKey& key, const sensing::EpisodeAppearance& shared);

  // One control tick in the Approach phase.
  StepResult step(sim::Action commanded);

  // Stopped phase: one zero-throttle tick; true once the decision delay has
  // elapsed. The observation is refreshed.
  bool settle();
  // Moves to the Stopped phase (evaluation stop trigger).
  void stop();
  sim::LoadOutcome lift();

  const EnvConfig& config() const { return *cfg_; }
  const EpisodeKey& key() const { return key_; }
  const sim::EpisodeState& episode() const { return ep_; }
  const path::ReferencePath& path() const { return path_; }
  const sensing::EpisodeAppearance& appearance() const { return appearance_; }
  const sensing::ObservationVec& observation() const { return obs_; }
  const sensing::PrivilegedState& privileged() const { return priv_; }
  const sensing::PrivilegedFeatures& privileged_features() const { return priv_features_; }
  const sensing::Raster& raster_left() const { return left_; }
  const sensing::Raster& raster_right() const { return right_; }
  const sensing::MeasuredSpeed& measured_speed() const { return measured_; }

 private:
  void begin(const EpisodeKey& key, const sensing::EpisodeAppearance& shared);
  void observe();

  std::shared_ptr<const EnvConfig> cfg_;
  std::uint64_t seed_;
  std::uint64_t index_;
  std::uint64_t next_episode_ = 0;
  EpisodeKey key_;
  sim::EpisodeState ep_;
  path::ReferencePath path_;
  sensing::EpisodeAppearance appearance_;
  RngStream sensor_rng_;
  RngStream actuator_rng_;
  sensing::Raster left_, right_;
  sensing::MeasuredSpeed measured_;
  sensing::ObservationVec obs_{};
  sensing::PrivilegedState priv_;
  sensing::PrivilegedFeatures priv_features_{};
};

// W environments stepped in lockstep. Terminated environments restart
// immediately under the current shared draw; reset_all() starts a new
// shared draw for everyone.
class EnvPool {
 public:
  EnvPool(const EnvConfig& cfg, std::uint64_t seed, int count, int workers = 1);

  int size() const { return static_cast<int>(envs_.size()); }
  ForkliftEnv& env(int i) { return envs_[i]; }
  const ForkliftEnv& env(int i) const { return envs_[i]; }
  std::uint64_t shared_index() const { return shared_index_; }

  void reset_all();
  // `out[i]` describes env i's step; when it terminated the env already
  // holds the first observation of its next episode.
  void step(std::span<const sim::Action> actions, std::span<StepResult> out);

 private:
  std::shared_ptr<const EnvConfig> cfg_;
  std::uint64_t seed_;
  std::vector<ForkliftEnv> envs_;
  WorkerPool workers_;
  std::uint64_t shared_index_ = 0;
  bool started_ = false;
  sensing::EpisodeAppearance shared_;
};

}  // namespace forklift::env
