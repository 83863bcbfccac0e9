#include "forklift/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "forklift/error.hpp"

namespace forklift::env {

void EnvConfig::validate() const {
  sim.validate();
  cameras.left.validate();
  cameras.right.validate();
  randomization.validate();
  reward.validate();
  if (!(goal_standoff > 0)) throw ConfigError("goal_standoff must be positive");
  if (path_samples < 2) throw ConfigError("path_samples must be at least 2");
}

sensing::EpisodeAppearance shared_appearance(const EnvConfig& cfg, std::uint64_t seed, std::uint64_t index) {
  RngStream rng(seed, "shared-appearance", index);
  sensing::EpisodeAppearance a = cfg.randomization.base;
  sensing::sample_shared(rng, cfg.randomization, a);
  return a;
}

path::ReferencePath reference_for(const sim::EpisodeState& ep, const EnvConfig& cfg) {
  const Pose2D start = sim::fork_center_pose(ep.vehicle, cfg.sim.vehicle);
  const Pose2D& pallet = ep.pallet.pose;
  const double face = 0.5 * ep.pallet.dims.depth;
  const Vec2 g = pallet.to_world({face + cfg.goal_standoff, 0.0});
  const Pose2D goal{g.x, g.y, normalize_angle(pallet.psi + std::numbers::pi)};
  const Vec2 target = pallet.to_local(
      sim::target_depth_point(ep.pallet, cfg.sim.vehicle, cfg.sim.episode.target_depth_fraction));
  const double lead = face + cfg.goal_standoff - target.x;
  return path::build_reference(start, goal, cfg.path_samples).with_lead_in(lead);
}

ForkliftEnv::ForkliftEnv(std::shared_ptr<const EnvConfig> cfg, std::uint64_t seed, std::uint64_t index)
    : cfg_(std::move(cfg)), seed_(seed), index_(index) {}

void ForkliftEnv::reset(std::uint64_t shared_index, const sensing::EpisodeAppearance& shared) {
  begin({seed_, index_, next_episode_++, shared_index}, shared);
}

void ForkliftEnv::reset_to(const EpisodeKey& key, const sensing::EpisodeAppearance& shared) {
  begin(key, shared);
}

void ForkliftEnv::begin(const EpisodeKey& key, const sensing::EpisodeAppearance& shared) {
  key_ = key;
  const std::uint64_t base = derive_seed(key.seed, "env", key.env);
  RngStream reset_rng(base, "reset", key.episode);
  RngStream object_rng(base, "objects", key.episode);
  sensor_rng_ = RngStream(base, "sensor", key.episode);
  actuator_rng_ = RngStream(base, "actuator", key.episode);

  appearance_ = shared;
  sensing::sample_objects(object_rng, cfg_->randomization, appearance_);
  ep_ = sim::reset_episode(reset_rng, cfg_->sim);
  path_ = reference_for(ep_, *cfg_);
  observe();
  priv_.reached = false;
}

void ForkliftEnv::observe() {
  const sensing::Scene scene = sensing::build_scene(ep_.pallet, cfg_->sim.arena);
  const auto& cams = cfg_->cameras;
  left_ = sensing::render_camera(scene, sensing::camera_pose(ep_.vehicle, cams.left), cams.left, appearance_);
  right_ = sensing::render_camera(scene, sensing::camera_pose(ep_.vehicle, cams.right), cams.right, appearance_);
  const auto& v = ep_.vehicle;
  sensing::MeasuredSpeed truth{v.v * std::cos(v.pose.psi), v.v * std::sin(v.pose.psi), v.omega};
  measured_ = cfg_->randomization.observed_speed
                  ? sensing::perturb_measured_speed(truth, sensor_rng_, cfg_->randomization.speed_scale)
                  : truth;
  obs_ = sensing::compose_observation(left_, right_, measured_, ep_.a_old1, ep_.a_old2);
  priv_ = sensing::make_privileged(ep_, path_, cfg_->sim);
  priv_features_ = sensing::privileged_features(priv_);
}

StepResult ForkliftEnv::step(sim::Action commanded) {
  StepResult r;
  r.commanded = {std::clamp(commanded.throttle, -1.0, 1.0), std::clamp(commanded.steer, -1.0, 1.0)};
  r.applied = cfg_->randomization.action
                  ? sensing::perturb_action(r.commanded, actuator_rng_, cfg_->randomization.action_scale)
                  : r.commanded;
  const sim::Action previous = ep_.a_old1;
  r.info = sim::step_episode(ep_, r.commanded, r.applied, cfg_->sim);
  observe();
  // r_g is paid only when the tick actually ends in approach success.
  priv_.reached = r.info.outcome == sim::Outcome::ApproachSuccess;
  r.reward = reward::total_reward(reward::positive_reward(priv_, cfg_->reward),
                                  reward::penalty_reward(priv_, r.commanded, previous, cfg_->reward));
  r.t = ep_.t;
  return r;
}

bool ForkliftEnv::settle() {
  const bool ready = sim::settle_episode(ep_, cfg_->sim);
  observe();
  return ready;
}

void ForkliftEnv::stop() { sim::begin_stop(ep_); }

sim::LoadOutcome ForkliftEnv::lift() { return sim::lift_sequence(ep_, cfg_->sim); }

EnvPool::EnvPool(const EnvConfig& cfg, std::uint64_t seed, int count, int workers)
    : cfg_(std::make_shared<const EnvConfig>(cfg)), seed_(seed), workers_(workers) {
  if (count < 1) throw ConfigError("env count must be at least 1");
  cfg_->validate();
  envs_.reserve(count);
  for (int i = 0; i < count; ++i) envs_.emplace_back(cfg_, seed, static_cast<std::uint64_t>(i));
}

void EnvPool::reset_all() {
  if (started_) ++shared_index_;
  started_ = true;
  shared_ = shared_appearance(*cfg_, seed_, shared_index_);
  workers_.run(size(), [&](int i) { envs_[i].reset(shared_index_, shared_); });
}

void EnvPool::step(std::span<const sim::Action> actions, std::span<StepResult> out) {
  if (static_cast<int>(actions.size()) != size() || static_cast<int>(out.size()) != size()) {
    throw ContractViolation("EnvPool::step needs one action and one result slot per env");
  }
  if (!started_) reset_all();
  workers_.run(size(), [&](int i) {
    out[i] = envs_[i].step(actions[i]);
    if (out[i].info.terminated) envs_[i].reset(shared_index_, shared_);
  });
}

}  // namespace forklift::env
