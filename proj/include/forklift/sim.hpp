#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "forklift/geometry.hpp"
#include "forklift/rng.hpp"

namespace forklift::sim {

// Normalized command, both components in [-1, 1].
struct Action {
  double throttle = 0.0;
  double steer = 0.0;
  bool operator==(const Action&) const = default;
};

// Rear-steer counterbalance forklift at 1/14 scale.
struct VehicleParams {
  double body_length = 0.310;
  double body_width = 0.100;
  double fork_length = 0.075;
  double fork_width = 0.010;
  double fork_spacing = 0.055;  // center to center
  double wheelbase = 0.20;
  double v_max = 0.3;
  double delta_max = 0.61;
  double speed_lag_tau = 0.3;
  double steer_rate_max = 3.0;

  void validate() const;
  // Body center to the midpoint of the two forks.
  double fork_center_offset() const { return 0.5 * body_length + 0.5 * fork_length; }
};

struct VehicleState {
  Pose2D pose;         // body center
  double v = 0.0;      // signed longitudinal speed
  double delta = 0.0;  // rear steering angle
  double omega = 0.0;  // yaw rate, always -(v / L) tan(delta)
  bool operator==(const VehicleState&) const = default;
};

// Pallet frame: +x points out of the pocket face toward an approaching
// vehicle, pockets run along x through the full depth.
struct PalletGeometry {
  double width = 0.080;
  double depth = 0.080;
  double pocket_width = 0.020;
  double pocket_spacing = 0.055;  // center to center

  void validate() const;
  bool operator==(const PalletGeometry&) const = default;
};

struct PalletState {
  Pose2D pose;
  double v_p = 0.0;  // speed over the last control tick
  PalletGeometry dims;
  double displaced_total = 0.0;
  bool operator==(const PalletState&) const = default;
};

struct Arena {
  double side = 1.8;
  Vec2 stand_center{1.5, 0.9};
  Vec2 stand_size{0.08, 0.12};  // (x extent, y extent), visual only
  std::array<Vec2, 3> start_triangle{Vec2{0.2, 0.2}, Vec2{0.2, 1.6}, Vec2{1.0, 0.9}};

  std::array<Segment, 4> walls() const;
  Quad stand() const;
  void validate() const;
};

struct EpisodeParams {
  double dt = 1.0 / 15.0;
  int substeps = 4;
  double stop_speed_eps = 0.01;
  double displacement_fail_limit = 0.02;
  double t_max = 30.0;
  double heading_cone = 0.7853981633974483;  // half-angle around the bearing to the pallet
  double target_depth_fraction = 0.7;        // fork insertion that counts as reaching the pallet
  double decision_delay = 3.0;               // stopped time before the loading decision
  Pose2D pallet_pose{1.5, 0.9, 3.141592653589793};

  void validate() const;
};

struct SimConfig {
  VehicleParams vehicle;
  PalletGeometry pallet;
  Arena arena;
  EpisodeParams episode;

  void validate() const;
};

struct InsertionStatus {
  double depth_left = 0.0;  // fraction of fork area inside its pocket
  double depth_right = 0.0;
  double lateral_clear_left = 0.0;  // m; negative when the fork overlaps a pocket wall
  double lateral_clear_right = 0.0;
  bool aligned = false;
};

enum class Phase : std::uint8_t { Approach, Stopped, Lifting, Done };

enum class Outcome : std::uint8_t {
  Running,
  ApproachSuccess,
  PalletMovedFail,
  OutOfArena,
  Timeout,
  LoadSuccess,
  LoadFail,
};

std::string_view to_string(Phase p);
std::string_view to_string(Outcome o);
Outcome outcome_from_string(std::string_view s);

struct EpisodeState {
  VehicleState vehicle;
  PalletState pallet;
  double t = 0.0;
  std::int64_t step_index = 0;
  Action a_old1;
  Action a_old2;
  Phase phase = Phase::Approach;
  double stop_timer = 0.0;
  Outcome outcome = Outcome::Running;
  Pose2D start_pose;  // body pose at reset
  bool operator==(const EpisodeState&) const = default;
};

struct StepInfo {
  bool terminated = false;
  Outcome outcome = Outcome::Running;
};

// --- vehicle -------------------------------------------------------------

// Integrates the rear-steer kinematic model over `substeps` equal substeps.
// Within a substep speed follows the exact first-order lag toward
// throttle*v_max and delta slews toward steer*delta_max at the rate limit;
// the pose advances along the arc of the substep's mean speed and midpoint
// steering angle, which keeps the scheme second order.
VehicleState step_vehicle(const VehicleState& state, Action action, double dt,
                          const VehicleParams& params, int substeps = 4);

struct VehicleShape {
  Quad body;
  Quad fork_left;
  Quad fork_right;
};
VehicleShape vehicle_shape(const VehicleState& v, const VehicleParams& params);

// Pose of the fork midpoint, heading equal to the body heading.
Pose2D fork_center_pose(const VehicleState& v, const VehicleParams& params);

// --- pallet --------------------------------------------------------------

struct PalletShape {
  std::array<Quad, 3> blocks;  // solid parts: left stringer, center block, right stringer
  Quad pocket_left;            // as seen from a vehicle facing the pocket face
  Quad pocket_right;
};
PalletShape pallet_shape(const PalletState& p);

// Point on the pallet centerline where the fork center sits when the forks
// are inserted to `depth_fraction` of their length.
Vec2 target_depth_point(const PalletState& p, const VehicleParams& vp, double depth_fraction);

InsertionStatus fork_pocket_geometry(const VehicleState& vehicle, const PalletState& pallet,
                                     const VehicleParams& params);

struct ContactResult {
  PalletState pallet;
  Vec2 translation;  // applied this call
};

// Quasi-static contact: pushes the pallet out of any vehicle overlap with its
// solid parts. Pocket interiors are free space.
ContactResult resolve_pallet_contact(const VehicleState& vehicle, const PalletState& pallet,
                                     double dt, const VehicleParams& params);

bool touches_walls(const VehicleShape& shape, const Arena& arena);

// The approach-success condition: fork center at or past the target depth
// point with both forks in their pockets.
bool reached_target(const VehicleState& vehicle, const PalletState& pallet, const SimConfig& cfg);

// --- episode -------------------------------------------------------------

EpisodeState reset_episode(RngStream& rng, const SimConfig& cfg);

// Advances one control tick in the Approach phase. `commanded` is what the
// controller asked for (kept as past action), `applied` is what reaches the
// actuators (after actuator noise).
StepInfo step_episode(EpisodeState& ep, Action commanded, Action applied, const SimConfig& cfg);
inline StepInfo step_episode(EpisodeState& ep, Action action, const SimConfig& cfg) {
  return step_episode(ep, action, action, cfg);
}

// Moves an Approach-phase episode to Stopped (zero throttle from now on).
void begin_stop(EpisodeState& ep);

// One control tick in the Stopped phase with zero throttle. Returns true once
// the vehicle has been at rest for `decision_delay`.
bool settle_episode(EpisodeState& ep, const SimConfig& cfg);

// Loading rule: both forks at least two thirds in, positive clearance on both
// sides, pallet displacement within the limit. Inclusive at 2/3.
bool load_succeeds(const InsertionStatus& s, double displaced_total, double displacement_limit);

enum class LoadOutcome : std::uint8_t { LoadSuccess, LoadFail };

// Kinematic lift: evaluates the loading rule and finishes the episode.
LoadOutcome lift_sequence(EpisodeState& ep, const SimConfig& cfg);

}  // namespace forklift::sim
