#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "forklift/geometry.hpp"
#include "forklift/refpath.hpp"
#include "forklift/rng.hpp"
#include "forklift/sim.hpp"

namespace forklift::sensing {

inline constexpr int kRayCount = 64;
inline constexpr int kChannels = 4;  // depth, r, g, b
inline constexpr int kRasterSize = kRayCount * kChannels;

// Observation layout, frozen. Bump the schema version on any change.
inline constexpr std::uint32_t kObservationSchemaVersion = 1;
inline constexpr int kObsRasterLeft = 0;
inline constexpr int kObsRasterRight = kRasterSize;
inline constexpr int kObsVx = 2 * kRasterSize;
inline constexpr int kObsVy = kObsVx + 1;
inline constexpr int kObsOmega = kObsVy + 1;
inline constexpr int kObsActionOld1 = kObsOmega + 1;
inline constexpr int kObsActionOld2 = kObsActionOld1 + 2;
inline constexpr int kObservationSize = kObsActionOld2 + 2;
static_assert(kObservationSize == 519);

using ObservationVec = std::array<float, kObservationSize>;

inline constexpr int kPrivilegedSize = 10;
using PrivilegedFeatures = std::array<float, kPrivilegedSize>;

struct CameraModel {
  Vec2 mount{0.155, 0.045};  // body frame, forward/left of body center
  double yaw = 0.0;          // body frame, 0 looks forward
  double fov = 1.0471975511965976;
  int ray_count = kRayCount;
  double max_range = 2.6;

  void validate() const;
};

struct CameraRig {
  CameraModel left{{0.155, 0.045}};
  CameraModel right{{0.155, -0.045}};
};

// World pose of a camera mounted on the vehicle.
Pose2D camera_pose(const sim::VehicleState& v, const CameraModel& cam);

enum class Surface : std::uint8_t { Floor, Wall, Pallet, PalletStand };

using Rgb = std::array<double, 3>;

struct EpisodeAppearance {
  Rgb floor{0.5, 0.5, 0.5};
  Rgb wall{0.9, 0.9, 0.9};
  Rgb pallet{0.6, 0.45, 0.3};
  Rgb pallet_stand{0.35, 0.35, 0.4};
  Rgb load{0.75, 0.65, 0.45};
  double light_intensity = 10000.0;  // lm
  double light_temp = 5000.0;        // K

  bool operator==(const EpisodeAppearance&) const = default;
};

struct RandomizationConfig {
  bool colors = true;        // floor, stand, pallet and load colors
  bool lighting = true;      // intensity and temperature
  bool observed_speed = true;
  bool action = true;
  double color_scale = 0.20;  // +-20% per RGB component
  double speed_scale = 0.10;
  double action_scale = 0.10;
  double intensity_min = 100.0;
  double intensity_max = 100000.0;
  double temp_min = 2000.0;
  double temp_max = 7500.0;
  EpisodeAppearance base;

  void validate() const;
};

// Draws an appearance: every randomized color component scaled by
// Uniform(1 - s, 1 + s) and clamped, intensity log-uniform, temperature
// uniform. With randomization off the base appearance is returned unchanged.
EpisodeAppearance sample_appearance(RngStream& rng, const RandomizationConfig& cfg);

// Lighting and floor are shared by all parallel environments at a
// synchronized reset; object colors are drawn per environment.
void sample_shared(RngStream& rng, const RandomizationConfig& cfg, EpisodeAppearance& out);
void sample_objects(RngStream& rng, const RandomizationConfig& cfg, EpisodeAppearance& out);

// clamp(log10(lm) / 5, 0, 1)
double intensity_scale(double lumens);
// Linear between warm (1.0, 0.6, 0.3) at 2000 K and cool (0.8, 0.9, 1.0) at 7500 K.
Rgb light_tint(double kelvin);

struct SceneSegment {
  Segment seg;
  Surface surface;
};

struct Scene {
  std::vector<SceneSegment> segments;
};

Scene build_scene(const sim::PalletState& pallet, const sim::Arena& arena);

// Per ray, channels [depth, r, g, b]; rays ordered left to right.
struct Raster {
  std::array<float, kRasterSize> data{};
  float depth(int ray) const { return data[ray * kChannels]; }
  bool operator==(const Raster&) const = default;
};

// Apparent color of a surface seen at normalized distance `depth`: the
// column blends the floor in front of the hit with the surface itself (the
// pallet column also shows the load on top), then lighting is applied.
Rgb shade(Surface s, double depth, const EpisodeAppearance& app);

// Angle of ray i in the camera frame, +fov/2 (left) to -fov/2 (right).
double ray_angle(const CameraModel& cam, int i);

Raster render_camera(const Scene& scene, const Pose2D& camera_world, const CameraModel& cam,
                     const EpisodeAppearance& app);

struct MeasuredSpeed {
  double vx = 0.0;
  double vy = 0.0;
  double omega = 0.0;
};

// Each component times an independent Uniform(1 - scale, 1 + scale) draw.
MeasuredSpeed perturb_measured_speed(const MeasuredSpeed& v, RngStream& rng, double scale = 0.1);

// Each component times Uniform(1 - scale, 1 + scale), then clamped to [-1, 1].
sim::Action perturb_action(const sim::Action& a, RngStream& rng, double scale = 0.1);

// Raster dump format: kRasterSize little-endian float32 in channel order.
std::vector<std::uint8_t> dump_raster(const Raster& r);
Raster load_raster(std::span<const std::uint8_t> bytes);

ObservationVec compose_observation(const Raster& left, const Raster& right, const MeasuredSpeed& v,
                                   const sim::Action& a_old1, const sim::Action& a_old2);

// Ground truth available to the critic and the reward, never to the actor.
struct PrivilegedState {
  Pose2D vehicle_pose;
  Pose2D pallet_pose;
  Pose2D fork_pose;
  double v_p = 0.0;
  double r_d = 0.0;  // fork center to the target depth point
  double r_cd = 0.0;
  double r_cpsi = 0.0;
  sim::InsertionStatus insertion;
  double speed = 0.0;
  bool reached = false;  // the r_g condition
};

PrivilegedState make_privileged(const sim::EpisodeState& ep, const path::ReferencePath& path,
                                const sim::SimConfig& cfg);

// [x, y, psi, fork x/y/psi in the pallet frame, r_d, r_cd, r_cpsi, v_p]
PrivilegedFeatures privileged_features(const PrivilegedState& s);

}  // namespace forklift::sensing
