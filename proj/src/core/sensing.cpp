#include "forklift/sensing.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "forklift/error.hpp"

namespace forklift::sensing {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(what);
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

void scale_color(RngStream& rng, double s, Rgb& c) {
  for (double& v : c) v = clamp01(v * rng.uniform(1.0 - s, 1.0 + s));
}

void add_quad(Scene& scene, const Quad& q, Surface s) {
  for (int i = 0; i < 4; ++i) scene.segments.push_back({{q[i], q[(i + 1) % 4]}, s});
}

}  // namespace

void CameraModel::validate() const {
  require(fov > 0 && fov < std::numbers::pi, "camera fov must be in (0, pi)");
  require(ray_count >= 2, "camera needs at least two rays");
  require(max_range > 0, "camera range must be positive");
}

void RandomizationConfig::validate() const {
  require(color_scale >= 0 && color_scale < 1, "color_scale must be in [0, 1)");
  require(speed_scale >= 0 && speed_scale < 1, "speed_scale must be in [0, 1)");
  require(action_scale >= 0 && action_scale < 1, "action_scale must be in [0, 1)");
  require(intensity_min > 0 && intensity_min <= intensity_max, "bad light intensity range");
  require(temp_min > 0 && temp_min <= temp_max, "bad light temperature range");
}

Pose2D camera_pose(const sim::VehicleState& v, const CameraModel& cam) {
  const Vec2 p = v.pose.to_world(cam.mount);
  return {p.x, p.y, normalize_angle(v.pose.psi + cam.yaw)};
}

void sample_shared(RngStream& rng, const RandomizationConfig& cfg, EpisodeAppearance& out) {
  if (cfg.colors) scale_color(rng, cfg.color_scale, out.floor);
  if (cfg.lighting) {
    const double lo = std::log(cfg.intensity_min), hi = std::log(cfg.intensity_max);
    out.light_intensity = std::clamp(std::exp(rng.uniform(lo, hi)), cfg.intensity_min, cfg.intensity_max);
    out.light_temp = std::clamp(rng.uniform(cfg.temp_min, cfg.temp_max), cfg.temp_min, cfg.temp_max);
  }
}

void sample_objects(RngStream& rng, const RandomizationConfig& cfg, EpisodeAppearance& out) {
  if (!cfg.colors) return;
  scale_color(rng, cfg.color_scale, out.pallet_stand);
  scale_color(rng, cfg.color_scale, out.pallet);
  scale_color(rng, cfg.color_scale, out.load);
}

EpisodeAppearance sample_appearance(RngStream& rng, const RandomizationConfig& cfg) {
  EpisodeAppearance a = cfg.base;
  sample_shared(rng, cfg, a);
  sample_objects(rng, cfg, a);
  return a;
}

double intensity_scale(double lumens) {
  if (!(lumens > 0)) return 0.0;
  return clamp01(std::log10(lumens) / 5.0);
}

Rgb light_tint(double kelvin) {
  constexpr Rgb warm{1.0, 0.6, 0.3}, cool{0.8, 0.9, 1.0};
  const double f = clamp01((kelvin - 2000.0) / 5500.0);
  return {warm[0] + f * (cool[0] - warm[0]), warm[1] + f * (cool[1] - warm[1]),
          warm[2] + f * (cool[2] - warm[2])};
}

Scene build_scene(const sim::PalletState& pallet, const sim::Arena& arena) {
  Scene scene;
  for (const Segment& w : arena.walls()) scene.segments.push_back({w, Surface::Wall});
  // The stand sits under the pallet; only the parts beside it are visible.
  const Vec2 c = arena.stand_center, h = arena.stand_size * 0.5;
  const double inner = 0.5 * pallet.dims.width;
  if (h.y > inner) {
    add_quad(scene, make_box({c.x - h.x, c.y - h.y}, {c.x + h.x, c.y - inner}), Surface::PalletStand);
    add_quad(scene, make_box({c.x - h.x, c.y + inner}, {c.x + h.x, c.y + h.y}), Surface::PalletStand);
  }
  for (const Quad& b : sim::pallet_shape(pallet).blocks) add_quad(scene, b, Surface::Pallet);
  return scene;
}

Rgb shade(Surface s, double depth, const EpisodeAppearance& app) {
  Rgb base{};
  switch (s) {
    case Surface::Floor: base = app.floor; break;
    case Surface::Wall: base = app.wall; break;
    case Surface::PalletStand: base = app.pallet_stand; break;
    case Surface::Pallet:
      for (int k = 0; k < 3; ++k) base[k] = 0.5 * (app.pallet[k] + app.load[k]);
      break;
  }
  const double w = clamp01(depth);
  const double gain = intensity_scale(app.light_intensity);
  const Rgb tint = light_tint(app.light_temp);
  Rgb out{};
  for (int k = 0; k < 3; ++k) {
    const double mixed = w * app.floor[k] + (1.0 - w) * base[k];
    out[k] = clamp01(mixed * gain * tint[k]);
  }
  return out;
}

double ray_angle(const CameraModel& cam, int i) {
  return 0.5 * cam.fov - cam.fov * static_cast<double>(i) / static_cast<double>(cam.ray_count - 1);
}

Raster render_camera(const Scene& scene, const Pose2D& camera_world, const CameraModel& cam,
                     const EpisodeAppearance& app) {
  if (cam.ray_count != kRayCount) throw ContractViolation("raster layout fixes ray_count at 64");
  Raster r;
  const Vec2 o = camera_world.position();
  for (int i = 0; i < kRayCount; ++i) {
    const Vec2 dir = unit(camera_world.psi + ray_angle(cam, i));
    double best = std::numeric_limits<double>::infinity();
    Surface hit = Surface::Floor;
    for (const SceneSegment& s : scene.segments) {
      if (auto t = ray_segment(o, dir, s.seg); t && *t < best) {
        best = *t;
        hit = s.surface;
      }
    }
    double depth = 1.0;
    if (best <= cam.max_range) {
      depth = clamp01(best / cam.max_range);
    } else {
      hit = Surface::Floor;
    }
    const Rgb c = shade(hit, depth, app);
    float* px = r.data.data() + i * kChannels;
    px[0] = static_cast<float>(depth);
    for (int k = 0; k < 3; ++k) px[1 + k] = static_cast<float>(c[k]);
  }
  return r;
}

MeasuredSpeed perturb_measured_speed(const MeasuredSpeed& v, RngStream& rng, double scale) {
  MeasuredSpeed o;
  o.vx = v.vx * rng.uniform(1.0 - scale, 1.0 + scale);
  o.vy = v.vy * rng.uniform(1.0 - scale, 1.0 + scale);
  o.omega = v.omega * rng.uniform(1.0 - scale, 1.0 + scale);
  return o;
}

sim::Action perturb_action(const sim::Action& a, RngStream& rng, double scale) {
  const double t = a.throttle * rng.uniform(1.0 - scale, 1.0 + scale);
  const double s = a.steer * rng.uniform(1.0 - scale, 1.0 + scale);
  return {std::clamp(t, -1.0, 1.0), std::clamp(s, -1.0, 1.0)};
}

std::vector<std::uint8_t> dump_raster(const Raster& r) {
  std::vector<std::uint8_t> out(kRasterSize * 4);
  for (int i = 0; i < kRasterSize; ++i) {
    const auto u = std::bit_cast<std::uint32_t>(r.data[i]);
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<std::uint8_t>(u >> (8 * b));
  }
  return out;
}

Raster load_raster(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kRasterSize * 4) throw ContractViolation("raster dump has the wrong size");
  Raster r;
  for (int i = 0; i < kRasterSize; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    r.data[i] = std::bit_cast<float>(u);
  }
  return r;
}

ObservationVec compose_observation(const Raster& left, const Raster& right, const MeasuredSpeed& v,
                                   const sim::Action& a_old1, const sim::Action& a_old2) {
  ObservationVec o{};
  std::copy(left.data.begin(), left.data.end(), o.begin() + kObsRasterLeft);
  std::copy(right.data.begin(), right.data.end(), o.begin() + kObsRasterRight);
  o[kObsVx] = static_cast<float>(v.vx);
  o[kObsVy] = static_cast<float>(v.vy);
  o[kObsOmega] = static_cast<float>(v.omega);
  o[kObsActionOld1] = static_cast<float>(a_old1.throttle);
  o[kObsActionOld1 + 1] = static_cast<float>(a_old1.steer);
  o[kObsActionOld2] = static_cast<float>(a_old2.throttle);
  o[kObsActionOld2 + 1] = static_cast<float>(a_old2.steer);
  return o;
}

PrivilegedState make_privileged(const sim::EpisodeState& ep, const path::ReferencePath& path,
                                const sim::SimConfig& cfg) {
  PrivilegedState s;
  s.vehicle_pose = ep.vehicle.pose;
  s.pallet_pose = ep.pallet.pose;
  s.fork_pose = sim::fork_center_pose(ep.vehicle, cfg.vehicle);
  s.v_p = ep.pallet.v_p;
  const Vec2 target = sim::target_depth_point(ep.pallet, cfg.vehicle, cfg.episode.target_depth_fraction);
  s.r_d = norm(s.fork_pose.position() - target);
  const path::PathQuery q = path::nearest_point(path, s.fork_pose.position(), s.fork_pose.psi);
  s.r_cd = q.r_cd;
  s.r_cpsi = q.r_cpsi;
  s.insertion = sim::fork_pocket_geometry(ep.vehicle, ep.pallet, cfg.vehicle);
  s.speed = std::abs(ep.vehicle.v);
  s.reached = sim::reached_target(ep.vehicle, ep.pallet, cfg);
  return s;
}

PrivilegedFeatures privileged_features(const PrivilegedState& s) {
  const Vec2 rel = s.pallet_pose.to_local(s.fork_pose.position());
  const double rel_psi = normalize_angle(s.fork_pose.psi - s.pallet_pose.psi);
  const double v[kPrivilegedSize] = {s.vehicle_pose.x, s.vehicle_pose.y, s.vehicle_pose.psi, rel.x, rel.y,
                                     rel_psi, s.r_d, s.r_cd, s.r_cpsi, s.v_p};
  PrivilegedFeatures f{};
  for (int i = 0; i < kPrivilegedSize; ++i) f[i] = static_cast<float>(v[i]);
  return f;
}

}  // namespace forklift::sensing
