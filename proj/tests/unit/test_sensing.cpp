#include <cmath>
#include <numbers>

#include "doctest.h"
#include "forklift/error.hpp"
#include "forklift/sensing.hpp"

using namespace forklift;
using namespace forklift::sensing;
using doctest::Approx;

namespace {

sim::PalletState default_pallet() {
  sim::SimConfig cfg;
  sim::PalletState p;
  p.pose = cfg.episode.pallet_pose;
  p.dims = cfg.pallet;
  return p;
}

bool inside_box(Vec2 p, Vec2 lo, Vec2 hi) { return p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y; }

// Marches a ray through the solid regions of the default scene (outside of
// the arena, pallet blocks, stand wings), then bisects the first crossing.
double march(Vec2 o, Vec2 dir, double max_range) {
  const sim::Arena arena;
  const auto pallet = default_pallet();
  const auto blocks = sim::pallet_shape(pallet).blocks;
  const double py = pallet.pose.y;
  const double hw = 0.5 * pallet.dims.width;
  const Vec2 sc = arena.stand_center, sh = arena.stand_size * 0.5;
  auto solid = [&](Vec2 p) {
    if (p.x <= 0 || p.y <= 0 || p.x >= arena.side || p.y >= arena.side) return true;
    for (const Quad& b : blocks) {
      Vec2 lo{1e9, 1e9}, hi{-1e9, -1e9};
      for (Vec2 c : b) {
        lo = {std::min(lo.x, c.x), std::min(lo.y, c.y)};
        hi = {std::max(hi.x, c.x), std::max(hi.y, c.y)};
      }
      if (inside_box(p, lo, hi)) return true;
    }
    if (inside_box(p, {sc.x - sh.x, sc.y - sh.y}, {sc.x + sh.x, py - hw})) return true;
    if (inside_box(p, {sc.x - sh.x, py + hw}, {sc.x + sh.x, sc.y + sh.y})) return true;
    return false;
  };
  const double step = 2e-4;
  for (double t = 0.0; t <= max_range + step; t += step) {
    if (solid(o + dir * t)) {
      double lo = std::max(0.0, t - step), hi = t;
      for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (solid(o + dir * mid) ? hi : lo) = mid;
      }
      return hi;
    }
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace

TEST_CASE("observation layout is frozen") {
  CHECK(kObservationSize == 2 * 64 * 4 + 2 + 1 + 2 + 2);
  CHECK(kObsRasterLeft == 0);
  CHECK(kObsRasterRight == 256);
  CHECK(kObsVx == 512);
  CHECK(kObsVy == 513);
  CHECK(kObsOmega == 514);
  CHECK(kObsActionOld1 == 515);
  CHECK(kObsActionOld2 == 517);
  CHECK(kObservationSchemaVersion == 1);
}

TEST_CASE("compose_observation") {
  SUBCASE("all zero inputs") {
    const auto o = compose_observation({}, {}, {}, {}, {});
    for (float v : o) CHECK(v == 0.0f);
  }
  SUBCASE("fields land at their offsets") {
    Raster l, r;
    for (int i = 0; i < kRasterSize; ++i) {
      l.data[i] = 0.001f * i;
      r.data[i] = 0.5f + 0.001f * i;
    }
    const auto o = compose_observation(l, r, {0.1, 0.2, 0.3}, {0.4, 0.5}, {0.6, 0.7});
    CHECK(o[0] == l.data[0]);
    CHECK(o[255] == l.data[255]);
    CHECK(o[256] == r.data[0]);
    CHECK(o[511] == r.data[255]);
    CHECK(o[kObsVx] == 0.1f);
    CHECK(o[kObsVy] == 0.2f);
    CHECK(o[kObsOmega] == 0.3f);
    CHECK(o[kObsActionOld1] == 0.4f);
    CHECK(o[kObsActionOld1 + 1] == 0.5f);
    CHECK(o[kObsActionOld2] == 0.6f);
    CHECK(o[kObsActionOld2 + 1] == 0.7f);

    const auto swapped = compose_observation(r, l, {0.1, 0.2, 0.3}, {0.4, 0.5}, {0.6, 0.7});
    for (int i = 0; i < kObservationSize; ++i) {
      if (i < 2 * kRasterSize) {
        CHECK(swapped[i] != o[i]);
      } else {
        CHECK(swapped[i] == o[i]);
      }
    }
  }
}

TEST_CASE("depth against a wall at 1 m") {
  Scene scene;
  scene.segments.push_back({{{1.0, -5.0}, {1.0, 5.0}}, Surface::Wall});
  const CameraModel cam;
  const Raster r = render_camera(scene, {0, 0, 0}, cam, EpisodeAppearance{});
  for (int i = 0; i < kRayCount; ++i) {
    const double theta = ray_angle(cam, i);
    CHECK(r.depth(i) == Approx((1.0 / std::cos(theta)) / 2.6).epsilon(1e-6));
  }
  // 64 rays straddle the axis: the two middle rays are half a spacing off it.
  const double half = 0.5 * cam.fov / 63.0;
  CHECK(r.depth(31) == Approx(1.0 / std::cos(half) / 2.6).epsilon(1e-6));
  CHECK(r.depth(32) == Approx(1.0 / 2.6).epsilon(1e-3));
}

TEST_CASE("rays run left to right") {
  const CameraModel cam;
  CHECK(ray_angle(cam, 0) == Approx(cam.fov / 2));
  CHECK(ray_angle(cam, 63) == Approx(-cam.fov / 2));
  Scene scene;  // wall only on the left half
  scene.segments.push_back({{{1.0, 0.01}, {1.0, 5.0}}, Surface::Wall});
  const Raster r = render_camera(scene, {0, 0, 0}, cam, EpisodeAppearance{});
  CHECK(r.depth(0) < 1.0f);
  CHECK(r.depth(63) == 1.0f);
}

TEST_CASE("nothing in range reads as depth 1 and floor color") {
  const Scene scene;
  const EpisodeAppearance app;
  const Raster r = render_camera(scene, {0, 0, 0}, CameraModel{}, app);
  const Rgb floor = shade(Surface::Floor, 1.0, app);
  for (int i = 0; i < kRayCount; ++i) {
    CHECK(r.depth(i) == 1.0f);
    CHECK(r.data[i * 4 + 1] == static_cast<float>(floor[0]));
  }
}

TEST_CASE("full scene render matches a marching oracle") {
  const sim::Arena arena;
  const Scene scene = build_scene(default_pallet(), arena);
  const CameraModel cam;
  RngStream rng(17, "march");
  for (int trial = 0; trial < 6; ++trial) {
    const Pose2D pose{rng.uniform(0.2, 1.2), rng.uniform(0.2, 1.6), rng.uniform(-1.5, 1.5)};
    const Raster r = render_camera(scene, pose, cam, EpisodeAppearance{});
    for (int i = 0; i < kRayCount; ++i) {
      const double t = march(pose.position(), unit(pose.psi + ray_angle(cam, i)), cam.max_range);
      const double expected = t > cam.max_range ? 1.0 : t / cam.max_range;
      CHECK(std::abs(r.depth(i) - expected) < 1e-6);
    }
  }
}

TEST_CASE("raster channels stay in [0, 1]") {
  const sim::Arena arena;
  RngStream rng(2, "bounds");
  RandomizationConfig rc;
  rc.color_scale = 0.9;  // push colors against the clamp
  for (int trial = 0; trial < 2000; ++trial) {
    auto pallet = default_pallet();
    pallet.pose.x += rng.uniform(-0.1, 0.1);
    pallet.pose.psi += rng.uniform(-0.5, 0.5);
    const Scene scene = build_scene(pallet, arena);
    const auto app = sample_appearance(rng, rc);
    const Pose2D pose{rng.uniform(0.05, 1.75), rng.uniform(0.05, 1.75), rng.uniform(-3.2, 3.2)};
    const Raster r = render_camera(scene, pose, CameraModel{}, app);
    for (float v : r.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("rendering is deterministic") {
  const Scene scene = build_scene(default_pallet(), sim::Arena{});
  RngStream rng(3, "app");
  const auto app = sample_appearance(rng, RandomizationConfig{});
  const Pose2D pose{0.5, 0.9, 0.1};
  CHECK(render_camera(scene, pose, CameraModel{}, app) == render_camera(scene, pose, CameraModel{}, app));
}

TEST_CASE("camera ray count is fixed by the layout") {
  CameraModel cam;
  cam.ray_count = 32;
  CHECK_THROWS_AS(render_camera(Scene{}, {}, cam, EpisodeAppearance{}), ContractViolation);
}

TEST_CASE("lighting model") {
  CHECK(intensity_scale(100000.0) == Approx(1.0));
  CHECK(intensity_scale(100.0) == Approx(0.4));
  CHECK(intensity_scale(1e7) == 1.0);
  const Rgb warm = light_tint(2000.0), cool = light_tint(7500.0), mid = light_tint(4750.0);
  CHECK(warm[0] == Approx(1.0));
  CHECK(warm[1] == Approx(0.6));
  CHECK(warm[2] == Approx(0.3));
  CHECK(cool[0] == Approx(0.8));
  CHECK(cool[1] == Approx(0.9));
  CHECK(cool[2] == Approx(1.0));
  CHECK(mid[2] == Approx(0.65));
}

TEST_CASE("appearance sampling") {
  RandomizationConfig rc;
  SUBCASE("disabled randomization returns the base") {
    rc.colors = false;
    rc.lighting = false;
    RngStream rng(1);
    CHECK(sample_appearance(rng, rc) == rc.base);
  }
  SUBCASE("draws stay within range") {
    RngStream rng(1, "appearance");
    double lo_i = 1e9, hi_i = 0.0;
    for (int i = 0; i < 100000; ++i) {
      const auto a = sample_appearance(rng, rc);
      CHECK(a.light_intensity >= 100.0);
      CHECK(a.light_intensity <= 100000.0);
      CHECK(a.light_temp >= 2000.0);
      CHECK(a.light_temp <= 7500.0);
      for (int k = 0; k < 3; ++k) {
        CHECK(a.floor[k] >= 0.8 * rc.base.floor[k] - 1e-12);
        CHECK(a.floor[k] <= 1.2 * rc.base.floor[k] + 1e-12);
        CHECK(a.pallet[k] >= 0.0);
        CHECK(a.pallet[k] <= 1.0);
      }
      CHECK(a.wall == rc.base.wall);
      lo_i = std::min(lo_i, a.light_intensity);
      hi_i = std::max(hi_i, a.light_intensity);
    }
    // log-uniform: both ends of the five decades are visited
    CHECK(lo_i < 200.0);
    CHECK(hi_i > 50000.0);
  }
}

TEST_CASE("measured speed noise") {
  RngStream rng(5, "speed");
  for (int i = 0; i < 100000; ++i) {
    const MeasuredSpeed v{0.1, -0.2, 0.3};
    const auto p = perturb_measured_speed(v, rng);
    CHECK(std::abs(p.vx / v.vx - 1.0) <= 0.1 + 1e-12);
    CHECK(std::abs(p.vy / v.vy - 1.0) <= 0.1 + 1e-12);
    CHECK(std::abs(p.omega / v.omega - 1.0) <= 0.1 + 1e-12);
  }
  const auto z = perturb_measured_speed({}, rng);
  CHECK(z.vx == 0.0);
  CHECK(z.vy == 0.0);
  CHECK(z.omega == 0.0);
  // Replay the draws to check the arithmetic.
  RngStream a(6, "speed"), b(6, "speed");
  const auto p = perturb_measured_speed({0.1, 0.0, 0.0}, a);
  CHECK(p.vx == 0.1 * b.uniform(0.9, 1.1));
}

TEST_CASE("action noise") {
  RngStream rng(5, "action");
  const auto full = perturb_action({1.0, 0.0}, rng);
  CHECK(full.throttle <= 1.0);
  CHECK(full.steer == 0.0);
  RngStream a(7, "action"), b(7, "action");
  const auto p = perturb_action({0.5, -0.5}, a);
  const double d0 = b.uniform(0.9, 1.1), d1 = b.uniform(0.9, 1.1);
  CHECK(p.throttle == 0.5 * d0);
  CHECK(p.steer == -0.5 * d1);
  CHECK(perturb_action({0, 0}, rng) == sim::Action{0, 0});
  for (int i = 0; i < 100000; ++i) {
    const sim::Action x{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto y = perturb_action(x, rng);
    CHECK(std::abs(y.throttle) <= 1.0);
    CHECK(std::abs(y.throttle - x.throttle) <= 0.1 * std::abs(x.throttle) + 1e-12);
    CHECK(std::abs(y.steer - x.steer) <= 0.1 * std::abs(x.steer) + 1e-12);
  }
}

TEST_CASE("raster dump round trip") {
  Raster r;
  for (int i = 0; i < kRasterSize; ++i) r.data[i] = static_cast<float>(i) / kRasterSize;
  const auto bytes = dump_raster(r);
  REQUIRE(bytes.size() == kRasterSize * 4);
  // little-endian float32: 1/256 = 0x3B800000
  CHECK(bytes[4] == 0x00);
  CHECK(bytes[5] == 0x00);
  CHECK(bytes[6] == 0x80);
  CHECK(bytes[7] == 0x3B);
  CHECK(load_raster(bytes) == r);
  CHECK_THROWS(load_raster(std::span<const std::uint8_t>(bytes.data(), 10)));
}

TEST_CASE("privileged state") {
  sim::SimConfig cfg;
  sim::EpisodeState ep;
  ep.pallet = default_pallet();
  ep.vehicle.pose = {0.8, 0.9, 0.0};
  const Pose2D fork = sim::fork_center_pose(ep.vehicle, cfg.vehicle);
  const auto target = sim::target_depth_point(ep.pallet, cfg.vehicle, cfg.episode.target_depth_fraction);
  const auto path = path::build_reference(fork, {target.x, target.y, 0.0});
  const auto s = make_privileged(ep, path, cfg);
  CHECK(s.r_d == Approx(target.x - fork.x));
  CHECK(s.r_cd < 1e-9);
  CHECK(s.r_cpsi < 1e-9);
  CHECK_FALSE(s.reached);
  const auto f = privileged_features(s);
  CHECK(f[0] == static_cast<float>(0.8));
  CHECK(f[6] == static_cast<float>(s.r_d));
  CHECK(f[9] == 0.0f);
}
