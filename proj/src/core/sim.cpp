#include "forklift/sim.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "forklift/error.hpp"

namespace forklift::sim {

namespace {

constexpr double kContactSkin = 1e-6;
constexpr int kContactIterations = 8;

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(what);
}

double clamp_unit(double a, const char* name) {
  if (a >= -1.0 && a <= 1.0) return a;
  static std::atomic<int> warned{0};
  if (warned.fetch_add(1) < 5) spdlog::warn("{} command {} outside [-1, 1], clamped", name, a);
  if (std::isnan(a)) return 0.0;
  return std::clamp(a, -1.0, 1.0);
}

// sin(x)/x, exact at zero.
double sinc(double x) {
  if (std::abs(x) < 1e-4) return 1.0 - x * x / 6.0;
  return std::sin(x) / x;
}

Quad local_box(const Pose2D& frame, Vec2 lo, Vec2 hi) {
  const Quad q = make_box(lo, hi);
  return {frame.to_world(q[0]), frame.to_world(q[1]), frame.to_world(q[2]), frame.to_world(q[3])};
}

}  // namespace

void VehicleParams::validate() const {
  require(body_length > 0 && body_width > 0 && fork_length > 0 && fork_width > 0 &&
              fork_spacing > 0 && wheelbase > 0 && v_max > 0 && delta_max > 0 &&
              speed_lag_tau > 0 && steer_rate_max > 0,
          "vehicle parameters must be positive");
  require(fork_spacing + fork_width <= body_width, "forks must fit within the body width");
  require(wheelbase < body_length, "wheelbase must be shorter than the body");
  require(delta_max < 1.5, "delta_max must be below pi/2");
}

void PalletGeometry::validate() const {
  require(width > 0 && depth > 0 && pocket_width > 0 && pocket_spacing > 0,
          "pallet dimensions must be positive");
  require(pocket_spacing > pocket_width, "pockets overlap");
  require(pocket_spacing + pocket_width < width, "pockets exceed the pallet width");
}

std::array<Segment, 4> Arena::walls() const {
  const Vec2 a{0, 0}, b{side, 0}, c{side, side}, d{0, side};
  return {Segment{a, b}, Segment{b, c}, Segment{c, d}, Segment{d, a}};
}

Quad Arena::stand() const {
  return make_box(stand_center - stand_size * 0.5, stand_center + stand_size * 0.5);
}

void Arena::validate() const {
  require(side > 0, "arena side must be positive");
  auto inside = [&](Vec2 p) { return p.x >= 0 && p.y >= 0 && p.x <= side && p.y <= side; };
  for (const Vec2& p : start_triangle) require(inside(p), "start triangle outside the arena");
  for (const Vec2& p : stand()) require(inside(p), "pallet stand outside the arena");
  require(std::abs(cross(start_triangle[1] - start_triangle[0], start_triangle[2] - start_triangle[0])) >
              1e-9,
          "start triangle is degenerate");
}

void EpisodeParams::validate() const {
  require(dt > 0 && substeps >= 1, "dt and substeps must be positive");
  require(stop_speed_eps > 0 && displacement_fail_limit > 0 && t_max > 0,
          "episode thresholds must be positive");
  require(heading_cone >= 0 && heading_cone < 3.14159, "heading_cone must be in [0, pi)");
  require(target_depth_fraction > 0 && target_depth_fraction <= 1,
          "target_depth_fraction must be in (0, 1]");
  require(decision_delay >= 0, "decision_delay must be non-negative");
}

void SimConfig::validate() const {
  vehicle.validate();
  pallet.validate();
  arena.validate();
  episode.validate();
  const Vec2 p = episode.pallet_pose.position();
  require(p.x > 0 && p.y > 0 && p.x < arena.side && p.y < arena.side, "pallet outside the arena");
  require(std::abs(pallet.pocket_width - vehicle.fork_width) > 0 &&
              pallet.pocket_width > vehicle.fork_width,
          "pockets narrower than the forks");
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Approach: return "Approach";
    case Phase::Stopped: return "Stopped";
    case Phase::Lifting: return "Lifting";
    case Phase::Done: return "Done";
  }
  return "?";
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Running: return "Running";
    case Outcome::ApproachSuccess: return "ApproachSuccess";
    case Outcome::PalletMovedFail: return "PalletMovedFail";
    case Outcome::OutOfArena: return "OutOfArena";
    case Outcome::Timeout: return "Timeout";
    case Outcome::LoadSuccess: return "LoadSuccess";
    case Outcome::LoadFail: return "LoadFail";
  }
  return "?";
}

Outcome outcome_from_string(std::string_view s) {
  for (Outcome o : {Outcome::Running, Outcome::ApproachSuccess, Outcome::PalletMovedFail,
                    Outcome::OutOfArena, Outcome::Timeout, Outcome::LoadSuccess, Outcome::LoadFail}) {
    if (to_string(o) == s) return o;
  }
  throw ConfigError("unknown outcome '" + std::string(s) + "'");
}

VehicleState step_vehicle(const VehicleState& state, Action action, double dt,
                          const VehicleParams& params, int substeps) {
  if (!(dt > 0) || substeps < 1) throw ContractViolation("step_vehicle: dt and substeps must be positive");
  const double throttle = clamp_unit(action.throttle, "throttle");
  const double steer = clamp_unit(action.steer, "steer");
  const double h = dt / substeps;
  const double decay = std::exp(-h / params.speed_lag_tau);
  // Mean of the exponential approach over one substep, relative to its start.
  const double mean_decay = params.speed_lag_tau / h * (1.0 - decay);
  const double max_slew = params.steer_rate_max * h;
  const double target_speed = throttle * params.v_max;
  const double target_delta = steer * params.delta_max;

  VehicleState s = state;
  for (int i = 0; i < substeps; ++i) {
    const double v0 = std::clamp(s.v, -params.v_max, params.v_max);
    s.v = target_speed + (v0 - target_speed) * decay;
    const double v_mean = target_speed + (v0 - target_speed) * mean_decay;
    const double delta_mid =
        std::clamp(s.delta + std::clamp(target_delta - s.delta, -0.5 * max_slew, 0.5 * max_slew),
                   -params.delta_max, params.delta_max);
    s.delta += std::clamp(target_delta - s.delta, -max_slew, max_slew);
    s.delta = std::clamp(s.delta, -params.delta_max, params.delta_max);
    s.omega = -(s.v / params.wheelbase) * std::tan(s.delta);

    const double dpsi = -(v_mean / params.wheelbase) * std::tan(delta_mid) * h;
    const double chord = v_mean * h * sinc(0.5 * dpsi);
    const double dir = s.pose.psi + 0.5 * dpsi;
    s.pose.x += chord * std::cos(dir);
    s.pose.y += chord * std::sin(dir);
    s.pose.psi = normalize_angle(s.pose.psi + dpsi);
  }
  return s;
}

VehicleShape vehicle_shape(const VehicleState& v, const VehicleParams& p) {
  const double fx = 0.5 * p.body_length + 0.5 * p.fork_length;
  const double fy = 0.5 * p.fork_spacing;
  const Pose2D& b = v.pose;
  const Vec2 fl = b.to_world({fx, fy});
  const Vec2 fr = b.to_world({fx, -fy});
  return {make_rect(b, p.body_length, p.body_width),
          make_rect({fl.x, fl.y, b.psi}, p.fork_length, p.fork_width),
          make_rect({fr.x, fr.y, b.psi}, p.fork_length, p.fork_width)};
}

Pose2D fork_center_pose(const VehicleState& v, const VehicleParams& p) {
  const Vec2 c = v.pose.to_world({p.fork_center_offset(), 0.0});
  return {c.x, c.y, v.pose.psi};
}

PalletShape pallet_shape(const PalletState& p) {
  const PalletGeometry& g = p.dims;
  const double hx = 0.5 * g.depth, hw = 0.5 * g.width;
  const double pc = 0.5 * g.pocket_spacing, pw = 0.5 * g.pocket_width;
  const Pose2D& f = p.pose;
  PalletShape s;
  s.blocks = {local_box(f, {-hx, -hw}, {hx, -pc - pw}), local_box(f, {-hx, -pc + pw}, {hx, pc - pw}),
              local_box(f, {-hx, pc + pw}, {hx, hw})};
  // A vehicle facing the pocket face looks along -x of the pallet frame,
  // so its left is the pallet's -y.
  s.pocket_left = local_box(f, {-hx, -pc - pw}, {hx, -pc + pw});
  s.pocket_right = local_box(f, {-hx, pc - pw}, {hx, pc + pw});
  return s;
}

Vec2 target_depth_point(const PalletState& p, const VehicleParams& vp, double depth_fraction) {
  const double x = 0.5 * p.dims.depth - (depth_fraction * vp.fork_length - 0.5 * vp.fork_length);
  return p.pose.to_world({x, 0.0});
}

namespace {

// Depth fraction and clearance of one fork against one pocket.
void fork_in_pocket(const Quad& fork, const PalletState& pallet, double pocket_center_y,
                    const VehicleParams& vp, double& depth, double& clearance) {
  const PalletGeometry& g = pallet.dims;
  const double hx = 0.5 * g.depth, pw = 0.5 * g.pocket_width;
  const Quad pocket = local_box(pallet.pose, {-hx, pocket_center_y - pw}, {hx, pocket_center_y + pw});
  depth = std::clamp(overlap_area(fork, pocket) / (vp.fork_length * vp.fork_width), 0.0, 1.0);

  // Lateral extent of the part of the fork that lies within the pallet depth.
  Quad local{};
  for (int i = 0; i < 4; ++i) local[i] = pallet.pose.to_local(fork[i]);
  const Quad slab = make_box({-hx, -1e3}, {hx, 1e3});
  std::array<Vec2, 16> clipped{};
  const int n = clip_convex(local, slab, clipped);
  if (n < 3) {
    clearance = 0.0;
    return;
  }
  double ylo = clipped[0].y, yhi = clipped[0].y;
  for (int i = 1; i < n; ++i) {
    ylo = std::min(ylo, clipped[i].y);
    yhi = std::max(yhi, clipped[i].y);
  }
  clearance = std::min(pocket_center_y + pw - yhi, ylo - (pocket_center_y - pw));
}

}  // namespace

InsertionStatus fork_pocket_geometry(const VehicleState& vehicle, const PalletState& pallet,
                                     const VehicleParams& params) {
  const VehicleShape vs = vehicle_shape(vehicle, params);
  const double pc = 0.5 * pallet.dims.pocket_spacing;
  InsertionStatus s;
  fork_in_pocket(vs.fork_left, pallet, -pc, params, s.depth_left, s.lateral_clear_left);
  fork_in_pocket(vs.fork_right, pallet, pc, params, s.depth_right, s.lateral_clear_right);
  s.aligned = s.depth_left > 0 && s.depth_right > 0 && s.lateral_clear_left > 0 &&
              s.lateral_clear_right > 0;
  return s;
}

ContactResult resolve_pallet_contact(const VehicleState& vehicle, const PalletState& pallet,
                                     double dt, const VehicleParams& params) {
  if (!(dt > 0)) throw ContractViolation("resolve_pallet_contact: dt must be positive");
  const VehicleShape vs = vehicle_shape(vehicle, params);
  const std::array<const Quad*, 3> parts{&vs.body, &vs.fork_left, &vs.fork_right};

  ContactResult r{pallet, {0.0, 0.0}};
  for (int it = 0; it < kContactIterations; ++it) {
    const PalletShape ps = pallet_shape(r.pallet);
    Vec2 push{};
    double deepest = 0.0;
    for (const Quad* part : parts) {
      for (const Quad& block : ps.blocks) {
        if (auto mtv = separating_translation(*part, block)) {
          const double m = norm(*mtv);
          if (m > deepest) {
            deepest = m;
            push = *mtv;
          }
        }
      }
    }
    if (deepest == 0.0) break;
    push = push * ((deepest + kContactSkin) / deepest);
    r.pallet.pose.x += push.x;
    r.pallet.pose.y += push.y;
    r.translation += push;
  }
  const double moved = norm(r.translation);
  r.pallet.v_p = moved / dt;
  r.pallet.displaced_total += moved;
  return r;
}

bool touches_walls(const VehicleShape& shape, const Arena& arena) {
  for (const Quad* q : {&shape.body, &shape.fork_left, &shape.fork_right}) {
    for (const Vec2& p : *q) {
      if (p.x <= 0.0 || p.y <= 0.0 || p.x >= arena.side || p.y >= arena.side) return true;
    }
  }
  return false;
}

bool reached_target(const VehicleState& vehicle, const PalletState& pallet, const SimConfig& cfg) {
  const Vec2 fc = fork_center_pose(vehicle, cfg.vehicle).position();
  const Vec2 target = pallet.pose.to_local(
      target_depth_point(pallet, cfg.vehicle, cfg.episode.target_depth_fraction));
  if (pallet.pose.to_local(fc).x > target.x) return false;
  return fork_pocket_geometry(vehicle, pallet, cfg.vehicle).aligned;
}

EpisodeState reset_episode(RngStream& rng, const SimConfig& cfg) {
  const auto& tri = cfg.arena.start_triangle;
  const Vec2 pallet_pos = cfg.episode.pallet_pose.position();
  EpisodeState ep;
  ep.pallet.pose = cfg.episode.pallet_pose;
  ep.pallet.dims = cfg.pallet;
  const PalletShape ps = pallet_shape(ep.pallet);

  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const Vec2 p = tri[0] * (1.0 - r1) + tri[1] * (r1 * (1.0 - r2)) + tri[2] * (r1 * r2);
    const double bearing = std::atan2(pallet_pos.y - p.y, pallet_pos.x - p.x);
    const double psi = bearing + rng.uniform(-cfg.episode.heading_cone, cfg.episode.heading_cone);

    VehicleState v;
    v.pose = {p.x, p.y, normalize_angle(psi)};
    const VehicleShape vs = vehicle_shape(v, cfg.vehicle);
    if (touches_walls(vs, cfg.arena)) continue;
    bool hits_pallet = false;
    for (const Quad* part : {&vs.body, &vs.fork_left, &vs.fork_right}) {
      for (const Quad& block : ps.blocks) hits_pallet |= separating_translation(*part, block).has_value();
    }
    if (hits_pallet) continue;

    ep.vehicle = v;
    ep.start_pose = v.pose;
    return ep;
  }
  throw ConfigError("reset_episode: no collision-free start pose after 1000 samples");
}

namespace {

// Integrates one control tick with contact; returns the tick's pallet translation.
void advance(EpisodeState& ep, Action applied, const SimConfig& cfg) {
  const int n = cfg.episode.substeps;
  const double h = cfg.episode.dt / n;
  Vec2 moved{};
  for (int i = 0; i < n; ++i) {
    ep.vehicle = step_vehicle(ep.vehicle, applied, h, cfg.vehicle, 1);
    ContactResult c = resolve_pallet_contact(ep.vehicle, ep.pallet, h, cfg.vehicle);
    ep.pallet = c.pallet;
    moved += c.translation;
  }
  ep.pallet.v_p = norm(moved) / cfg.episode.dt;
  ep.t += cfg.episode.dt;
  ++ep.step_index;
  if (std::abs(ep.vehicle.v) < cfg.episode.stop_speed_eps) {
    ep.stop_timer += cfg.episode.dt;
  } else {
    ep.stop_timer = 0.0;
  }
}

}  // namespace

StepInfo step_episode(EpisodeState& ep, Action commanded, Action applied, const SimConfig& cfg) {
  if (ep.phase != Phase::Approach || ep.outcome != Outcome::Running) {
    throw ContractViolation("step_episode: episode is not in the running Approach phase");
  }
  advance(ep, applied, cfg);
  ep.a_old2 = ep.a_old1;
  ep.a_old1 = commanded;

  if (touches_walls(vehicle_shape(ep.vehicle, cfg.vehicle), cfg.arena)) {
    ep.outcome = Outcome::OutOfArena;
  } else if (ep.pallet.displaced_total > cfg.episode.displacement_fail_limit) {
    ep.outcome = Outcome::PalletMovedFail;
  } else if (reached_target(ep.vehicle, ep.pallet, cfg)) {
    ep.outcome = Outcome::ApproachSuccess;
  } else if (ep.t >= cfg.episode.t_max - 1e-9) {
    ep.outcome = Outcome::Timeout;
  }

  if (ep.outcome == Outcome::ApproachSuccess) {
    ep.phase = Phase::Stopped;
    ep.stop_timer = 0.0;
  } else if (ep.outcome != Outcome::Running) {
    ep.phase = Phase::Done;
  }
  return {ep.outcome != Outcome::Running, ep.outcome};
}

void begin_stop(EpisodeState& ep) {
  if (ep.phase != Phase::Approach) throw ContractViolation("begin_stop: not in the Approach phase");
  ep.phase = Phase::Stopped;
}

bool settle_episode(EpisodeState& ep, const SimConfig& cfg) {
  if (ep.phase != Phase::Stopped) throw ContractViolation("settle_episode: not in the Stopped phase");
  const Action hold{0.0, ep.vehicle.delta / cfg.vehicle.delta_max};
  advance(ep, hold, cfg);
  return ep.stop_timer >= cfg.episode.decision_delay - 1e-9;
}

bool load_succeeds(const InsertionStatus& s, double displaced_total, double displacement_limit) {
  return std::min(s.depth_left, s.depth_right) >= 2.0 / 3.0 && s.lateral_clear_left > 0 &&
         s.lateral_clear_right > 0 && displaced_total <= displacement_limit;
}

LoadOutcome lift_sequence(EpisodeState& ep, const SimConfig& cfg) {
  if (ep.phase != Phase::Stopped) throw ContractViolation("lift_sequence: not in the Stopped phase");
  ep.phase = Phase::Lifting;
  const InsertionStatus s = fork_pocket_geometry(ep.vehicle, ep.pallet, cfg.vehicle);
  const bool ok = load_succeeds(s, ep.pallet.displaced_total, cfg.episode.displacement_fail_limit);
  ep.outcome = ok ? Outcome::LoadSuccess : Outcome::LoadFail;
  ep.phase = Phase::Done;
  return ok ? LoadOutcome::LoadSuccess : LoadOutcome::LoadFail;
}

}  // namespace forklift::sim
