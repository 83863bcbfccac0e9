#include "forklift/control.hpp"

#include <algorithm>
#include <cmath>

namespace forklift::control {

sim::Action scripted_action(const sim::EpisodeState& ep, const path::ReferencePath& path,
                            const sim::SimConfig& cfg, const ScriptedParams& p) {
  const auto& vp = cfg.vehicle;
  const Pose2D fork = sim::fork_center_pose(ep.vehicle, vp);
  const path::PathQuery q = path::nearest_point(path, fork.position(), fork.psi);
  const double s_look = std::min(q.s + p.lookahead, path.length());
  const Vec2 target = fork.to_local(path.pose_at(s_look).position());

  // The fork point moves at angle atan(omega * d / v) to the heading; steer
  // so that it heads for the look-ahead point.
  const double alpha = std::atan2(target.y, std::max(target.x, 1e-6));
  const double d = vp.fork_center_offset();
  const double delta = std::atan(-vp.wheelbase * std::tan(std::clamp(alpha, -1.4, 1.4)) / d);
  const double steer = std::clamp(delta / vp.delta_max, -1.0, 1.0);

  const double remaining = std::max(path.length() - q.s, 0.0);
  const double f = std::clamp(remaining / p.slow_distance, 0.0, 1.0);
  const double speed = p.final_speed + f * (p.cruise_speed - p.final_speed);
  return {std::clamp(speed / vp.v_max, -1.0, 1.0), steer};
}

}  // namespace forklift::control
