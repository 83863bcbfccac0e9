#pragma once

#include "forklift/refpath.hpp"
#include "forklift/sim.hpp"

namespace forklift::control {

// Privileged path follower used for dataset generation and tests: steers the
// fork center toward a look-ahead point on the reference path, with a speed
// profile that slows down near the goal.
struct ScriptedParams {
  double lookahead = 0.08;     // m
  double cruise_speed = 0.10;  // m/s
  double final_speed = 0.04;   // m/s
  double slow_distance = 0.30;  // m of path remaining where slowing starts
};

sim::Action scripted_action(const sim::EpisodeState& ep, const path::ReferencePath& path,
                            const sim::SimConfig& cfg, const ScriptedParams& p = {});

}  // namespace forklift::control
