#include "forklift/reward.hpp"

#include <algorithm>

#include "forklift/error.hpp"

namespace forklift::reward {

void RewardWeights::validate() const {
  for (double a : {alpha1, alpha2, alpha3, alpha4, alpha5, alpha6, alpha7, alpha8}) {
    if (!(a >= 0)) throw ConfigError("reward weights must be non-negative");
  }
  if (!(clamp_eps > 0)) throw ConfigError("reward clamp_eps must be positive");
}

double pallet_motion_penalty(double v_p) { return v_p > kPalletSpeedLimit ? -1.0 : 0.0; }

double speed_penalty(double speed) {
  if (speed <= kSpeedLimit) return 0.0;
  const double e = speed - kSpeedLimit;
  return -(e * e);
}

double action_change_penalty(const sim::Action& a, const sim::Action& a_old) {
  const double dt = a.throttle - a_old.throttle, ds = a.steer - a_old.steer;
  return -(dt * dt + ds * ds);
}

double idle_penalty(double speed, double r_d) {
  return (speed < kIdleSpeed && r_d > kIdleDistance) ? -1.0 : 0.0;
}

PositiveTerms positive_reward(double r_d, double r_cd, double r_cpsi, bool reached, const RewardWeights& w) {
  PositiveTerms t;
  t.r_d_term = w.alpha1 / std::max(r_d, w.clamp_eps);
  t.r_cd_term = w.alpha2 / std::max(r_cd, w.clamp_eps);
  t.r_cpsi_term = w.alpha3 / std::max(r_cpsi, w.clamp_eps);
  t.r_g_term = reached ? w.alpha4 : 0.0;
  return t;
}

PositiveTerms positive_reward(const sensing::PrivilegedState& s, const RewardWeights& w) {
  return positive_reward(s.r_d, s.r_cd, s.r_cpsi, s.reached, w);
}

PenaltyTerms penalty_reward(double v_p, double speed, double r_d, const sim::Action& a,
                            const sim::Action& a_old, const RewardWeights& w) {
  PenaltyTerms t;
  t.r_p = w.alpha5 * pallet_motion_penalty(v_p);
  t.r_v = w.alpha6 * speed_penalty(speed);
  t.r_a = w.alpha7 * action_change_penalty(a, a_old);
  t.r_ini = w.alpha8 * idle_penalty(speed, r_d);
  return t;
}

PenaltyTerms penalty_reward(const sensing::PrivilegedState& s, const sim::Action& a,
                            const sim::Action& a_old, const RewardWeights& w) {
  return penalty_reward(s.v_p, s.speed, s.r_d, a, a_old, w);
}

RewardBreakdown total_reward(const PositiveTerms& pos, const PenaltyTerms& pen) {
  RewardBreakdown b;
  b.r_d_term = pos.r_d_term;
  b.r_cd_term = pos.r_cd_term;
  b.r_cpsi_term = pos.r_cpsi_term;
  b.r_g_term = pos.r_g_term;
  b.r_p = pen.r_p;
  b.r_v = pen.r_v;
  b.r_a = pen.r_a;
  b.r_ini = pen.r_ini;
  b.total = pos.r_d_term + pos.r_cd_term + pos.r_cpsi_term + pos.r_g_term + pen.r_p + pen.r_v + pen.r_a +
            pen.r_ini;
  return b;
}

}  // namespace forklift::reward
