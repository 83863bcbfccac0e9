#pragma once

#include "forklift/sensing.hpp"
#include "forklift/sim.hpp"

namespace forklift::reward {

struct RewardWeights {
  double alpha1 = 0.02;   // 1 / r_d
  double alpha2 = 0.01;   // 1 / r_cd
  double alpha3 = 0.005;  // 1 / r_cpsi
  double alpha4 = 200.0;  // r_g
  double alpha5 = 1.0;    // r_p
  double alpha6 = 10.0;   // r_v
  double alpha7 = 0.5;    // r_a
  double alpha8 = 0.05;   // r_ini
  double clamp_eps = 0.01;

  void validate() const;
};

inline constexpr double kPalletSpeedLimit = 0.01;  // m/s
inline constexpr double kSpeedLimit = 0.07;        // m/s
inline constexpr double kIdleSpeed = 0.05;         // m/s
inline constexpr double kIdleDistance = 0.3;       // m

struct PositiveTerms {
  double r_d_term = 0.0;
  double r_cd_term = 0.0;
  double r_cpsi_term = 0.0;
  double r_g_term = 0.0;
};

// Weighted penalty terms, each <= 0.
struct PenaltyTerms {
  double r_p = 0.0;
  double r_v = 0.0;
  double r_a = 0.0;
  double r_ini = 0.0;
};

struct RewardBreakdown {
  double r_d_term = 0.0;
  double r_cd_term = 0.0;
  double r_cpsi_term = 0.0;
  double r_g_term = 0.0;
  double r_p = 0.0;
  double r_v = 0.0;
  double r_a = 0.0;
  double r_ini = 0.0;
  double total = 0.0;
};

// Unweighted penalty components.
double pallet_motion_penalty(double v_p);
double speed_penalty(double speed);
double action_change_penalty(const sim::Action& a, const sim::Action& a_old);
double idle_penalty(double speed, double r_d);

PositiveTerms positive_reward(double r_d, double r_cd, double r_cpsi, bool reached, const RewardWeights& w);
PositiveTerms positive_reward(const sensing::PrivilegedState& s, const RewardWeights& w);

PenaltyTerms penalty_reward(double v_p, double speed, double r_d, const sim::Action& a,
                            const sim::Action& a_old, const RewardWeights& w);
PenaltyTerms penalty_reward(const sensing::PrivilegedState& s, const sim::Action& a,
                            const sim::Action& a_old, const RewardWeights& w);

RewardBreakdown total_reward(const PositiveTerms& pos, const PenaltyTerms& pen);

}  // namespace forklift::reward
