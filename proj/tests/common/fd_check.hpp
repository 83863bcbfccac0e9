#pragma once

// Central finite-difference check of the PPO loss gradient, one loss term at
// a time, in double precision.

#include <algorithm>
#include <cmath>
#include <vector>

#include "forklift/ppo.hpp"

namespace forklift::testdata {

struct FdBatch {
  int size = 0;
  std::vector<float> obs, priv, actions;
  std::vector<double> old_log_prob, advantages, value_targets;

  ppo::Minibatch view() const {
    return {size, obs.data(), priv.data(), actions.data(), old_log_prob.data(), advantages.data(), value_targets.data()};
  }
};

// Random batch around a freshly initialized network. Actions sit within
// about one sigma of the mean so that ratios stay inside the clip range for
// some samples and outside it for others.
inline FdBatch make_fd_batch(const nn::ActorCritic<double>& net, int size, RngStream& rng) {
  FdBatch b;
  b.size = size;
  const int od = net.obs_dim(), pd = net.priv_dim();
  b.obs.resize(static_cast<std::size_t>(size) * od);
  b.priv.resize(static_cast<std::size_t>(size) * pd);
  for (float& x : b.obs) x = static_cast<float>(rng.uniform(0.0, 1.0));
  for (float& x : b.priv) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  nn::Workspace<double> ws;
  nn::forward(net, b.obs.data(), b.priv.data(), size, ws);
  std::vector<double> ls(net.log_std.begin(), net.log_std.end());
  for (int i = 0; i < size; ++i) {
    std::array<double, 2> a{}, mu{ws.mu[i * 2], ws.mu[i * 2 + 1]};
    for (int j = 0; j < 2; ++j) {
      a[j] = static_cast<float>(mu[j] + std::exp(ls[j]) * rng.uniform(-1.0, 1.0));
      b.actions.push_back(static_cast<float>(a[j]));
    }
    // Old policy slightly off so ratios differ from 1.
    b.old_log_prob.push_back(ppo::gaussian_log_prob(a, mu, ls) + rng.uniform(-0.4, 0.4));
    b.advantages.push_back(rng.uniform(-2.0, 2.0));
    b.value_targets.push_back(rng.uniform(-1.0, 1.0));
  }
  return b;
}

struct FdReport {
  double max_rel_error = 0.0;
  int checked = 0;
};

// Compares the analytic gradient of w-weighted loss against central
// differences on `per_tensor` random coordinates of every tensor (all of
// them for small tensors).
inline FdReport fd_check(nn::ActorCritic<double> net, const FdBatch& batch, const ppo::LossWeights& w, double clip,
                         int per_tensor, RngStream& rng, double h = 1e-6) {
  nn::Workspace<double> ws;
  nn::ActorCritic<double> grad = net;
  const auto mb = batch.view();
  ppo::ppo_loss(net, mb, w, clip, ws, &grad);

  FdReport rep;
  auto params = net.tensors();
  const auto grads = grad.tensors();
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t].data;
    const std::size_t n = p.size();
    const int count = static_cast<int>(std::min<std::size_t>(n, per_tensor));
    for (int c = 0; c < count; ++c) {
      const std::size_t i = static_cast<int>(n) <= per_tensor ? c : rng.below(n);
      const double keep = p[i];
      p[i] = keep + h;
      const double up = ppo::ppo_loss(net, mb, w, clip, ws, static_cast<nn::ActorCritic<double>*>(nullptr)).total;
      p[i] = keep - h;
      const double down = ppo::ppo_loss(net, mb, w, clip, ws, static_cast<nn::ActorCritic<double>*>(nullptr)).total;
      p[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads[t].data[i];
      // Absolute floor: tiny gradients are dominated by rounding in the
      // difference quotient (about 1e-16 / h).
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      rep.max_rel_error = std::max(rep.max_rel_error, std::abs(numeric - analytic) / scale);
      ++rep.checked;
    }
  }
  return rep;
}

}  // namespace forklift::testdata
