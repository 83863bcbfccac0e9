#include "forklift/ppo.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "forklift/error.hpp"

namespace forklift::ppo {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 ln(2 pi)
constexpr double kHalfLog2PiE = 1.41893853320467274178;  // 0.5 ln(2 pi e)

bool finite(const LossBreakdown& l) {
  return std::isfinite(l.l_ppo) && std::isfinite(l.l_value) && std::isfinite(l.entropy) && std::isfinite(l.l_bound) &&
         std::isfinite(l.total);
}

}  // namespace

void PpoConfig::validate() const {
  auto req = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  req(gamma > 0 && gamma <= 1, "gamma must be in (0, 1]");
  req(lam > 0 && lam <= 1, "lam must be in (0, 1]");
  req(clip_eps > 0 && clip_eps < 1, "clip_eps must be in (0, 1)");
  req(c1 >= 0 && c2 >= 0 && c3 >= 0, "loss coefficients must be non-negative");
  req(lr > 0, "lr must be positive");
  req(epochs >= 1 && minibatch >= 1 && horizon >= 1 && envs >= 1, "epochs, minibatch, horizon, envs must be >= 1");
  // Only whole updates run, so the budget must hold at least one.
  req(total_steps >= static_cast<std::int64_t>(envs) * horizon, "total_steps must be at least envs * horizon");
  req(max_grad_norm >= 0, "max_grad_norm must be non-negative");
  req(log_std_init >= nn::kLogStdMin && log_std_init <= nn::kLogStdMax, "log_std_init outside the clamp range");
  req(workers >= 1, "workers must be >= 1");
  req(checkpoint_every >= 1, "checkpoint_every must be >= 1");
}

double gaussian_log_prob(std::span<const double> a, std::span<const double> mu, std::span<const double> log_std) {
  double lp = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double z = (a[j] - mu[j]) * std::exp(-log_std[j]);
    lp += -0.5 * z * z - log_std[j] - kHalfLog2Pi;
  }
  return lp;
}

double gaussian_entropy(std::span<const double> log_std) {
  double h = 0.0;
  for (double ls : log_std) h += ls + kHalfLog2PiE;
  return h;
}

PolicySample sample_action(std::span<const double> mu, std::span<const double> log_std, RngStream& rng) {
  PolicySample s;
  for (int j = 0; j < kActionDim; ++j) s.raw[j] = mu[j] + std::exp(log_std[j]) * rng.normal();
  s.log_prob = gaussian_log_prob(s.raw, mu, log_std);
  s.action = {std::clamp(s.raw[0], -1.0, 1.0), std::clamp(s.raw[1], -1.0, 1.0)};
  return s;
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
              double gamma, double lam) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1 || dones.size() != n) {
    throw ContractViolation("gae: need len(values) = len(rewards) + 1 = len(dones) + 1");
  }
  GaeResult r;
  r.advantages.resize(n);
  r.value_targets.resize(n);
  double next = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double keep = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * values[k + 1] * keep - values[k];
    next = delta + gamma * lam * keep * next;
    r.advantages[k] = next;
    r.value_targets[k] = next + values[k];
  }
  return r;
}

template <class T>
LossBreakdown ppo_loss(const nn::ActorCritic<T>& net, const Minibatch& mb, const LossWeights& w, double clip_eps,
                       nn::Workspace<T>& ws, nn::ActorCritic<T>* grad) {
  const int B = mb.size;
  if (B < 1) throw ContractViolation("ppo_loss: empty minibatch");
  if (net.action_dim() != kActionDim) throw ContractViolation("ppo_loss: action dimension must be 2");
  nn::forward(net, mb.obs, mb.priv, B, ws);

  std::array<double, kActionDim> ls{}, inv_var{};
  for (int j = 0; j < kActionDim; ++j) {
    ls[j] = static_cast<double>(nn::effective_log_std(net.log_std[j]));
    inv_var[j] = std::exp(-2.0 * ls[j]);
  }

  LossBreakdown L;
  std::vector<T> dmu(static_cast<std::size_t>(B) * kActionDim), dvalue(B);
  std::array<double, kActionDim> dls{};
  const double inv_b = 1.0 / B;
  for (int i = 0; i < B; ++i) {
    std::array<double, kActionDim> mu{}, a{};
    for (int j = 0; j < kActionDim; ++j) {
      mu[j] = static_cast<double>(ws.mu[i * kActionDim + j]);
      a[j] = static_cast<double>(mb.actions[i * kActionDim + j]);
    }
    const double logp = gaussian_log_prob(a, mu, ls);
    const double ratio = std::exp(logp - mb.old_log_prob[i]);
    const double adv = mb.advantages[i];
    const double s1 = ratio * adv;
    const double s2 = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv;
    L.l_ppo -= std::min(s1, s2) * inv_b;
    // Only the unclipped branch carries gradient.
    const double dlogp = s1 <= s2 ? -adv * ratio * inv_b : 0.0;

    const double err = static_cast<double>(ws.value[i]) - mb.value_targets[i];
    L.l_value += err * err * inv_b;
    dvalue[i] = static_cast<T>(w.value * 2.0 * err * inv_b);

    const double mnorm = std::hypot(mu[0], mu[1]);
    L.l_bound += mnorm * inv_b;
    for (int j = 0; j < kActionDim; ++j) {
      const double diff = a[j] - mu[j];
      double g = w.ppo * dlogp * diff * inv_var[j];
      if (mnorm > 0) g += w.bound * mu[j] / mnorm * inv_b;
      dmu[i * kActionDim + j] = static_cast<T>(g);
      dls[j] += w.ppo * dlogp * (diff * diff * inv_var[j] - 1.0);
    }
  }
  L.entropy = gaussian_entropy(ls);
  L.total = w.ppo * L.l_ppo + w.value * L.l_value + w.entropy * L.entropy + w.bound * L.l_bound;
  if (!finite(L)) return L;

  if (grad) {
    nn::backward(net, ws, dmu.data(), dvalue.data(), *grad);
    grad->log_std.resize(kActionDim);
    for (int j = 0; j < kActionDim; ++j) {
      const double raw = static_cast<double>(net.log_std[j]);
      const bool inside = raw >= nn::kLogStdMin && raw <= nn::kLogStdMax;
      grad->log_std[j] = static_cast<T>(inside ? dls[j] + w.entropy : 0.0);
    }
  }
  return L;
}

template LossBreakdown ppo_loss(const nn::ActorCritic<float>&, const Minibatch&, const LossWeights&, double,
                                nn::Workspace<float>&, nn::ActorCritic<float>*);
template LossBreakdown ppo_loss(const nn::ActorCritic<double>&, const Minibatch&, const LossWeights&, double,
                                nn::Workspace<double>&, nn::ActorCritic<double>*);

Adam::Adam(std::size_t parameter_count, double beta1, double beta2, double eps)
    : m(parameter_count, 0.0), v(parameter_count, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::span<const nn::TensorView<float>> params, std::span<const nn::TensorView<const float>> grads,
                double lr) {
  if (params.size() != grads.size()) throw ContractViolation("Adam: parameter/gradient tensor count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t k = 0;
  for (std::size_t n = 0; n < params.size(); ++n) {
    const auto& p = params[n].data;
    const auto& g = grads[n].data;
    if (p.size() != g.size()) throw ContractViolation("Adam: tensor shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i, ++k) {
      if (k >= m.size()) throw ContractViolation("Adam: more parameters than optimizer state");
      const double gi = g[i];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * gi;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * gi * gi;
      const double mh = m[k] / c1, vh = v[k] / c2;
      p[i] = static_cast<float>(static_cast<double>(p[i]) - lr * mh / (std::sqrt(vh) + eps_));
    }
  }
  if (k != m.size()) throw ContractViolation("Adam: fewer parameters than optimizer state");
}

double clip_grad_norm(std::span<const nn::TensorView<float>> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& t : grads) {
    for (float g : t.data) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& t : grads) {
      for (float& g : t.data) g = static_cast<float>(g * s);
    }
  }
  return norm;
}

void RolloutBuffer::allocate(int t, int w, int obs_d, int priv_d) {
  horizon = t;
  envs = w;
  obs_dim = obs_d;
  priv_dim = priv_d;
  const std::size_t n = size();
  obs.assign(n * obs_d, 0.0f);
  priv.assign(n * priv_d, 0.0f);
  actions.assign(n * kActionDim, 0.0f);
  log_prob.assign(n, 0.0);
  rewards.assign(n, 0.0);
  values.assign(n, 0.0);
  dones.assign(n, 0);
  bootstrap.assign(w, 0.0);
  advantages.assign(n, 0.0);
  value_targets.assign(n, 0.0);
}

RolloutStats collect_rollouts(env::EnvPool& pool, const nn::ActorCritic<float>& net, std::vector<RngStream>& policy_rngs,
                              RolloutBuffer& buf, nn::Workspace<float>& ws) {
  const int W = pool.size(), T = buf.horizon;
  if (buf.envs != W || static_cast<int>(policy_rngs.size()) != W) {
    throw ContractViolation("collect_rollouts: buffer, pool and rng counts differ");
  }
  const int od = buf.obs_dim, pd = buf.priv_dim;
  std::array<double, kActionDim> ls{};
  for (int j = 0; j < kActionDim; ++j) ls[j] = nn::effective_log_std(static_cast<double>(net.log_std[j]));

  pool.reset_all();
  std::vector<sim::Action> actions(W);
  std::vector<env::StepResult> results(W);
  std::vector<double> running(W, 0.0);
  RolloutStats stats;
  double return_sum = 0.0;

  auto gather = [&](float* o, float* p) {
    for (int i = 0; i < W; ++i) {
      const auto& e = pool.env(i);
      std::copy(e.observation().begin(), e.observation().end(), o + static_cast<std::size_t>(i) * od);
      std::copy(e.privileged_features().begin(), e.privileged_features().end(), p + static_cast<std::size_t>(i) * pd);
    }
  };

  for (int t = 0; t < T; ++t) {
    const std::size_t base = static_cast<std::size_t>(t) * W;
    float* o = buf.obs.data() + base * od;
    float* p = buf.priv.data() + base * pd;
    gather(o, p);
    nn::forward(net, o, p, W, ws);
    for (int i = 0; i < W; ++i) {
      const std::array<double, kActionDim> mu{ws.mu[i * kActionDim], ws.mu[i * kActionDim + 1]};
      const PolicySample s = sample_action(mu, ls, policy_rngs[i]);
      // The stored float sample is what the update sees; score that one.
      std::array<double, kActionDim> stored{};
      for (int j = 0; j < kActionDim; ++j) {
        buf.actions[(base + i) * kActionDim + j] = static_cast<float>(s.raw[j]);
        stored[j] = static_cast<float>(s.raw[j]);
      }
      buf.log_prob[base + i] = gaussian_log_prob(stored, mu, ls);
      buf.values[base + i] = ws.value[i];
      actions[i] = {std::clamp(stored[0], -1.0, 1.0), std::clamp(stored[1], -1.0, 1.0)};
    }
    pool.step(actions, results);
    for (int i = 0; i < W; ++i) {
      const auto& r = results[i];
      buf.rewards[base + i] = r.reward.total;
      buf.dones[base + i] = r.info.terminated ? 1 : 0;
      running[i] += r.reward.total;
      if (r.info.terminated) {
        ++stats.episodes;
        if (r.info.outcome == sim::Outcome::ApproachSuccess) ++stats.successes;
        return_sum += running[i];
        running[i] = 0.0;
      }
    }
  }

  std::vector<float> o(static_cast<std::size_t>(W) * od), p(static_cast<std::size_t>(W) * pd);
  gather(o.data(), p.data());
  nn::forward(net, o.data(), p.data(), W, ws);
  for (int i = 0; i < W; ++i) buf.bootstrap[i] = ws.value[i];

  if (stats.episodes > 0) {
    stats.mean_return = return_sum / stats.episodes;
    stats.success_rate = static_cast<double>(stats.successes) / stats.episodes;
  }
  return stats;
}

void compute_advantages(RolloutBuffer& buf, double gamma, double lam, bool normalize) {
  const int T = buf.horizon, W = buf.envs;
  std::vector<double> r(T), v(T + 1);
  std::vector<std::uint8_t> d(T);
  for (int i = 0; i < W; ++i) {
    for (int t = 0; t < T; ++t) {
      const std::size_t k = static_cast<std::size_t>(t) * W + i;
      r[t] = buf.rewards[k];
      v[t] = buf.values[k];
      d[t] = buf.dones[k];
    }
    v[T] = buf.bootstrap[i];
    const GaeResult g = gae(r, v, d, gamma, lam);
    for (int t = 0; t < T; ++t) {
      const std::size_t k = static_cast<std::size_t>(t) * W + i;
      buf.advantages[k] = g.advantages[t];
      buf.value_targets[k] = g.value_targets[t];
    }
  }
  if (!normalize || buf.size() < 2) return;
  double mean = 0.0;
  for (double a : buf.advantages) mean += a;
  mean /= static_cast<double>(buf.size());
  double var = 0.0;
  for (double a : buf.advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(buf.size()));
  for (double& a : buf.advantages) a = (a - mean) / (sd + 1e-8);
}

TrainState init_train_state(const PpoConfig& cfg, std::uint64_t seed) {
  TrainState s;
  s.net = nn::ActorCritic<float>(nn::NetShape{});
  RngStream rng(seed, "init");
  nn::init_actor_critic(s.net, rng, cfg.log_std_init);
  s.adam = Adam(s.net.parameter_count());
  return s;
}

TrainState train(const env::EnvConfig& env_cfg, const PpoConfig& cfg, std::uint64_t seed, const TrainHooks& hooks) {
  cfg.validate();
  TrainState state = init_train_state(cfg, seed);
  env::EnvPool pool(env_cfg, derive_seed(seed, "envs"), cfg.envs, cfg.workers);
  std::vector<RngStream> policy_rngs;
  for (int i = 0; i < cfg.envs; ++i) policy_rngs.emplace_back(seed, "policy", i);

  RolloutBuffer buf;
  buf.allocate(cfg.horizon, cfg.envs, state.net.obs_dim(), state.net.priv_dim());
  nn::Workspace<float> ws;
  nn::ActorCritic<float> grad = state.net;
  const LossWeights weights = LossWeights::from(cfg);
  const std::size_t n = buf.size();
  const std::size_t mb = std::min<std::size_t>(cfg.minibatch, n);
  const int od = buf.obs_dim, pd = buf.priv_dim;

  std::vector<std::size_t> order(n);
  std::vector<float> mb_obs(mb * od), mb_priv(mb * pd), mb_act(mb * kActionDim);
  std::vector<double> mb_lp(mb), mb_adv(mb), mb_vt(mb);

  // Whole updates only; the step count never exceeds the budget.
  while (state.steps + static_cast<std::int64_t>(n) <= cfg.total_steps) {
    UpdateMetrics metrics;
    metrics.rollout = collect_rollouts(pool, state.net, policy_rngs, buf, ws);
    state.steps += static_cast<std::int64_t>(n);
    compute_advantages(buf, cfg.gamma, cfg.lam);

    RngStream shuffle(seed, "minibatch", static_cast<std::uint64_t>(state.update));
    int batches = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);
      for (std::size_t start = 0; start < n; start += mb) {
        const std::size_t size = std::min(mb, n - start);
        for (std::size_t r = 0; r < size; ++r) {
          const std::size_t k = order[start + r];
          std::copy_n(buf.obs.data() + k * od, od, mb_obs.data() + r * od);
          std::copy_n(buf.priv.data() + k * pd, pd, mb_priv.data() + r * pd);
          std::copy_n(buf.actions.data() + k * kActionDim, kActionDim, mb_act.data() + r * kActionDim);
          mb_lp[r] = buf.log_prob[k];
          mb_adv[r] = buf.advantages[k];
          mb_vt[r] = buf.value_targets[k];
        }
        const Minibatch batch{static_cast<int>(size), mb_obs.data(), mb_priv.data(), mb_act.data(),
                              mb_lp.data(),           mb_adv.data(), mb_vt.data()};
        const LossBreakdown L = ppo_loss(state.net, batch, weights, cfg.clip_eps, ws, &grad);
        if (!finite(L)) {
          throw DivergenceError("non-finite loss at update " + std::to_string(state.update) + ", epoch " +
                                std::to_string(epoch) + ", minibatch " + std::to_string(batches));
        }
        auto gt = grad.tensors();
        clip_grad_norm(gt, cfg.max_grad_norm);
        std::vector<nn::TensorView<const float>> gc;
        for (const auto& t : gt) gc.push_back({t.name, {t.data.data(), t.data.size()}, t.shape});
        state.adam.step(state.net.tensors(), gc, cfg.lr);
        metrics.loss.l_ppo += L.l_ppo;
        metrics.loss.l_value += L.l_value;
        metrics.loss.entropy += L.entropy;
        metrics.loss.l_bound += L.l_bound;
        metrics.loss.total += L.total;
        ++batches;
      }
    }
    for (double* x : {&metrics.loss.l_ppo, &metrics.loss.l_value, &metrics.loss.entropy, &metrics.loss.l_bound,
                      &metrics.loss.total}) {
      *x /= batches;
    }
    ++state.update;
    metrics.update = state.update;
    metrics.steps = state.steps;
    if (hooks.on_update) hooks.on_update(metrics);
    const bool last = state.steps + static_cast<std::int64_t>(n) > cfg.total_steps;
    if (hooks.on_checkpoint && (state.update % cfg.checkpoint_every == 0 || last)) hooks.on_checkpoint(state);
  }
  return state;
}

sim::Action Policy::act(const sensing::ObservationVec& obs) {
  nn::forward(net_, obs.data(), nullptr, 1, ws_);
  return {std::clamp(static_cast<double>(ws_.mu[0]), -1.0, 1.0), std::clamp(static_cast<double>(ws_.mu[1]), -1.0, 1.0)};
}

}  // namespace forklift::ppo
