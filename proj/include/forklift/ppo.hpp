#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "forklift/env.hpp"
#include "forklift/nn.hpp"
#include "forklift/rng.hpp"

namespace forklift::ppo {

struct PpoConfig {
  double gamma = 0.99;
  double lam = 0.95;
  double clip_eps = 0.2;
  double c1 = 0.5;    // value loss
  double c2 = 0.005;  // entropy bonus
  double c3 = 0.01;   // boundary loss
  double lr = 3e-4;
  int epochs = 4;
  int minibatch = 1024;
  int horizon = 256;  // T
  int envs = 64;      // W
  std::int64_t total_steps = 2'000'000;
  double max_grad_norm = 0.5;  // 0 disables clipping
  double log_std_init = -0.5;
  int workers = 1;
  int checkpoint_every = 10;  // updates

  void validate() const;
};

struct LossBreakdown {
  double l_ppo = 0.0;
  double l_value = 0.0;
  double entropy = 0.0;
  double l_bound = 0.0;
  double total = 0.0;
};

// Coefficient of each term in the total; the defaults give
// total = l_ppo + c1 l_value - c2 entropy + c3 l_bound.
struct LossWeights {
  double ppo = 1.0;
  double value = 0.5;
  double entropy = -0.005;
  double bound = 0.01;

  static LossWeights from(const PpoConfig& c) { return {1.0, c.c1, -c.c2, c.c3}; }
};

// --- Gaussian policy head ------------------------------------------------

inline constexpr int kActionDim = 2;

double gaussian_log_prob(std::span<const double> a, std::span<const double> mu, std::span<const double> log_std);
// Differential entropy of a diagonal Gaussian: sum(log sigma + 0.5 ln(2 pi e)).
double gaussian_entropy(std::span<const double> log_std);

struct PolicySample {
  std::array<double, kActionDim> raw{};  // unclamped draw, used for the log-prob
  sim::Action action;                    // clamped to [-1, 1]
  double log_prob = 0.0;
};

PolicySample sample_action(std::span<const double> mu, std::span<const double> log_std, RngStream& rng);

// --- GAE -----------------------------------------------------------------

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> value_targets;
};

// values has one more entry than rewards (bootstrap). dones[t] != 0 means
// the episode ended with transition t.
GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
              double gamma, double lam);

// --- loss ----------------------------------------------------------------

struct Minibatch {
  int size = 0;
  const float* obs = nullptr;      // size x obs_dim
  const float* priv = nullptr;     // size x priv_dim
  const float* actions = nullptr;  // size x 2, unclamped samples
  const double* old_log_prob = nullptr;
  const double* advantages = nullptr;
  const double* value_targets = nullptr;
};

// Loss terms and, when `grad` is non-null, their weighted gradient.
template <class T>
LossBreakdown ppo_loss(const nn::ActorCritic<T>& net, const Minibatch& mb, const LossWeights& w, double clip_eps,
                       nn::Workspace<T>& ws, nn::ActorCritic<T>* grad);

// --- optimizer -----------------------------------------------------------

// Adam with bias correction; moments kept in double.
class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t parameter_count, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(std::span<const nn::TensorView<float>> params, std::span<const nn::TensorView<const float>> grads,
            double lr);
  std::int64_t steps() const { return t_; }

  std::vector<double> m, v;

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
};

// Scales all gradients so that their global L2 norm is at most max_norm.
// Returns the norm before scaling.
double clip_grad_norm(std::span<const nn::TensorView<float>> grads, double max_norm);

// --- rollouts and training ----------------------------------------------

struct RolloutBuffer {
  int horizon = 0;
  int envs = 0;
  int obs_dim = 0;
  int priv_dim = 0;
  std::vector<float> obs;      // [t][env][obs_dim]
  std::vector<float> priv;     // [t][env][priv_dim]
  std::vector<float> actions;  // [t][env][2]
  std::vector<double> log_prob, rewards, values;
  std::vector<std::uint8_t> dones;
  std::vector<double> bootstrap;  // value of the state after the last step, per env
  std::vector<double> advantages, value_targets;

  std::size_t size() const { return static_cast<std::size_t>(horizon) * envs; }
  void allocate(int t, int w, int obs_d, int priv_d);
};

struct RolloutStats {
  int episodes = 0;
  int successes = 0;
  double mean_return = 0.0;   // over completed episodes
  double success_rate = 0.0;  // ApproachSuccess fraction of completed episodes
};

// Collects `horizon` lockstep steps from every env after a synchronized
// reset. `policy_rngs` holds one sampling stream per env.
RolloutStats collect_rollouts(env::EnvPool& pool, const nn::ActorCritic<float>& net, std::vector<RngStream>& policy_rngs,
                              RolloutBuffer& buf, nn::Workspace<float>& ws);

// GAE per env column, then advantage normalization over the whole buffer.
void compute_advantages(RolloutBuffer& buf, double gamma, double lam, bool normalize = true);

struct UpdateMetrics {
  std::int64_t update = 0;
  std::int64_t steps = 0;
  RolloutStats rollout;
  LossBreakdown loss;  // mean over the update's minibatches
};

struct TrainState {
  nn::ActorCritic<float> net;
  Adam adam;
  std::int64_t update = 0;
  std::int64_t steps = 0;
};

struct TrainHooks {
  std::function<void(const UpdateMetrics&)> on_update;
  std::function<void(const TrainState&)> on_checkpoint;
};

TrainState init_train_state(const PpoConfig& cfg, std::uint64_t seed);

// Runs PPO until total_steps. Throws DivergenceError on a non-finite loss,
// naming the update and minibatch; checkpoints written before stay intact.
TrainState train(const env::EnvConfig& env_cfg, const PpoConfig& cfg, std::uint64_t seed, const TrainHooks& hooks);

// Deterministic inference on a single observation: the clamped mean action.
class Policy {
 public:
  explicit Policy(nn::ActorCritic<float> net) : net_(std::move(net)) {}
  sim::Action act(const sensing::ObservationVec& obs);
  const nn::ActorCritic<float>& net() const { return net_; }

 private:
  nn::ActorCritic<float> net_;
  nn::Workspace<float> ws_;
};

}  // namespace forklift::ppo
