#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "forklift/rng.hpp"

namespace forklift::nn {

// Weights stored [in][out] so that a row-major batch X (B x in) maps to
// X * W (B x out).
template <class T>
struct Dense {
  int in = 0;
  int out = 0;
  std::vector<T> w;
  std::vector<T> b;

  Dense() = default;
  Dense(int in_, int out_) : in(in_), out(out_), w(static_cast<std::size_t>(in_) * out_), b(out_) {}
  bool operator==(const Dense&) const = default;
};

template <class T>
struct TensorView {
  std::string name;
  std::span<T> data;
  std::vector<int> shape;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 1.0;

struct NetShape {
  int obs = 519;
  std::array<int, 4> trunk{256, 256, 128, 64};
  int action = 2;
  int priv = 10;
  int critic_hidden = 64;
};

// Shared ELU trunk on the observation; the actor head reads the trunk only,
// the critic head reads [trunk output | privileged features].
template <class T>
struct ActorCritic {
  std::array<Dense<T>, 4> trunk;
  Dense<T> actor;
  Dense<T> critic_hidden;
  Dense<T> critic_out;
  std::vector<T> log_std;

  ActorCritic() = default;
  explicit ActorCritic(const NetShape& s);

  int obs_dim() const { return trunk[0].in; }
  int feature_dim() const { return trunk[3].out; }
  int action_dim() const { return actor.out; }
  int priv_dim() const { return critic_hidden.in - trunk[3].out; }

  // All parameter tensors in a fixed order (serialization, optimizer).
  std::vector<TensorView<T>> tensors();
  std::vector<TensorView<const T>> tensors() const;
  std::size_t parameter_count() const;

  template <class U>
  ActorCritic<U> cast() const;

  void fill(T value);
  bool operator==(const ActorCritic&) const = default;
};

// Log-std as used by the policy: clamped to [kLogStdMin, kLogStdMax].
template <class T>
T effective_log_std(T raw);

// Uniform fan-in initialization scaled by `gain`; biases zero.
void init_dense(Dense<float>& d, RngStream& rng, double gain);
void init_actor_critic(ActorCritic<float>& net, RngStream& rng, double log_std_init);

template <class T>
T elu(T z);

// Activations kept for the backward pass.
template <class T>
struct Workspace {
  int batch = 0;
  std::array<std::vector<T>, 5> h;  // h[0] input, h[l] trunk layer l output
  std::array<std::vector<T>, 4> z;  // pre-activations
  std::vector<T> critic_in;          // [h[4] | priv]
  std::vector<T> critic_z;
  std::vector<T> critic_h;
  std::vector<T> mu;     // batch x action
  std::vector<T> value;  // batch
  // backward scratch
  std::vector<T> dh, dz, dcz, dcin, wt;
};

// Trunk and actor head, plus the critic when `priv` is non-null.
template <class T>
void forward(const ActorCritic<T>& net, const float* obs, const float* priv, int batch, Workspace<T>& ws);

// Parameter gradients given dL/dmu (batch x action) and dL/dvalue (batch),
// either of which may be null. Overwrites `grad` except grad.log_std, which
// belongs to the caller.
template <class T>
void backward(const ActorCritic<T>& net, Workspace<T>& ws, const T* dmu, const T* dvalue, ActorCritic<T>& grad);

// Binary classifier: in -> hidden (ELU) -> 1 (logit).
template <class T>
struct Classifier {
  Dense<T> hidden;
  Dense<T> out;

  Classifier() = default;
  Classifier(int in, int hidden_width) : hidden(in, hidden_width), out(hidden_width, 1) {}
  std::vector<TensorView<T>> tensors();
  std::vector<TensorView<const T>> tensors() const;
  bool operator==(const Classifier&) const = default;
};

template <class T>
struct ClassifierWorkspace {
  int batch = 0;
  std::vector<T> x, z, h, logit;
  std::vector<T> dh, wt;
};

template <class T>
void classifier_forward(const Classifier<T>& c, const float* x, int batch, ClassifierWorkspace<T>& ws);
template <class T>
void classifier_backward(const Classifier<T>& c, ClassifierWorkspace<T>& ws, const T* dlogit, Classifier<T>& grad);

}  // namespace forklift::nn
