#include "forklift/nn.hpp"

#include <algorithm>
#include <cmath>

#include "forklift/error.hpp"
#include "forklift/simd/gemm.hpp"

namespace forklift::nn {

namespace {

template <class T>
void resize(std::vector<T>& v, std::size_t n) {
  if (v.size() != n) v.assign(n, T(0));
}

// y = x * W + b, rows of x contiguous with stride d.in.
template <class T>
void affine(const T* x, int batch, const Dense<T>& d, T* y) {
  for (int r = 0; r < batch; ++r) std::copy(d.b.begin(), d.b.end(), y + static_cast<std::ptrdiff_t>(r) * d.out);
  simd::GemmArgs<T> g;
  g.m = batch;
  g.n = d.out;
  g.k = d.in;
  g.a = x;
  g.a_row_stride = d.in;
  g.a_col_stride = 1;
  g.b = d.w.data();
  g.ldb = d.out;
  g.c = y;
  g.ldc = d.out;
  g.accumulate = true;
  simd::gemm(g);
}

// dW = x^T dy, db = column sums of dy.
template <class T>
void param_grad(const T* x, const T* dy, int batch, Dense<T>& grad) {
  simd::GemmArgs<T> g;
  g.m = grad.in;
  g.n = grad.out;
  g.k = batch;
  g.a = x;
  g.a_row_stride = 1;
  g.a_col_stride = grad.in;
  g.b = dy;
  g.ldb = grad.out;
  g.c = grad.w.data();
  g.ldc = grad.out;
  g.accumulate = false;
  simd::gemm(g);
  std::fill(grad.b.begin(), grad.b.end(), T(0));
  for (int r = 0; r < batch; ++r) {
    const T* row = dy + static_cast<std::ptrdiff_t>(r) * grad.out;
    for (int o = 0; o < grad.out; ++o) grad.b[o] += row[o];
  }
}

// dx = dy W^T
template <class T>
void input_grad(const Dense<T>& d, const T* dy, int batch, std::vector<T>& wt, T* dx) {
  resize(wt, d.w.size());
  for (int i = 0; i < d.in; ++i) {
    for (int o = 0; o < d.out; ++o) wt[static_cast<std::size_t>(o) * d.in + i] = d.w[static_cast<std::size_t>(i) * d.out + o];
  }
  simd::GemmArgs<T> g;
  g.m = batch;
  g.n = d.in;
  g.k = d.out;
  g.a = dy;
  g.a_row_stride = d.out;
  g.a_col_stride = 1;
  g.b = wt.data();
  g.ldb = d.in;
  g.c = dx;
  g.ldc = d.in;
  g.accumulate = false;
  simd::gemm(g);
}

template <class T>
void elu_inplace(const std::vector<T>& z, std::vector<T>& h) {
  resize(h, z.size());
  for (std::size_t i = 0; i < z.size(); ++i) h[i] = elu(z[i]);
}

// dz = dh * elu'(z), with elu'(z) = h + 1 for z <= 0.
template <class T>
void elu_backward(const std::vector<T>& z, const std::vector<T>& h, const std::vector<T>& dh, std::vector<T>& dz) {
  resize(dz, z.size());
  for (std::size_t i = 0; i < z.size(); ++i) dz[i] = z[i] > T(0) ? dh[i] : dh[i] * (h[i] + T(1));
}

template <class T>
void zero(Dense<T>& d) {
  std::fill(d.w.begin(), d.w.end(), T(0));
  std::fill(d.b.begin(), d.b.end(), T(0));
}

template <class T, class D>
void push_dense(std::vector<TensorView<T>>& out, const std::string& name, D& d) {
  out.push_back({name + ".w", {d.w.data(), d.w.size()}, {d.in, d.out}});
  out.push_back({name + ".b", {d.b.data(), d.b.size()}, {d.out}});
}

template <class U, class T>
Dense<U> cast_dense(const Dense<T>& d) {
  Dense<U> o(d.in, d.out);
  std::transform(d.w.begin(), d.w.end(), o.w.begin(), [](T x) { return static_cast<U>(x); });
  std::transform(d.b.begin(), d.b.end(), o.b.begin(), [](T x) { return static_cast<U>(x); });
  return o;
}

}  // namespace

template <class T>
T elu(T z) {
  return z > T(0) ? z : std::expm1(z);
}

template <class T>
T effective_log_std(T raw) {
  return std::clamp(raw, static_cast<T>(kLogStdMin), static_cast<T>(kLogStdMax));
}

template <class T>
ActorCritic<T>::ActorCritic(const NetShape& s) {
  int in = s.obs;
  for (int l = 0; l < 4; ++l) {
    trunk[l] = Dense<T>(in, s.trunk[l]);
    in = s.trunk[l];
  }
  actor = Dense<T>(in, s.action);
  critic_hidden = Dense<T>(in + s.priv, s.critic_hidden);
  critic_out = Dense<T>(s.critic_hidden, 1);
  log_std.assign(s.action, T(0));
}

template <class T>
std::vector<TensorView<T>> ActorCritic<T>::tensors() {
  std::vector<TensorView<T>> out;
  for (int l = 0; l < 4; ++l) push_dense(out, "trunk." + std::to_string(l), trunk[l]);
  push_dense(out, "actor", actor);
  push_dense(out, "critic.hidden", critic_hidden);
  push_dense(out, "critic.out", critic_out);
  out.push_back({"log_std", {log_std.data(), log_std.size()}, {static_cast<int>(log_std.size())}});
  return out;
}

template <class T>
std::vector<TensorView<const T>> ActorCritic<T>::tensors() const {
  std::vector<TensorView<const T>> out;
  for (int l = 0; l < 4; ++l) push_dense(out, "trunk." + std::to_string(l), trunk[l]);
  push_dense(out, "actor", actor);
  push_dense(out, "critic.hidden", critic_hidden);
  push_dense(out, "critic.out", critic_out);
  out.push_back({"log_std", {log_std.data(), log_std.size()}, {static_cast<int>(log_std.size())}});
  return out;
}

template <class T>
std::size_t ActorCritic<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.data.size();
  return n;
}

template <class T>
template <class U>
ActorCritic<U> ActorCritic<T>::cast() const {
  ActorCritic<U> o;
  for (int l = 0; l < 4; ++l) o.trunk[l] = cast_dense<U>(trunk[l]);
  o.actor = cast_dense<U>(actor);
  o.critic_hidden = cast_dense<U>(critic_hidden);
  o.critic_out = cast_dense<U>(critic_out);
  o.log_std.resize(log_std.size());
  std::transform(log_std.begin(), log_std.end(), o.log_std.begin(), [](T x) { return static_cast<U>(x); });
  return o;
}

template <class T>
void ActorCritic<T>::fill(T value) {
  for (auto& t : tensors()) std::fill(t.data.begin(), t.data.end(), value);
}

void init_dense(Dense<float>& d, RngStream& rng, double gain) {
  const double limit = gain * std::sqrt(3.0 / d.in);
  for (float& w : d.w) w = static_cast<float>(rng.uniform(-limit, limit));
  std::fill(d.b.begin(), d.b.end(), 0.0f);
}

void init_actor_critic(ActorCritic<float>& net, RngStream& rng, double log_std_init) {
  for (auto& d : net.trunk) init_dense(d, rng, 1.0);
  init_dense(net.actor, rng, 0.01);
  init_dense(net.critic_hidden, rng, 1.0);
  init_dense(net.critic_out, rng, 1.0);
  std::fill(net.log_std.begin(), net.log_std.end(), static_cast<float>(log_std_init));
}

template <class T>
void forward(const ActorCritic<T>& net, const float* obs, const float* priv, int batch, Workspace<T>& ws) {
  if (batch < 1) throw ContractViolation("forward: empty batch");
  ws.batch = batch;
  const std::size_t B = batch;
  resize(ws.h[0], B * net.obs_dim());
  std::transform(obs, obs + B * net.obs_dim(), ws.h[0].begin(), [](float x) { return static_cast<T>(x); });
  for (int l = 0; l < 4; ++l) {
    resize(ws.z[l], B * net.trunk[l].out);
    affine(ws.h[l].data(), batch, net.trunk[l], ws.z[l].data());
    elu_inplace(ws.z[l], ws.h[l + 1]);
  }
  resize(ws.mu, B * net.action_dim());
  affine(ws.h[4].data(), batch, net.actor, ws.mu.data());
  if (!priv) return;

  const int f = net.feature_dim(), p = net.priv_dim(), w = f + p;
  resize(ws.critic_in, B * w);
  for (std::size_t r = 0; r < B; ++r) {
    std::copy_n(ws.h[4].data() + r * f, f, ws.critic_in.data() + r * w);
    std::transform(priv + r * p, priv + (r + 1) * p, ws.critic_in.data() + r * w + f,
                   [](float x) { return static_cast<T>(x); });
  }
  resize(ws.critic_z, B * net.critic_hidden.out);
  affine(ws.critic_in.data(), batch, net.critic_hidden, ws.critic_z.data());
  elu_inplace(ws.critic_z, ws.critic_h);
  resize(ws.value, B);
  affine(ws.critic_h.data(), batch, net.critic_out, ws.value.data());
}

template <class T>
void backward(const ActorCritic<T>& net, Workspace<T>& ws, const T* dmu, const T* dvalue, ActorCritic<T>& grad) {
  const int batch = ws.batch;
  const std::size_t B = batch;
  const int f = net.feature_dim();
  std::vector<T> dfeat(B * f, T(0));

  if (dmu) {
    param_grad(ws.h[4].data(), dmu, batch, grad.actor);
    input_grad(net.actor, dmu, batch, ws.wt, dfeat.data());
  } else {
    zero(grad.actor);
  }

  if (dvalue) {
    if (ws.critic_in.size() != B * net.critic_hidden.in) throw ContractViolation("backward: critic not run");
    param_grad(ws.critic_h.data(), dvalue, batch, grad.critic_out);
    resize(ws.dh, B * net.critic_out.in);
    input_grad(net.critic_out, dvalue, batch, ws.wt, ws.dh.data());
    elu_backward(ws.critic_z, ws.critic_h, ws.dh, ws.dcz);
    param_grad(ws.critic_in.data(), ws.dcz.data(), batch, grad.critic_hidden);
    resize(ws.dcin, B * net.critic_hidden.in);
    input_grad(net.critic_hidden, ws.dcz.data(), batch, ws.wt, ws.dcin.data());
    const int w = net.critic_hidden.in;
    for (std::size_t r = 0; r < B; ++r) {
      for (int j = 0; j < f; ++j) dfeat[r * f + j] += ws.dcin[r * w + j];
    }
  } else {
    zero(grad.critic_out);
    zero(grad.critic_hidden);
  }

  ws.dh = std::move(dfeat);
  for (int l = 3; l >= 0; --l) {
    elu_backward(ws.z[l], ws.h[l + 1], ws.dh, ws.dz);
    param_grad(ws.h[l].data(), ws.dz.data(), batch, grad.trunk[l]);
    if (l > 0) {
      resize(ws.dh, B * net.trunk[l].in);
      input_grad(net.trunk[l], ws.dz.data(), batch, ws.wt, ws.dh.data());
    }
  }
}

template <class T>
std::vector<TensorView<T>> Classifier<T>::tensors() {
  std::vector<TensorView<T>> out;
  push_dense(out, "hidden", hidden);
  push_dense(out, "out", this->out);
  return out;
}

template <class T>
std::vector<TensorView<const T>> Classifier<T>::tensors() const {
  std::vector<TensorView<const T>> out;
  push_dense(out, "hidden", hidden);
  push_dense(out, "out", this->out);
  return out;
}

template <class T>
void classifier_forward(const Classifier<T>& c, const float* x, int batch, ClassifierWorkspace<T>& ws) {
  if (batch < 1) throw ContractViolation("classifier_forward: empty batch");
  ws.batch = batch;
  const std::size_t B = batch;
  resize(ws.x, B * c.hidden.in);
  std::transform(x, x + B * c.hidden.in, ws.x.begin(), [](float v) { return static_cast<T>(v); });
  resize(ws.z, B * c.hidden.out);
  affine(ws.x.data(), batch, c.hidden, ws.z.data());
  elu_inplace(ws.z, ws.h);
  resize(ws.logit, B);
  affine(ws.h.data(), batch, c.out, ws.logit.data());
}

template <class T>
void classifier_backward(const Classifier<T>& c, ClassifierWorkspace<T>& ws, const T* dlogit, Classifier<T>& grad) {
  const int batch = ws.batch;
  param_grad(ws.h.data(), dlogit, batch, grad.out);
  resize(ws.dh, static_cast<std::size_t>(batch) * c.out.in);
  input_grad(c.out, dlogit, batch, ws.wt, ws.dh.data());
  std::vector<T> dz;
  elu_backward(ws.z, ws.h, ws.dh, dz);
  param_grad(ws.x.data(), dz.data(), batch, grad.hidden);
}

template float elu(float);
template double elu(double);
template float effective_log_std(float);
template double effective_log_std(double);
template struct ActorCritic<float>;
template struct ActorCritic<double>;
template ActorCritic<double> ActorCritic<float>::cast<double>() const;
template ActorCritic<float> ActorCritic<double>::cast<float>() const;
template ActorCritic<float> ActorCritic<float>::cast<float>() const;
template void forward(const ActorCritic<float>&, const float*, const float*, int, Workspace<float>&);
template void forward(const ActorCritic<double>&, const float*, const float*, int, Workspace<double>&);
template void backward(const ActorCritic<float>&, Workspace<float>&, const float*, const float*,
                       ActorCritic<float>&);
template void backward(const ActorCritic<double>&, Workspace<double>&, const double*, const double*,
                       ActorCritic<double>&);
template struct Classifier<float>;
template struct Classifier<double>;
template void classifier_forward(const Classifier<float>&, const float*, int, ClassifierWorkspace<float>&);
template void classifier_forward(const Classifier<double>&, const float*, int, ClassifierWorkspace<double>&);
template void classifier_backward(const Classifier<float>&, ClassifierWorkspace<float>&, const float*,
                                  Classifier<float>&);
template void classifier_backward(const Classifier<double>&, ClassifierWorkspace<double>&, const double*,
                                  Classifier<double>&);

}  // namespace forklift::nn
