#include <cmath>
#include <cstring>

#include "doctest.h"
#include "forklift/error.hpp"
#include "forklift/nn.hpp"
#include "forklift/rng.hpp"
#include "forklift/simd/gemm.hpp"

using namespace forklift;
using namespace forklift::nn;
using doctest::Approx;

namespace {

ActorCritic<float> random_net(std::uint64_t seed) {
  ActorCritic<float> net{NetShape{}};
  RngStream rng(seed, "init");
  init_actor_critic(net, rng, -0.5);
  // Give the biases and the actor head some weight so that nothing is trivially zero.
  for (auto& t : net.tensors()) {
    if (t.name.ends_with(".b")) {
      for (float& b : t.data) b = static_cast<float>(rng.uniform(-0.1, 0.1));
    }
  }
  for (float& w : net.actor.w) w = static_cast<float>(rng.uniform(-0.1, 0.1));
  return net;
}

std::vector<float> random_inputs(std::size_t n, RngStream& rng) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(0.0, 1.0));
  return v;
}

// Straightforward dense layer in double: y = x W + b.
std::vector<double> dense(const std::vector<double>& x, const Dense<float>& d) {
  std::vector<double> y(d.out);
  for (int o = 0; o < d.out; ++o) {
    double acc = d.b[o];
    for (int i = 0; i < d.in; ++i) acc += x[i] * static_cast<double>(d.w[i * d.out + o]);
    y[o] = acc;
  }
  return y;
}

void elu_all(std::vector<double>& v) {
  for (double& x : v) x = x > 0 ? x : std::exp(x) - 1.0;
}

}  // namespace

TEST_CASE("ELU") {
  CHECK(elu(-1.0) == Approx(std::exp(-1.0) - 1.0));
  CHECK(elu(-1.0) == Approx(-0.6321).epsilon(1e-4));
  CHECK(elu(2.5) == 2.5);
  CHECK(elu(0.0) == 0.0);
}

TEST_CASE("shapes and parameter naming") {
  const ActorCritic<float> net{NetShape{}};
  CHECK(net.obs_dim() == 519);
  CHECK(net.feature_dim() == 64);
  CHECK(net.priv_dim() == 10);
  CHECK(net.action_dim() == 2);
  const auto t = net.tensors();
  REQUIRE(t.size() == 15);
  CHECK(t[0].name == "trunk.0.w");
  CHECK(t[0].shape == std::vector<int>{519, 256});
  CHECK(t[14].name == "log_std");
  std::size_t n = 0;
  for (const auto& x : t) n += x.data.size();
  CHECK(n == net.parameter_count());
  const std::size_t expected = 519 * 256 + 256 + 256 * 256 + 256 + 256 * 128 + 128 + 128 * 64 + 64 + 64 * 2 + 2 +
                               74 * 64 + 64 + 64 + 1 + 2;
  CHECK(net.parameter_count() == expected);
}

TEST_CASE("all-zero network") {
  ActorCritic<float> net{NetShape{}};
  net.fill(0.0f);
  net.log_std = {-0.5f, -0.5f};
  std::vector<float> obs(519, 0.0f), priv(10, 0.0f);
  Workspace<float> ws;
  forward(net, obs.data(), priv.data(), 1, ws);
  CHECK(ws.mu[0] == 0.0f);
  CHECK(ws.mu[1] == 0.0f);
  CHECK(ws.value[0] == 0.0f);
  CHECK(std::exp(effective_log_std(net.log_std[0])) == Approx(std::exp(-0.5)));
}

TEST_CASE("log std is clamped") {
  CHECK(effective_log_std(-7.0) == kLogStdMin);
  CHECK(effective_log_std(3.0) == kLogStdMax);
  CHECK(effective_log_std(-0.5) == -0.5);
}

TEST_CASE("forward matches a layer-by-layer oracle") {
  const auto net = random_net(1);
  RngStream rng(2, "inputs");
  const int B = 5;
  const auto obs = random_inputs(B * 519, rng);
  const auto priv = random_inputs(B * 10, rng);
  Workspace<float> ws;
  forward(net, obs.data(), priv.data(), B, ws);
  for (int r = 0; r < B; ++r) {
    std::vector<double> h(obs.begin() + r * 519, obs.begin() + (r + 1) * 519);
    for (int l = 0; l < 4; ++l) {
      h = dense(h, net.trunk[l]);
      elu_all(h);
    }
    const auto mu = dense(h, net.actor);
    std::vector<double> cin = h;
    cin.insert(cin.end(), priv.begin() + r * 10, priv.begin() + (r + 1) * 10);
    auto ch = dense(cin, net.critic_hidden);
    elu_all(ch);
    const auto v = dense(ch, net.critic_out);
    CHECK(std::abs(ws.mu[r * 2] - mu[0]) < 1e-6);
    CHECK(std::abs(ws.mu[r * 2 + 1] - mu[1]) < 1e-6);
    CHECK(std::abs(ws.value[r] - v[0]) < 1e-5 * std::max(1.0, std::abs(v[0])));
  }
}

TEST_CASE("forward rows do not depend on batch composition or backend") {
  const auto net = random_net(3);
  RngStream rng(4, "inputs");
  const int B = 9;
  const auto obs = random_inputs(B * 519, rng);
  const auto priv = random_inputs(B * 10, rng);
  Workspace<float> all, one;
  forward(net, obs.data(), priv.data(), B, all);
  forward(net, obs.data() + 4 * 519, priv.data() + 4 * 10, 1, one);
  CHECK(std::memcmp(one.mu.data(), all.mu.data() + 8, 2 * sizeof(float)) == 0);
  CHECK(one.value[0] == all.value[4]);

  const auto before = simd::active_backend();
  simd::set_backend(simd::Backend::Scalar);
  Workspace<float> scalar;
  forward(net, obs.data(), priv.data(), B, scalar);
  simd::set_backend(before);
  CHECK(scalar.mu == all.mu);
  CHECK(scalar.value == all.value);
}

TEST_CASE("actor mean ignores privileged features") {
  const auto net = random_net(5);
  RngStream rng(6, "asym");
  Workspace<float> a, b;
  for (int i = 0; i < 100; ++i) {
    const auto obs = random_inputs(519, rng);
    const auto p1 = random_inputs(10, rng);
    auto p2 = p1;
    for (float& x : p2) x += static_cast<float>(rng.uniform(0.5, 1.0));
    forward(net, obs.data(), p1.data(), 1, a);
    forward(net, obs.data(), p2.data(), 1, b);
    CHECK(std::memcmp(a.mu.data(), b.mu.data(), 2 * sizeof(float)) == 0);
    CHECK(a.value[0] != b.value[0]);
    // Actor-only forward gives the same mean as well.
    forward(net, obs.data(), nullptr, 1, b);
    CHECK(std::memcmp(a.mu.data(), b.mu.data(), 2 * sizeof(float)) == 0);
  }
}

TEST_CASE("backward of a linear probe matches finite differences") {
  // d(sum mu + sum value)/dtheta on a small net, double precision.
  NetShape s;
  s.obs = 7;
  s.trunk = {6, 5, 4, 3};
  s.priv = 2;
  s.critic_hidden = 4;
  ActorCritic<float> f{s};
  RngStream rng(7, "small");
  init_actor_critic(f, rng, 0.0);
  for (auto& t : f.tensors())
    for (float& x : t.data) x = static_cast<float>(x + rng.uniform(-0.2, 0.2));
  auto net = f.cast<double>();
  const int B = 3;
  const auto obs = random_inputs(B * 7, rng);
  const auto priv = random_inputs(B * 2, rng);
  Workspace<double> ws;
  auto objective = [&](const ActorCritic<double>& n) {
    forward(n, obs.data(), priv.data(), B, ws);
    double acc = 0.0;
    for (double m : ws.mu) acc += m;
    for (double v : ws.value) acc += 2.0 * v;
    return acc;
  };
  objective(net);
  std::vector<double> dmu(B * 2, 1.0), dv(B, 2.0);
  ActorCritic<double> grad = net;
  backward(net, ws, dmu.data(), dv.data(), grad);
  auto p = net.tensors();
  const auto g = grad.tensors();
  for (std::size_t t = 0; t + 1 < p.size(); ++t) {  // log_std is the caller's
    for (std::size_t i = 0; i < p[t].data.size(); ++i) {
      const double keep = p[t].data[i];
      p[t].data[i] = keep + 1e-6;
      const double up = objective(net);
      p[t].data[i] = keep - 1e-6;
      const double down = objective(net);
      p[t].data[i] = keep;
      CAPTURE(p[t].name);
      CHECK(g[t].data[i] == Approx((up - down) / 2e-6).epsilon(1e-6));
    }
  }
}

TEST_CASE("classifier forward and backward") {
  Classifier<float> c(4, 3);
  RngStream rng(8, "clf");
  for (auto& t : c.tensors())
    for (float& x : t.data) x = static_cast<float>(rng.uniform(-1, 1));
  const auto x = random_inputs(2 * 4, rng);
  auto cd = Classifier<double>(4, 3);
  {
    auto src = c.tensors();
    auto dst = cd.tensors();
    for (std::size_t t = 0; t < src.size(); ++t)
      for (std::size_t i = 0; i < src[t].data.size(); ++i) dst[t].data[i] = src[t].data[i];
  }
  ClassifierWorkspace<double> ws;
  auto objective = [&]() {
    classifier_forward(cd, x.data(), 2, ws);
    return ws.logit[0] + 3.0 * ws.logit[1];
  };
  objective();
  std::vector<double> dl{1.0, 3.0};
  Classifier<double> grad(4, 3);
  classifier_backward(cd, ws, dl.data(), grad);
  auto p = cd.tensors();
  const auto g = grad.tensors();
  for (std::size_t t = 0; t < p.size(); ++t)
    for (std::size_t i = 0; i < p[t].data.size(); ++i) {
      const double keep = p[t].data[i];
      p[t].data[i] = keep + 1e-6;
      const double up = objective();
      p[t].data[i] = keep - 1e-6;
      const double down = objective();
      p[t].data[i] = keep;
      CHECK(g[t].data[i] == Approx((up - down) / 2e-6).epsilon(1e-6));
    }
}

TEST_CASE("forward rejects an empty batch") {
  const ActorCritic<float> net{NetShape{}};
  Workspace<float> ws;
  std::vector<float> obs(519);
  CHECK_THROWS_AS(forward(net, obs.data(), nullptr, 0, ws), ContractViolation);
}
