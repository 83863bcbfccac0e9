#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "forklift/checkpoint.hpp"
#include "forklift/control.hpp"
#include "forklift/decision.hpp"
#include "forklift/error.hpp"

using namespace forklift;
using namespace forklift::decision;

namespace {

ControllerFactory scripted() {
  return [] {
    return [](const env::ForkliftEnv& e) { return control::scripted_action(e.episode(), e.path(), e.config().sim); };
  };
}

// Two Gaussian blobs split by the sign of feature 0.
void separable(int n, int dim, std::uint64_t seed, std::vector<float>& x, std::vector<std::uint8_t>& y) {
  RngStream rng(seed, "blobs");
  x.clear();
  y.clear();
  for (int i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    x.push_back(static_cast<float>((pos ? 1.0 : -1.0) * rng.uniform(0.5, 1.5)));
    for (int k = 1; k < dim; ++k) x.push_back(static_cast<float>(rng.uniform(-1, 1)));
    y.push_back(pos);
  }
}

}  // namespace

TEST_CASE("decision threshold is inclusive") {
  CHECK(decide_from_probability(0.95, 0.5) == Decision::Lift);
  CHECK(decide_from_probability(0.5, 0.5) == Decision::Lift);
  CHECK(decide_from_probability(std::nextafter(0.5, 0.0), 0.5) == Decision::Abort);
  CHECK(decide_from_probability(0.7, 0.7) == Decision::Lift);
}

TEST_CASE("linearly separable features are learned exactly") {
  std::vector<float> x;
  std::vector<std::uint8_t> y;
  separable(400, 5, 1, x, y);
  ClassifierConfig cc;
  cc.hidden = 8;
  cc.epochs = 60;
  cc.minibatch = 32;
  cc.lr = 1e-2;
  const auto t = train_classifier(x, 5, y, cc, 2);
  CHECK(t.test.accuracy == 1.0);
  CHECK(t.test.precision == 1.0);
  CHECK(t.test.recall == 1.0);
  CHECK(t.test.n == 80);
  CHECK(t.train.n == 320);
  CHECK(t.test.mean_p_positive > t.test.mean_p_negative);

  SUBCASE("inverted labels give inverted predictions") {
    std::vector<std::uint8_t> flipped(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) flipped[i] = !y[i];
    const auto f = train_classifier(x, 5, flipped, cc, 2);
    CHECK(evaluate_classifier(f.net, x, y, 0.5).accuracy <= 0.10);
  }
  SUBCASE("training is deterministic") {
    const auto again = train_classifier(x, 5, y, cc, 2);
    CHECK(again.net == t.net);
  }
  SUBCASE("inference is bit-stable") {
    const double p = lift_probability(t.net, x.data());
    CHECK(lift_probability(t.net, x.data()) == p);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("single-class splits are rejected") {
  std::vector<float> x(20 * 3, 0.5f);
  std::vector<std::uint8_t> y(20, 1);
  CHECK_THROWS_AS(train_classifier(x, 3, y, ClassifierConfig{}, 1), ConfigError);
  y[0] = 0;  // one negative cannot be in both splits
  CHECK_THROWS_AS(train_classifier(x, 3, y, ClassifierConfig{}, 1), ConfigError);
}

TEST_CASE("dataset generation") {
  env::EnvConfig cfg;
  DatasetConfig dc;
  dc.samples = 100;
  dc.batch = 16;
  // Subcases re-enter the test case; generate once.
  static DatasetStats stats;
  static const auto data = generate_dataset(cfg, scripted(), dc, 5, &stats);

  SUBCASE("balanced and relabel-consistent") {
    REQUIRE(data.size() == 100);
    int succ = 0;
    for (const auto& s : data) {
      succ += s.success;
      CHECK(relabel(s, cfg.sim) == s.success);
    }
    CHECK(succ == 50);
    CHECK(stats.injected > 0);
  }
  SUBCASE("clean scripted episodes succeed, failures come from injection") {
    for (const auto& s : data) {
      if (!s.success) CHECK(s.injected);
    }
    int clean = 0;
    for (const auto& s : data) clean += !s.injected;
    CHECK(clean > 0);
  }
  SUBCASE("deterministic and independent of the worker count") {
    auto dc2 = dc;
    dc2.workers = 2;
    CHECK(generate_dataset(cfg, scripted(), dc2, 5) == data);
  }
  SUBCASE("container round trip") {
    const auto bytes = encode_dataset(data);
    CHECK(decode_dataset(bytes) == data);
    auto bad = bytes;
    bad[8] = 99;  // observation schema version
    CHECK_THROWS_AS(decode_dataset(bad), ConfigError);
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(decode_dataset(bad), ConfigError);
    const auto path = std::filesystem::temp_directory_path() / "forklift_test.fkds";
    save_dataset(path, data);
    CHECK(load_dataset(path) == data);
    std::filesystem::remove(path);
  }
}

TEST_CASE("a controller that never stops exhausts the budget") {
  env::EnvConfig cfg;
  DatasetConfig dc;
  dc.samples = 4;
  dc.batch = 4;
  dc.episode_budget_factor = 2;
  dc.early_stop_share = 0.0;
  const ControllerFactory reverse = [] { return [](const env::ForkliftEnv&) { return sim::Action{-1.0, 0.0}; }; };
  CHECK_THROWS_AS(generate_dataset(cfg, reverse, dc, 1), ConfigError);
}

TEST_CASE("classifier checkpoint round trip") {
  nn::Classifier<float> c(519, 64);
  RngStream rng(3, "init");
  nn::init_dense(c.hidden, rng, 1.0);
  nn::init_dense(c.out, rng, 1.0);
  const auto ck = io::pack(c, {{"config_hash", "abc"}});
  const auto back = io::decode(io::encode(ck));
  CHECK(io::unpack_classifier(back, sensing::kObservationSchemaVersion) == c);
  CHECK_THROWS_AS(io::unpack_actor_critic(back, sensing::kObservationSchemaVersion), ConfigError);
  CHECK_THROWS_AS(io::unpack_classifier(back, sensing::kObservationSchemaVersion + 1), ConfigError);
}
