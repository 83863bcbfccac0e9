// Acceptance run: one PASS/FAIL line per criterion, nonzero exit when any
// fails. The trained policy and the decision dataset are cached under
// --cache-dir keyed by the config hash, so reruns only evaluate.

#include "../common/fd_check.hpp"
#include "../common/gae_oracle.hpp"
#include "../common/path_oracle.hpp"
#include "../common/reward_table.hpp"

#include <chrono>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "forklift/checkpoint.hpp"
#include "forklift/decision.hpp"
#include "forklift/harness.hpp"

using namespace forklift;
using namespace forklift::harness;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Every file under `dir`, relative name -> bytes.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

Verdict a1_gradients() {
  const auto t0 = Clock::now();
  RngStream rng(5, "fd");
  auto f = ppo::init_train_state(ppo::PpoConfig{}, 11).net;
  for (float& w : f.actor.w) w = static_cast<float>(rng.uniform(-0.2, 0.2));
  const auto net = f.cast<double>();
  const auto batch = testdata::make_fd_batch(net, 32, rng);
  const ppo::LossWeights terms[] = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
  double worst = 0.0;
  int checked = 0;
  for (const auto& w : terms) {
    const auto rep = testdata::fd_check(net, batch, w, 0.2, 12, rng);
    worst = std::max(worst, rep.max_rel_error);
    checked += rep.checked;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 10.0,
          fmt::format("max rel error {:.2e} over {} coordinates x 4 terms, {:.1f} s", worst, checked / 4, secs)};
}

Verdict a2_gae() {
  RngStream rng(1, "gae");
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(100);
    std::vector<double> r(n), v(n + 1);
    std::vector<std::uint8_t> d(n);
    for (auto& x : r) x = rng.uniform(-5, 5);
    for (auto& x : v) x = rng.uniform(-5, 5);
    for (auto& x : d) x = rng.uniform() < 0.1;
    const double g = rng.uniform(0.8, 1.0), l = rng.uniform(0.5, 1.0);
    const auto got = ppo::gae(r, v, d, g, l);
    const auto want = testdata::gae_oracle(r, v, d, g, l);
    for (std::size_t t = 0; t < n; ++t) worst = std::max(worst, std::abs(got.advantages[t] - want[t]));
  }
  return {worst < 1e-10, fmt::format("1000 sequences, max abs error {:.2e}", worst)};
}

Verdict a3_reward() {
  const auto table = testdata::reward_table();
  int mismatches = 0;
  std::string first;
  for (const auto& c : table) {
    const auto got = testdata::terms(testdata::evaluate(c));
    for (int k = 0; k < 8; ++k) {
      if (got[k] != c.expected[k]) {
        if (mismatches++ == 0) first = fmt::format(" (first: {} term {})", c.name, k);
      }
    }
  }
  return {mismatches == 0 && table.size() >= 20,
          fmt::format("{} hand-specified states, {} mismatched terms{}", table.size(), mismatches, first)};
}

Verdict a4_clothoid() {
  RngStream rng(8, "acceptance-clothoid");
  double pos = 0.0, head = 0.0, near = 0.0;
  int pairs = 0;
  while (pairs < 500) {
    const Pose2D a{rng.uniform(0, 1.8), rng.uniform(0, 1.8), rng.uniform(-3, 3)};
    const Pose2D b{rng.uniform(0, 1.8), rng.uniform(0, 1.8), rng.uniform(-3, 3)};
    if (norm(a.position() - b.position()) < 0.05) continue;
    ++pairs;
    const auto p = path::build_reference(a, b);
    const Pose2D end = testdata::simpson_end(p);
    pos = std::max(pos, std::hypot(end.x - b.x, end.y - b.y));
    head = std::max(head, angle_distance(end.psi, b.psi));
    const auto pts = testdata::dense_points(p, 200'000);
    const Vec2 q{rng.uniform(0, 1.8), rng.uniform(0, 1.8)};
    near = std::max(near, std::abs(path::nearest_point(p, q, 0.0).r_cd - testdata::brute_distance(pts, q)));
  }
  return {pos < 1e-6 && head < 1e-6 && near < 1e-5,
          fmt::format("500 pairs: endpoint {:.2e} m, heading {:.2e} rad, nearest point {:.2e} m", pos, head, near)};
}

RunConfig smoke_config(const RunConfig& base) {
  RunConfig c = base;
  c.run_id = "acceptance-smoke";
  c.ppo.envs = 2;
  c.ppo.horizon = 128;
  c.ppo.minibatch = 128;
  c.ppo.total_steps = 2 * 2 * 128;
  return c;
}

Verdict a5_determinism(const RunConfig& base, const fs::path& scratch) {
  const auto cfg = smoke_config(base);
  std::vector<std::map<std::string, std::string>> runs;
  std::vector<std::vector<std::uint8_t>> payloads;
  for (int k = 0; k < 2; ++k) {
    const auto dir = scratch / fmt::format("smoke{}", k);
    fs::remove_all(dir);
    run_training(cfg, dir);
    payloads.push_back(io::payload_bytes(io::load(dir / "policy.fkcp")));
    const auto net = load_policy(dir / "policy.fkcp");
    EvalOptions opts;
    opts.episodes = 50;
    opts.seed = cfg.seed;
    const auto records = evaluate(cfg.env, policy_controller(net), opts);
    write_records(dir / "eval", records);
    std::ofstream(dir / "eval" / "report.json") << to_json(compute_eval_report(records)).dump(2);
    auto files = tree(dir);
    files.erase("policy.fkcp");  // creation time lives in the metadata
    runs.push_back(std::move(files));
  }
  const bool same = runs[0] == runs[1] && payloads[0] == payloads[1];
  return {same, fmt::format("2 envs x 2 updates + 50-episode eval, {} files and checkpoint payload {}", runs[0].size(),
                            same ? "byte-identical" : "DIFFER")};
}

fs::path trained_policy(const RunConfig& cfg, const fs::path& cache, double* train_secs) {
  const auto dir = cache / ("train-" + config_hash(cfg));
  const auto ckpt = dir / "policy.fkcp";
  const auto done = dir / "complete";
  if (fs::exists(done)) return ckpt;
  fs::remove_all(dir);
  spdlog::info("training {} steps into {}", cfg.ppo.total_steps, dir.string());
  const auto t0 = Clock::now();
  run_training(cfg, dir);
  *train_secs = seconds_since(t0);
  std::ofstream(done) << fmt::format("{:.0f}\n", *train_secs);
  return ckpt;
}

struct ApproachEval {
  EvalReport report;
  std::vector<EpisodeRecord> records;
};

Verdict a6_training(const ApproachEval& ev, std::int64_t steps, double train_secs) {
  const auto& r = ev.report;
  const bool pass = r.approach_success_rate >= 60.0 && r.mean_approach_time && *r.mean_approach_time <= 15.0;
  return {pass && steps <= 2'000'000, fmt::format("{} steps, {} held-out episodes: success {:.0f} %, mean time {}{}", steps, r.n_episodes,
                            r.approach_success_rate,
                            r.mean_approach_time ? fmt::format("{:.2f} s", *r.mean_approach_time) : "n/a",
                            train_secs > 0 ? fmt::format(", trained in {:.0f} s", train_secs) : ", cached policy")};
}

Verdict a7_velocity(const ApproachEval& ev) {
  int successes = 0, shaped = 0;
  for (const auto& rec : ev.records) {
    if (rec.approach_outcome != sim::Outcome::ApproachSuccess) continue;
    ++successes;
    const std::size_t third = rec.rows.size() / 3;
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < third; ++i) {
      first += rec.rows[i].speed;
      last += rec.rows[rec.rows.size() - 1 - i].speed;
    }
    shaped += first > last;
  }
  if (successes == 0) return {false, "no successful episodes to measure"};
  const double share = 100.0 * shaped / successes;
  return {share >= 90.0, fmt::format("{} of {} successful episodes accelerate then slow down ({:.0f} %)", shaped,
                                     successes, share)};
}

Verdict a8_decision(const RunConfig& cfg, const fs::path& cache, const nn::ActorCritic<float>& net, bool policy_ok) {
  // The approach controller only decides which stopped poses get sampled.
  // With a policy that rarely stops at the pallet the dataset budget runs
  // out, so the path-tracking controller stands in.
  const std::string source = policy_ok ? "policy" : "scripted";
  const auto file = cache / fmt::format("dataset-{}-{}.fkds", config_hash(cfg), source);
  std::vector<decision::DecisionSample> data;
  if (fs::exists(file)) {
    data = decision::load_dataset(file);
  } else {
    decision::ControllerFactory factory = [] { return scripted_controller(); };
    if (policy_ok) factory = [&net] { return policy_controller(net); };
    auto dc = cfg.dataset;
    dc.samples = 10000;
    data = decision::generate_dataset(cfg.env, factory, dc, cfg.seed);
    decision::save_dataset(file, data);
  }
  int agree = 0, positives = 0;
  for (const auto& s : data) {
    agree += decision::relabel(s, cfg.env.sim) == s.success;
    positives += s.success;
  }
  const auto tc = decision::train_classifier(data, cfg.classifier, cfg.seed);
  const double agreement = 100.0 * agree / static_cast<double>(data.size());
  return {data.size() == 10000 && agree == static_cast<int>(data.size()) && tc.test.accuracy >= 0.9,
          fmt::format("{} samples ({} lift, {} approach), relabel agreement {:.1f} %, held-out accuracy {:.4f}",
                      data.size(), positives, source, agreement, tc.test.accuracy)};
}

Verdict a9_asymmetry(const nn::ActorCritic<float>& net) {
  RngStream rng(6, "acceptance-asymmetry");
  nn::Workspace<float> a, b;
  int mu_same = 0, v_changed = 0;
  std::vector<float> obs(net.obs_dim()), p1(net.priv_dim()), p2(net.priv_dim());
  for (int i = 0; i < 1000; ++i) {
    for (float& x : obs) x = static_cast<float>(rng.uniform(0.0, 1.0));
    for (std::size_t k = 0; k < p1.size(); ++k) {
      p1[k] = static_cast<float>(rng.uniform(-1.0, 1.0));
      p2[k] = p1[k] + static_cast<float>(rng.uniform(0.5, 1.0));
    }
    nn::forward(net, obs.data(), p1.data(), 1, a);
    nn::forward(net, obs.data(), p2.data(), 1, b);
    mu_same += std::memcmp(a.mu.data(), b.mu.data(), 2 * sizeof(float)) == 0;
    v_changed += a.value[0] != b.value[0];
  }
  return {mu_same == 1000 && v_changed == 1000,
          fmt::format("1000 inputs: mu bit-identical {}, V changed {}", mu_same, v_changed)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria A1-A9"};
  fs::path cache = "acceptance-cache";
  std::string config;
  std::vector<std::string> only;
  app.add_option("--cache-dir", cache, "Trained policy and dataset cache");
  app.add_option("-c,--config", config, "Run config (defaults when omitted)");
  app.add_option("--only", only, "Run just these criteria, e.g. A1 A6");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  const RunConfig cfg = config.empty() ? RunConfig{} : load_config(config);
  fs::create_directories(cache);
  const auto wanted = [&](const std::string& id) {
    return only.empty() || std::find(only.begin(), only.end(), id) != only.end();
  };

  int failed = 0;
  const auto report = [&](const std::string& id, const Verdict& v) {
    std::cout << id << (v.pass ? " PASS  " : " FAIL  ") << v.detail << std::endl;
    failed += !v.pass;
  };
  const auto guarded = [&](const std::string& id, const std::function<Verdict()>& f) {
    if (!wanted(id)) return;
    try {
      report(id, f());
    } catch (const std::exception& e) {
      report(id, {false, std::string("threw: ") + e.what()});
    }
  };

  guarded("A1", a1_gradients);
  guarded("A2", a2_gae);
  guarded("A3", a3_reward);
  guarded("A4", a4_clothoid);
  guarded("A5", [&] { return a5_determinism(cfg, cache / "scratch"); });

  const bool need_policy = wanted("A6") || wanted("A7") || wanted("A8") || wanted("A9");
  std::optional<nn::ActorCritic<float>> net;
  ApproachEval ev;
  double train_secs = 0.0;
  if (need_policy) {
    try {
      net = load_policy(trained_policy(cfg, cache, &train_secs));
      EvalOptions opts;
      opts.episodes = 100;
      opts.seed = cfg.seed;
      ev.records = evaluate(cfg.env, policy_controller(*net), opts);
      ev.report = compute_eval_report(ev.records);
      write_records(cache / ("eval-" + config_hash(cfg)), ev.records);
    } catch (const std::exception& e) {
      for (const char* id : {"A6", "A7", "A8", "A9"}) {
        if (wanted(id)) report(id, {false, std::string("training failed: ") + e.what()});
      }
      return 1;
    }
  }
  guarded("A6", [&] {
    const auto meta = io::load(trained_policy(cfg, cache, &train_secs)).metadata;
    return a6_training(ev, meta.at("steps").get<std::int64_t>(), train_secs);
  });
  guarded("A7", [&] { return a7_velocity(ev); });
  guarded("A8", [&] { return a8_decision(cfg, cache, *net, ev.report.approach_success_rate >= 60.0); });
  guarded("A9", [&] { return a9_asymmetry(*net); });
  return failed == 0 ? 0 : 1;
}
