#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "forklift/checkpoint.hpp"
#include "forklift/error.hpp"
#include "forklift/harness.hpp"
#include "forklift/server.hpp"

using namespace forklift;
using namespace forklift::harness;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::int64_t seed = -1;
  std::string log_level = "info";
};

RunConfig load(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  cfg.validate();
  return cfg;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot write " + p.string());
  os << j.dump(2) << '\n';
}

int cmd_train(const Common& c, const fs::path& out) {
  const auto cfg = load(c);
  fs::create_directories(out);
  write_json(out / "config.json", to_json(cfg));
  const auto st = run_training(cfg, out);
  spdlog::info("trained {} steps; checkpoint {}", st.steps, (out / "policy.fkcp").string());
  return 0;
}

int cmd_eval(const Common& c, const std::string& policy, bool scripted, const std::string& classifier, int episodes,
             const fs::path& out) {
  const auto cfg = load(c);
  if (policy.empty() == !scripted) throw ConfigError("eval needs exactly one of --policy or --scripted");
  std::optional<nn::ActorCritic<float>> net;
  if (!scripted) {
    net = load_policy(policy);
  }
  std::optional<nn::Classifier<float>> clf;
  if (!classifier.empty()) clf = load_classifier(classifier);

  EvalOptions opts;
  opts.episodes = episodes > 0 ? episodes : cfg.eval.episodes;
  opts.seed = cfg.seed;
  opts.tag = scripted ? "scripted" : "policy";
  opts.classifier = cfg.eval.decide && clf ? &*clf : nullptr;
  opts.threshold = cfg.eval.threshold;
  const auto records = evaluate(cfg.env, scripted ? scripted_controller() : policy_controller(*net), opts);
  const auto report = compute_eval_report(records);
  if (!out.empty()) {
    write_records(out, records);
    auto j = to_json(report);
    j["config_hash"] = config_hash(cfg);
    write_json(out / "report.json", j);
  }
  std::cout << format_report(report);
  return 0;
}

int cmd_gen_dataset(const Common& c, const std::string& policy, const fs::path& out, int samples) {
  auto cfg = load(c);
  if (samples > 0) cfg.dataset.samples = samples;
  decision::ControllerFactory factory = [] { return scripted_controller(); };
  std::optional<nn::ActorCritic<float>> net;
  if (!policy.empty()) {
    net = load_policy(policy);
    factory = [&net] { return policy_controller(*net); };
  }
  decision::DatasetStats stats;
  const auto data = decision::generate_dataset(cfg.env, factory, cfg.dataset, cfg.seed, &stats);
  decision::save_dataset(out, data);
  spdlog::info("{} samples from {} episodes ({} injected, {} never stopped, {} rejected)", data.size(),
               stats.episodes, stats.injected, stats.no_stop, stats.rejected);
  return 0;
}

int cmd_train_decision(const Common& c, const fs::path& dataset, const fs::path& out) {
  const auto cfg = load(c);
  const auto data = decision::load_dataset(dataset);
  const auto tc = decision::train_classifier(data, cfg.classifier, cfg.seed);
  auto meta = checkpoint_metadata(cfg, 0, 0);
  meta["threshold"] = tc.threshold;
  meta["test_accuracy"] = tc.test.accuracy;
  io::save(out, io::pack(tc.net, meta));
  std::cout << fmt::format("train accuracy {:.4f}  test accuracy {:.4f}  precision {:.4f}  recall {:.4f}\n",
                           tc.train.accuracy, tc.test.accuracy, tc.test.precision, tc.test.recall);
  return 0;
}

SimServer* g_server = nullptr;

int cmd_serve(const Common& c, int port, const std::string& address, const fs::path& record_dir, bool debug) {
  auto cfg = load(c);
  if (debug) cfg.server.debug = true;
  ServerOptions opts;
  opts.address = address;
  opts.port = static_cast<unsigned short>(port >= 0 ? port : cfg.server.port);
  opts.seed = cfg.seed;
  opts.record_dir = record_dir;
  SimServer server(cfg, opts);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  server.run();
  g_server = nullptr;
  const auto trials = server.trials();
  if (!trials.empty()) std::cout << format_report(compute_eval_report(trials));
  return 0;
}

int cmd_replay(const Common& c, const fs::path& records_dir, int episode, const fs::path& raster_dir) {
  const auto cfg = load(c);
  const auto records = read_records(records_dir);
  if (episode < 0 || episode >= static_cast<int>(records.size()))
    throw ConfigError(fmt::format("episode {} not in {} ({} records)", episode, records_dir.string(), records.size()));
  if (!raster_dir.empty()) fs::create_directories(raster_dir);
  const auto r = replay(cfg.env, records[episode], raster_dir);
  if (!r.identical) {
    std::cerr << fmt::format("replay diverged at tick {}\n", r.first_mismatch);
    return 3;
  }
  std::cout << fmt::format("replayed {} ticks identically\n", r.rows.size());
  return 0;
}

int cmd_dump_path(const Common& c, int episodes, const fs::path& out) {
  const auto cfg = load(c);
  const auto shared_cfg = std::make_shared<const env::EnvConfig>(cfg.env);
  fs::create_directories(out);
  for (int i = 0; i < episodes; ++i) {
    const auto key = eval_key(cfg.seed, i);
    env::ForkliftEnv e(shared_cfg, key.seed, key.env);
    e.reset_to(key, env::shared_appearance(cfg.env, key.seed, key.shared));
    std::ofstream os(out / fmt::format("path_{:04d}.csv", i));
    write_path_csv(os, e.path());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forklift pallet-approach simulator, trainer and evaluation harness"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("-c,--config", common.config, "JSON run config (defaults when omitted)");
  app.add_option("--seed", common.seed, "Override the config seed");
  app.add_option("--log-level", common.log_level, "trace|debug|info|warn|error");

  std::function<int()> run;

  auto* train = app.add_subcommand("train", "Train the approach policy with PPO");
  fs::path train_out = "runs/train";
  train->add_option("-o,--out", train_out, "Run directory (metrics.csv, policy.fkcp)");
  train->callback([&] { run = [&] { return cmd_train(common, train_out); }; });

  auto* ev = app.add_subcommand("eval", "Evaluate held-out episodes");
  std::string ev_policy, ev_classifier;
  bool ev_scripted = false;
  int ev_episodes = 0;
  fs::path ev_out;
  ev->add_option("-p,--policy", ev_policy, "Policy checkpoint")->check(CLI::ExistingFile);
  ev->add_flag("--scripted", ev_scripted, "Use the path-tracking controller instead of a policy");
  ev->add_option("--classifier", ev_classifier, "Decision classifier checkpoint")->check(CLI::ExistingFile);
  ev->add_option("-n,--episodes", ev_episodes, "Episode count (config eval.episodes when omitted)");
  ev->add_option("-o,--out", ev_out, "Write episodes.csv, per-episode CSVs and report.json here");
  ev->callback([&] {
    run = [&] { return cmd_eval(common, ev_policy, ev_scripted, ev_classifier, ev_episodes, ev_out); };
  });

  auto* gd = app.add_subcommand("gen-dataset", "Generate the balanced loading-decision dataset");
  std::string gd_policy;
  fs::path gd_out = "decision.fkds";
  int gd_samples = 0;
  gd->add_option("-p,--policy", gd_policy, "Approach with this policy (scripted controller when omitted)")
      ->check(CLI::ExistingFile);
  gd->add_option("-o,--out", gd_out, "Dataset file");
  gd->add_option("-n,--samples", gd_samples, "Sample count (config dataset.samples when omitted)");
  gd->callback([&] { run = [&] { return cmd_gen_dataset(common, gd_policy, gd_out, gd_samples); }; });

  auto* td = app.add_subcommand("train-decision", "Train the loading-decision classifier");
  fs::path td_data, td_out = "classifier.fkcp";
  td->add_option("-d,--dataset", td_data, "Dataset file")->required()->check(CLI::ExistingFile);
  td->add_option("-o,--out", td_out, "Classifier checkpoint");
  td->callback([&] { run = [&] { return cmd_train_decision(common, td_data, td_out); }; });

  auto* sv = app.add_subcommand("serve", "Run the operator session server");
  int sv_port = -1;
  std::string sv_address = "127.0.0.1";
  fs::path sv_records;
  bool sv_debug = false;
  sv->add_option("--port", sv_port, "TCP port (config server.port when omitted, 0 picks one)");
  sv->add_option("--address", sv_address, "Bind address");
  sv->add_option("--record-dir", sv_records, "Write trial records here");
  sv->add_flag("--debug", sv_debug, "Include ground-truth poses in frames");
  sv->callback([&] { run = [&] { return cmd_serve(common, sv_port, sv_address, sv_records, sv_debug); }; });

  auto* rp = app.add_subcommand("replay", "Re-run a logged episode and check it reproduces");
  fs::path rp_dir, rp_rasters;
  int rp_episode = 0;
  rp->add_option("-r,--records", rp_dir, "Directory holding episodes.csv")->required()->check(CLI::ExistingDirectory);
  rp->add_option("-e,--episode", rp_episode, "Row index in episodes.csv");
  rp->add_option("--rasters", rp_rasters, "Dump per-tick rasters here");
  rp->callback([&] { run = [&] { return cmd_replay(common, rp_dir, rp_episode, rp_rasters); }; });

  auto* dp = app.add_subcommand("dump-path", "Write reference paths of held-out episodes as CSV");
  int dp_n = 10;
  fs::path dp_out = "paths";
  dp->add_option("-n,--episodes", dp_n, "Episode count");
  dp->add_option("-o,--out", dp_out, "Output directory");
  dp->callback([&] { run = [&] { return cmd_dump_path(common, dp_n, dp_out); }; });

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(common.log_level));
  try {
    return run();
  } catch (const ConfigError& e) {
    std::cerr << nlohmann::json{{"error", "config"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << nlohmann::json{{"error", "divergence"}, {"message", e.what()}}.dump() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "runtime"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
}
