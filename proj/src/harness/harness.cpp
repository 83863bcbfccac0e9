#include "forklift/harness.hpp"

#include <charconv>
#include <chrono>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/spdlog.h>

#include "forklift/checkpoint.hpp"
#include "forklift/control.hpp"
#include "forklift/error.hpp"

namespace forklift::harness {

// --- records -----------------------------------------------------------------

bool TickRow::operator==(const TickRow& o) const {
  const auto& a = reward;
  const auto& b = o.reward;
  return t == o.t && x == o.x && y == o.y && psi == o.psi && speed == o.speed && throttle == o.throttle &&
         steer == o.steer && a.r_d_term == b.r_d_term && a.r_cd_term == b.r_cd_term && a.r_cpsi_term == b.r_cpsi_term &&
         a.r_g_term == b.r_g_term && a.r_p == b.r_p && a.r_v == b.r_v && a.r_a == b.r_a && a.r_ini == b.r_ini &&
         a.total == b.total;
}

TickRow make_row(const env::ForkliftEnv& e, const env::StepResult& r) {
  const Pose2D fc = sim::fork_center_pose(e.episode().vehicle, e.config().sim.vehicle);
  return {r.t, fc.x, fc.y, fc.psi, std::abs(e.episode().vehicle.v), r.commanded.throttle, r.commanded.steer, r.reward};
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double to_double(std::string_view s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError("csv: bad number '" + std::string(s) + "'");
  return v;
}

std::uint64_t to_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError("csv: bad integer '" + std::string(s) + "'");
  return v;
}

void expect_header(std::istream& is, const char* header) {
  std::string line;
  if (!std::getline(is, line) || line != header) throw ConfigError(std::string("csv: expected header ") + header);
}

std::string episode_file(std::size_t i) { return fmt::format("episode_{:04d}.csv", i); }

}  // namespace

void write_trajectory_csv(std::ostream& os, const std::vector<TickRow>& rows) {
  os << kTrajectoryHeader << '\n';
  for (const auto& r : rows) {
    const auto& b = r.reward;
    fmt::print(os, "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.t, r.x, r.y, r.psi, r.speed, r.throttle,
               r.steer, b.r_d_term, b.r_cd_term, b.r_cpsi_term, b.r_g_term, b.r_p, b.r_v, b.r_a, b.r_ini, b.total);
  }
}

std::vector<TickRow> read_trajectory_csv(std::istream& is) {
  expect_header(is, kTrajectoryHeader);
  std::vector<TickRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 16) throw ConfigError("trajectory csv: expected 16 fields");
    double v[16];
    for (int i = 0; i < 16; ++i) v[i] = to_double(f[i]);
    TickRow r{v[0], v[1], v[2], v[3], v[4], v[5], v[6], {}};
    r.reward = {v[7], v[8], v[9], v[10], v[11], v[12], v[13], v[14], v[15]};
    rows.push_back(r);
  }
  return rows;
}

void write_episodes_csv(std::ostream& os, const std::vector<EpisodeRecord>& records) {
  os << kEpisodesHeader << '\n';
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    fmt::print(os, "{},{},{},{},{},{},{},{},{},{},{},{},{}\n", i, r.tag, r.key.seed, r.key.env, r.key.episode,
               r.key.shared, sim::to_string(r.approach_outcome), r.approach_time, int(r.decided), int(r.lift),
               r.probability, int(r.loadable), sim::to_string(r.final_outcome));
  }
}

std::vector<EpisodeRecord> read_episodes_csv(std::istream& is) {
  expect_header(is, kEpisodesHeader);
  std::vector<EpisodeRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 13) throw ConfigError("episodes csv: expected 13 fields");
    EpisodeRecord r;
    r.tag = std::string(f[1]);
    r.key = {to_u64(f[2]), to_u64(f[3]), to_u64(f[4]), to_u64(f[5])};
    r.approach_outcome = sim::outcome_from_string(f[6]);
    r.approach_time = to_double(f[7]);
    r.decided = f[8] == "1";
    r.lift = f[9] == "1";
    r.probability = to_double(f[10]);
    r.loadable = f[11] == "1";
    r.final_outcome = sim::outcome_from_string(f[12]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_records(const std::filesystem::path& dir, const std::vector<EpisodeRecord>& records) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "episodes.csv");
    write_episodes_csv(f, records);
    if (!f) throw ConfigError("cannot write " + (dir / "episodes.csv").string());
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::ofstream f(dir / episode_file(i));
    write_trajectory_csv(f, records[i].rows);
  }
}

std::vector<EpisodeRecord> read_records(const std::filesystem::path& dir) {
  std::ifstream f(dir / "episodes.csv");
  if (!f) throw ConfigError("cannot open " + (dir / "episodes.csv").string());
  auto records = read_episodes_csv(f);
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::ifstream t(dir / episode_file(i));
    if (!t) throw ConfigError("missing " + episode_file(i));
    records[i].rows = read_trajectory_csv(t);
  }
  return records;
}

// --- report ------------------------------------------------------------------

EvalReport compute_eval_report(const std::vector<EpisodeRecord>& records) {
  if (records.empty()) throw ContractViolation("compute_eval_report: no records");
  EvalReport r;
  r.n_episodes = static_cast<int>(records.size());
  int approach = 0, full = 0, decided = 0, correct = 0;
  double time_sum = 0.0;
  for (const auto& e : records) {
    if (e.approach_success()) {
      ++approach;
      time_sum += e.approach_time;
    }
    if (e.full_success()) ++full;
    if (e.decided) {
      ++decided;
      if (e.lift == e.loadable) ++correct;
    }
  }
  r.approach_success_rate = 100.0 * approach / r.n_episodes;
  if (approach > 0) r.mean_approach_time = time_sum / approach;
  if (decided > 0) r.decision_accuracy = 100.0 * correct / decided;
  r.full_task_success_rate = 100.0 * full / r.n_episodes;
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j{{"n_episodes", r.n_episodes},
                   {"approach_success_rate", r.approach_success_rate},
                   {"full_task_success_rate", r.full_task_success_rate}};
  j["mean_approach_time"] = r.mean_approach_time ? nlohmann::json(*r.mean_approach_time) : nlohmann::json(nullptr);
  j["decision_accuracy"] = r.decision_accuracy ? nlohmann::json(*r.decision_accuracy) : nlohmann::json(nullptr);
  return j;
}

std::string format_report(const EvalReport& r) {
  const std::string time = r.mean_approach_time ? fmt::format("{:.2f} s", *r.mean_approach_time) : "n/a";
  const std::string acc = r.decision_accuracy ? fmt::format("{:.1f} %", *r.decision_accuracy) : "n/a";
  return fmt::format(
      "episodes            {}\n"
      "approach success    {:.1f} %\n"
      "mean approach time  {}\n"
      "decision accuracy   {}\n"
      "full task success   {:.1f} %\n",
      r.n_episodes, r.approach_success_rate, time, acc, r.full_task_success_rate);
}

// --- evaluation --------------------------------------------------------------

Controller policy_controller(const nn::ActorCritic<float>& net) {
  auto policy = std::make_shared<ppo::Policy>(net);
  return [policy](const env::ForkliftEnv& e) { return policy->act(e.observation()); };
}

Controller scripted_controller() {
  return [](const env::ForkliftEnv& e) { return control::scripted_action(e.episode(), e.path(), e.config().sim); };
}

env::EpisodeKey eval_key(std::uint64_t seed, int episode) {
  const std::uint64_t s = derive_seed(seed, "eval");
  return {s, 0, static_cast<std::uint64_t>(episode), static_cast<std::uint64_t>(episode)};
}

EpisodeRecord run_episode(const env::EnvConfig& cfg, const env::EpisodeKey& key, const Controller& controller,
                          const EvalOptions& opts) {
  auto shared = std::make_shared<const env::EnvConfig>(cfg);
  env::ForkliftEnv e(shared, key.seed, key.env);
  e.reset_to(key, env::shared_appearance(cfg, key.seed, key.shared));
  EpisodeRecord rec;
  rec.tag = opts.tag;
  rec.key = key;
  env::StepResult r;
  do {
    r = e.step(controller(e));
    rec.rows.push_back(make_row(e, r));
  } while (!r.info.terminated);
  rec.approach_outcome = r.info.outcome;
  rec.approach_time = r.t;
  rec.final_outcome = r.info.outcome;
  if (!rec.approach_success() || !opts.classifier) return rec;

  const auto& sc = cfg.sim;
  const int limit = static_cast<int>(std::ceil(10 * sc.episode.decision_delay / sc.episode.dt));
  for (int ticks = 0; !e.settle();) {
    if (++ticks > limit) return rec;  // never came to rest; no decision
  }
  const auto status = sim::fork_pocket_geometry(e.episode().vehicle, e.episode().pallet, sc.vehicle);
  rec.loadable = sim::load_succeeds(status, e.episode().pallet.displaced_total, sc.episode.displacement_fail_limit);
  const auto d = decision::decide(*opts.classifier, e.observation(), opts.threshold);
  rec.decided = true;
  rec.probability = d.probability;
  rec.lift = d.decision == decision::Decision::Lift;
  if (rec.lift) {
    rec.final_outcome = e.lift() == sim::LoadOutcome::LoadSuccess ? sim::Outcome::LoadSuccess : sim::Outcome::LoadFail;
  }
  return rec;
}

std::vector<EpisodeRecord> evaluate(const env::EnvConfig& cfg, const Controller& controller, const EvalOptions& opts) {
  if (opts.episodes < 1) throw ConfigError("evaluation needs at least one episode");
  std::vector<EpisodeRecord> out;
  out.reserve(opts.episodes);
  for (int i = 0; i < opts.episodes; ++i) out.push_back(run_episode(cfg, eval_key(opts.seed, i), controller, opts));
  return out;
}

// --- training ----------------------------------------------------------------

void append_metrics_row(std::ostream& os, const ppo::UpdateMetrics& m) {
  fmt::print(os, "{},{},{},{},{},{},{},{}\n", m.update, m.steps, m.rollout.mean_return, m.rollout.success_rate,
             m.loss.l_ppo, m.loss.l_value, m.loss.entropy, m.loss.l_bound);
}

nlohmann::json checkpoint_metadata(const RunConfig& cfg, std::int64_t steps, std::int64_t update) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  return {{"config_hash", config_hash(cfg)},
          {"run_id", cfg.run_id},
          {"seed", cfg.seed},
          {"steps", steps},
          {"update", update},
          {"obs_schema_version", sensing::kObservationSchemaVersion},
          {"created", std::chrono::duration_cast<std::chrono::seconds>(now).count()}};
}

ppo::TrainState run_training(const RunConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  std::filesystem::create_directories(dir);
  const auto metrics_path = dir / "metrics.csv";
  const bool fresh = !std::filesystem::exists(metrics_path) || std::filesystem::file_size(metrics_path) == 0;
  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw ConfigError("cannot open " + metrics_path.string());
  if (fresh) metrics << kMetricsHeader << '\n';

  ppo::TrainHooks hooks;
  hooks.on_update = [&](const ppo::UpdateMetrics& m) {
    append_metrics_row(metrics, m);
    metrics.flush();
    spdlog::info("update {} steps {} return {:.2f} success {:.3f} l_ppo {:.4f} l_value {:.3f} H {:.3f}", m.update,
                 m.steps, m.rollout.mean_return, m.rollout.success_rate, m.loss.l_ppo, m.loss.l_value,
                 m.loss.entropy);
  };
  hooks.on_checkpoint = [&](const ppo::TrainState& s) {
    io::save(dir / "policy.fkcp", io::pack(s.net, checkpoint_metadata(cfg, s.steps, s.update)));
  };
  return ppo::train(cfg.env, cfg.ppo, cfg.seed, hooks);
}

nn::ActorCritic<float> load_policy(const std::filesystem::path& path) {
  return io::unpack_actor_critic(io::load(path), sensing::kObservationSchemaVersion);
}

nn::Classifier<float> load_classifier(const std::filesystem::path& path) {
  return io::unpack_classifier(io::load(path), sensing::kObservationSchemaVersion);
}

// --- replay ------------------------------------------------------------------

ReplayResult replay(const env::EnvConfig& cfg, const EpisodeRecord& record, const std::filesystem::path& raster_dir) {
  auto shared = std::make_shared<const env::EnvConfig>(cfg);
  const auto& key = record.key;
  env::ForkliftEnv e(shared, key.seed, key.env);
  e.reset_to(key, env::shared_appearance(cfg, key.seed, key.shared));
  if (!raster_dir.empty()) std::filesystem::create_directories(raster_dir);
  ReplayResult out;
  for (std::size_t i = 0; i < record.rows.size(); ++i) {
    const auto& logged = record.rows[i];
    const auto r = e.step({logged.throttle, logged.steer});
    out.rows.push_back(make_row(e, r));
    if (!raster_dir.empty()) {
      for (const auto& [name, raster] : {std::pair{"left", &e.raster_left()}, std::pair{"right", &e.raster_right()}}) {
        const auto bytes = sensing::dump_raster(*raster);
        std::ofstream f(raster_dir / fmt::format("tick_{:04d}_{}.bin", i, name), std::ios::binary);
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      }
    }
    if (r.info.terminated) break;
  }
  out.first_mismatch = out.rows.size();
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    if (!(out.rows[i] == record.rows[i])) {
      out.first_mismatch = i;
      break;
    }
  }
  out.identical = out.rows.size() == record.rows.size() && out.first_mismatch == out.rows.size();
  return out;
}

void write_path_csv(std::ostream& os, const path::ReferencePath& p) {
  os << "s,x,y,psi,kappa\n";
  for (const auto& s : p.samples()) fmt::print(os, "{},{},{},{},{}\n", s.s, s.p.x, s.p.y, s.psi, s.kappa);
}

}  // namespace forklift::harness
