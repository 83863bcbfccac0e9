#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "forklift/config.hpp"
#include "forklift/decision.hpp"
#include "forklift/env.hpp"
#include "forklift/ppo.hpp"

namespace forklift::harness {

// --- episode records -------------------------------------------------------

inline constexpr const char* kTrajectoryHeader =
    "t,x,y,psi,speed,throttle,steer,r_d_term,r_cd_term,r_cpsi_term,r_g_term,r_p,r_v,r_a,r_ini,total";

// One control tick. x, y, psi are the fork center; throttle and steer the
// commanded action.
struct TickRow {
  double t = 0.0;
  double x = 0.0, y = 0.0, psi = 0.0;
  double speed = 0.0;
  double throttle = 0.0, steer = 0.0;
  reward::RewardBreakdown reward;
  bool operator==(const TickRow& o) const;
};

TickRow make_row(const env::ForkliftEnv& e, const env::StepResult& r);

struct EpisodeRecord {
  std::string tag = "policy";  // policy | scripted | human
  env::EpisodeKey key;
  std::vector<TickRow> rows;
  sim::Outcome approach_outcome = sim::Outcome::Running;
  double approach_time = 0.0;  // episode time when the approach ended
  bool decided = false;        // reached the loading decision
  bool lift = false;           // decision was Lift
  double probability = 0.0;
  bool loadable = false;  // loading rule at decision time
  sim::Outcome final_outcome = sim::Outcome::Running;

  bool approach_success() const { return approach_outcome == sim::Outcome::ApproachSuccess; }
  bool full_success() const { return final_outcome == sim::Outcome::LoadSuccess; }
  bool operator==(const EpisodeRecord&) const = default;
};

void write_trajectory_csv(std::ostream& os, const std::vector<TickRow>& rows);
std::vector<TickRow> read_trajectory_csv(std::istream& is);

// Summary table, one line per episode; numbers printed to round-trip.
inline constexpr const char* kEpisodesHeader =
    "episode,tag,seed,env,index,shared,approach_outcome,approach_time,decided,lift,probability,loadable,final_outcome";
void write_episodes_csv(std::ostream& os, const std::vector<EpisodeRecord>& records);
// Rows are left empty; load them from the per-episode trajectory files.
std::vector<EpisodeRecord> read_episodes_csv(std::istream& is);

// <dir>/episodes.csv plus <dir>/episode_NNNN.csv per record.
void write_records(const std::filesystem::path& dir, const std::vector<EpisodeRecord>& records);
std::vector<EpisodeRecord> read_records(const std::filesystem::path& dir);

// --- report ----------------------------------------------------------------

struct EvalReport {
  int n_episodes = 0;
  double approach_success_rate = 0.0;          // %
  std::optional<double> mean_approach_time;    // s, successful approaches only
  std::optional<double> decision_accuracy;     // %, over episodes that reached the decision
  double full_task_success_rate = 0.0;         // %
  bool operator==(const EvalReport&) const = default;
};

EvalReport compute_eval_report(const std::vector<EpisodeRecord>& records);
nlohmann::json to_json(const EvalReport& r);
std::string format_report(const EvalReport& r);

// --- evaluation ------------------------------------------------------------

using Controller = decision::Controller;

Controller policy_controller(const nn::ActorCritic<float>& net);
Controller scripted_controller();

struct EvalOptions {
  int episodes = 100;
  std::uint64_t seed = 1;  // held-out episodes are keyed off derive_seed(seed, "eval")
  std::string tag = "policy";
  const nn::Classifier<float>* classifier = nullptr;  // null: skip the decision
  double threshold = 0.5;
};

env::EpisodeKey eval_key(std::uint64_t seed, int episode);

// Approach, then (on approach success and with a classifier) wait out the
// decision delay, decide, and lift on Lift.
EpisodeRecord run_episode(const env::EnvConfig& cfg, const env::EpisodeKey& key, const Controller& controller,
                          const EvalOptions& opts);
std::vector<EpisodeRecord> evaluate(const env::EnvConfig& cfg, const Controller& controller, const EvalOptions& opts);

// --- training driver -------------------------------------------------------

inline constexpr const char* kMetricsHeader = "update_index,steps,mean_return,success_rate,l_ppo,l_value,entropy,l_bound";
void append_metrics_row(std::ostream& os, const ppo::UpdateMetrics& m);

nlohmann::json checkpoint_metadata(const RunConfig& cfg, std::int64_t steps, std::int64_t update);

// Trains under cfg, appending to <dir>/metrics.csv and writing
// <dir>/policy.fkcp every cfg.ppo.checkpoint_every updates and at the end.
ppo::TrainState run_training(const RunConfig& cfg, const std::filesystem::path& dir);

nn::ActorCritic<float> load_policy(const std::filesystem::path& path);
nn::Classifier<float> load_classifier(const std::filesystem::path& path);

// --- replay and paths ------------------------------------------------------

struct ReplayResult {
  std::vector<TickRow> rows;
  std::size_t first_mismatch = 0;  // == rows.size() when identical
  bool identical = false;
};

// Re-runs a logged episode from its key with the logged commands. With
// `raster_dir` set, each tick's two rasters are dumped there.
ReplayResult replay(const env::EnvConfig& cfg, const EpisodeRecord& record,
                    const std::filesystem::path& raster_dir = {});

// Reference path of an episode as s,x,y,psi,kappa rows.
void write_path_csv(std::ostream& os, const path::ReferencePath& p);

}  // namespace forklift::harness
