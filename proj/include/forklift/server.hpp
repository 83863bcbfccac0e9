#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "forklift/config.hpp"
#include "forklift/harness.hpp"

namespace forklift::harness {

// --- wire protocol ---------------------------------------------------------
// Each WebSocket text message is one JSON object with a "type" field.
//   server -> client: hello, frame, trial_result, error
//   client -> server: command, reset, lift

inline constexpr int kProtocolVersion = 1;

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

nlohmann::json hello_message();
// Rasters as base64 of the raster dump format; vx, vy, omega as measured.
// Debug frames add ground-truth poses.
nlohmann::json frame_message(const env::ForkliftEnv& e, bool debug);
nlohmann::json trial_result_message(sim::Outcome outcome, double time_s);
nlohmann::json error_message(std::string_view code, std::string_view msg);

struct ClientMessage {
  enum class Kind { Command, Reset, Lift } kind = Kind::Command;
  sim::Action action;  // clamped to [-1, 1]
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws ProtocolError on anything malformed.
ClientMessage parse_client_message(std::string_view text);

// --- trial bookkeeping -----------------------------------------------------

// Operator session state, independent of the transport. Commands, lift and
// reset requests are queued and applied on the next tick, which is the only
// place the episode is touched.
class TrialSession {
 public:
  TrialSession(const RunConfig& cfg, std::uint64_t session_seed);

  // Starts trial 0 and returns its first frame.
  std::vector<nlohmann::json> start(double now);
  void command(const sim::Action& a, double now);
  void request_lift() { lift_pending_ = true; }
  void request_reset() { reset_pending_ = true; }
  // One tick at wall-clock time `now` (s); returns the messages to send.
  std::vector<nlohmann::json> tick(double now);

  bool trial_active() const { return active_; }
  const env::ForkliftEnv& env() const { return *env_; }
  const std::vector<EpisodeRecord>& trials() const { return trials_; }
  std::function<void(const EpisodeRecord&)> on_trial;

  static env::EpisodeKey trial_key(std::uint64_t session_seed, std::uint64_t trial);

 private:
  std::vector<nlohmann::json> begin_trial(double now);
  nlohmann::json finish(sim::Outcome final_outcome, double time_s);

  RunConfig cfg_;
  std::shared_ptr<const env::EnvConfig> env_cfg_;
  std::uint64_t seed_;
  std::unique_ptr<env::ForkliftEnv> env_;
  std::uint64_t next_trial_ = 0;
  bool active_ = false;
  bool lift_pending_ = false;
  bool reset_pending_ = false;
  sim::Action latest_;
  double last_command_ = 0.0;
  EpisodeRecord record_;
  std::vector<EpisodeRecord> trials_;
};

// --- server ----------------------------------------------------------------

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 0;  // 0 picks a free port
  std::uint64_t seed = 1;
  std::filesystem::path record_dir;  // trials written here when set
};

// One operator session at a time; a second client gets error{busy} and is
// closed. The sim ticks at cfg.server.tick_hz on a wall-clock timer.
class SimServer {
 public:
  SimServer(const RunConfig& cfg, ServerOptions opts);
  ~SimServer();
  SimServer(const SimServer&) = delete;
  SimServer& operator=(const SimServer&) = delete;

  // Binds and serves on a background thread.
  void start();
  // Binds and serves on the calling thread until stop().
  void run();
  void stop();
  unsigned short port() const;

  // Completed trials across all sessions so far.
  std::vector<EpisodeRecord> trials() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace forklift::harness
