#include "forklift/server.hpp"

#include <chrono>
#include <deque>
#include <mutex>
#include <thread>

#include <boost/asio/co_spawn.hpp>
#include <boost/asio/detached.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/redirect_error.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/use_awaitable.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/core/detail/base64.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "forklift/error.hpp"

namespace forklift::harness {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using asio::ip::tcp;
using nlohmann::json;

// --- protocol ----------------------------------------------------------------

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(beast::detail::base64::encoded_size(bytes.size()), '\0');
  out.resize(beast::detail::base64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  // The decoder stops at the first padding character, so padding is checked
  // here and everything before it must be consumed.
  if (text.size() % 4 != 0) throw ProtocolError("invalid base64");
  std::size_t body = text.size();
  for (int i = 0; i < 2 && body > 0 && text[body - 1] == '='; ++i) --body;
  std::vector<std::uint8_t> out(beast::detail::base64::decoded_size(text.size()));
  const auto [written, read] = beast::detail::base64::decode(out.data(), text.data(), body);
  if (read != body) throw ProtocolError("invalid base64");
  out.resize(written);
  return out;
}

json hello_message() {
  return {{"type", "hello"}, {"schema_version", sensing::kObservationSchemaVersion}, {"protocol", kProtocolVersion}};
}

namespace {

json pose_json(const Pose2D& p) { return {{"x", p.x}, {"y", p.y}, {"psi", p.psi}}; }

}  // namespace

json frame_message(const env::ForkliftEnv& e, bool debug) {
  const auto& m = e.measured_speed();
  json f{{"type", "frame"},
         {"t", e.episode().t},
         {"raster_left", base64_encode(sensing::dump_raster(e.raster_left()))},
         {"raster_right", base64_encode(sensing::dump_raster(e.raster_right()))},
         {"vx", m.vx},
         {"vy", m.vy},
         {"omega", m.omega},
         {"phase", sim::to_string(e.episode().phase)}};
  if (debug) {
    const auto& ep = e.episode();
    f["debug"] = {{"vehicle", pose_json(ep.vehicle.pose)},
                  {"fork", pose_json(sim::fork_center_pose(ep.vehicle, e.config().sim.vehicle))},
                  {"pallet", pose_json(ep.pallet.pose)},
                  {"speed", ep.vehicle.v}};
  }
  return f;
}

json trial_result_message(sim::Outcome outcome, double time_s) {
  return {{"type", "trial_result"}, {"outcome", sim::to_string(outcome)}, {"time_s", time_s}};
}

json error_message(std::string_view code, std::string_view msg) {
  return {{"type", "error"}, {"code", code}, {"msg", msg}};
}

ClientMessage parse_client_message(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception&) {
    throw ProtocolError("message is not valid JSON");
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw ProtocolError("message must be an object with a string 'type'");
  }
  const std::string type = j["type"];
  ClientMessage m;
  auto only = [&](std::initializer_list<const char*> keys) {
    for (const auto& [k, _] : j.items()) {
      if (std::find_if(keys.begin(), keys.end(), [&](const char* a) { return k == a; }) == keys.end()) {
        throw ProtocolError("unexpected field '" + k + "' in " + type);
      }
    }
  };
  if (type == "command") {
    only({"type", "throttle", "steer"});
    for (const char* k : {"throttle", "steer"}) {
      if (!j.contains(k) || !j[k].is_number()) throw ProtocolError(std::string("command needs a numeric ") + k);
    }
    const double t = j["throttle"], s = j["steer"];
    if (!std::isfinite(t) || !std::isfinite(s)) throw ProtocolError("command values must be finite");
    m.kind = ClientMessage::Kind::Command;
    m.action = {std::clamp(t, -1.0, 1.0), std::clamp(s, -1.0, 1.0)};
  } else if (type == "reset") {
    only({"type"});
    m.kind = ClientMessage::Kind::Reset;
  } else if (type == "lift") {
    only({"type"});
    m.kind = ClientMessage::Kind::Lift;
  } else {
    throw ProtocolError("unknown message type '" + type + "'");
  }
  return m;
}

// --- trials ------------------------------------------------------------------

TrialSession::TrialSession(const RunConfig& cfg, std::uint64_t session_seed)
    : cfg_(cfg), env_cfg_(std::make_shared<const env::EnvConfig>(cfg.env)), seed_(session_seed) {}

env::EpisodeKey TrialSession::trial_key(std::uint64_t session_seed, std::uint64_t trial) {
  return {derive_seed(session_seed, "human"), 0, trial, trial};
}

std::vector<json> TrialSession::start(double now) { return begin_trial(now); }

std::vector<json> TrialSession::begin_trial(double now) {
  const auto key = trial_key(seed_, next_trial_++);
  env_ = std::make_unique<env::ForkliftEnv>(env_cfg_, key.seed, key.env);
  env_->reset_to(key, env::shared_appearance(*env_cfg_, key.seed, key.shared));
  record_ = EpisodeRecord{};
  record_.tag = "human";
  record_.key = key;
  active_ = true;
  lift_pending_ = reset_pending_ = false;
  latest_ = {};
  last_command_ = now;
  return {frame_message(*env_, cfg_.server.debug)};
}

void TrialSession::command(const sim::Action& a, double now) {
  latest_ = a;
  last_command_ = now;
}

json TrialSession::finish(sim::Outcome final_outcome, double time_s) {
  record_.final_outcome = final_outcome;
  active_ = false;
  trials_.push_back(record_);
  if (on_trial) on_trial(record_);
  return trial_result_message(final_outcome, time_s);
}

std::vector<json> TrialSession::tick(double now) {
  if (reset_pending_) return begin_trial(now);
  lift_pending_ = lift_pending_ && active_;
  if (!active_) return {};
  auto& e = *env_;
  std::vector<json> out;
  if (e.episode().phase == sim::Phase::Approach) {
    if (lift_pending_) {
      // Operator ended the approach early.
      record_.approach_outcome = sim::Outcome::Running;
      record_.approach_time = e.episode().t;
      e.stop();
    } else {
      sim::Action a = latest_;
      if (now - last_command_ > cfg_.server.command_timeout) a.throttle = 0.0;  // starved: coast to a stop
      const auto r = e.step(a);
      record_.rows.push_back(make_row(e, r));
      out.push_back(frame_message(e, cfg_.server.debug));
      if (r.info.terminated) {
        record_.approach_outcome = r.info.outcome;
        record_.approach_time = r.t;
        if (r.info.outcome != sim::Outcome::ApproachSuccess) out.push_back(finish(r.info.outcome, r.t));
      }
      return out;
    }
  }
  // Stopped: hold still until the operator lifts.
  if (lift_pending_) {
    lift_pending_ = false;
    const auto& sc = env_cfg_->sim;
    const auto status = sim::fork_pocket_geometry(e.episode().vehicle, e.episode().pallet, sc.vehicle);
    record_.loadable = sim::load_succeeds(status, e.episode().pallet.displaced_total, sc.episode.displacement_fail_limit);
    record_.decided = true;
    record_.lift = true;
    record_.probability = 1.0;
    const auto o = e.lift() == sim::LoadOutcome::LoadSuccess ? sim::Outcome::LoadSuccess : sim::Outcome::LoadFail;
    out.push_back(finish(o, record_.approach_time));
    return out;
  }
  e.settle();
  out.push_back(frame_message(e, cfg_.server.debug));
  return out;
}

// --- server ------------------------------------------------------------------

struct SimServer::Impl {
  RunConfig cfg;
  ServerOptions opts;
  asio::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::thread thread;
  bool session_active = false;
  std::uint64_t sessions = 0;
  mutable std::mutex mu;
  std::vector<EpisodeRecord> trials;

  void bind() {
    const tcp::endpoint ep(asio::ip::make_address(opts.address), opts.port);
    acceptor.open(ep.protocol());
    acceptor.set_option(asio::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen();
    asio::co_spawn(ioc, listen(), asio::detached);
  }

  asio::awaitable<void> listen() {
    for (;;) {
      tcp::socket socket = co_await acceptor.async_accept(asio::use_awaitable);
      if (session_active) {
        asio::co_spawn(ioc, reject(std::move(socket)), asio::detached);
      } else {
        session_active = true;
        asio::co_spawn(ioc, session(std::move(socket)), asio::detached);
      }
    }
  }

  static asio::awaitable<void> reject(tcp::socket socket) {
    try {
      websocket::stream<tcp::socket> ws(std::move(socket));
      co_await ws.async_accept(asio::use_awaitable);
      ws.text(true);
      const std::string msg = error_message("busy", "another operator session is active").dump();
      co_await ws.async_write(asio::buffer(msg), asio::use_awaitable);
      co_await ws.async_close(websocket::close_code::try_again_later, asio::use_awaitable);
    } catch (const std::exception&) {
    }
  }

  struct Session {
    explicit Session(tcp::socket s, asio::io_context& ioc) : ws(std::move(s)), timer(ioc) {}
    websocket::stream<tcp::socket> ws;
    asio::steady_timer timer;
    std::deque<std::string> outbox;
    bool closing = false;
    bool done = false;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double now() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
  };

  asio::awaitable<void> session(tcp::socket socket) {
    auto s = std::make_shared<Session>(std::move(socket), ioc);
    try {
      co_await s->ws.async_accept(asio::use_awaitable);
      s->ws.text(true);
      TrialSession trials_state(cfg, derive_seed(opts.seed, "session", sessions++));
      trials_state.on_trial = [this](const EpisodeRecord& r) { record(r); };
      s->outbox.push_back(hello_message().dump());
      for (auto& m : trials_state.start(s->now())) s->outbox.push_back(m.dump());
      asio::co_spawn(ioc, ticker(s, trials_state), asio::detached);
      co_await reader(s, trials_state);
      // The ticker references trials_state; wait for it to wind down.
      s->done = true;
      s->timer.cancel();
      while (s->timer.expiry() != asio::steady_timer::time_point::min()) {
        asio::steady_timer wait(ioc, std::chrono::milliseconds(1));
        co_await wait.async_wait(asio::use_awaitable);
      }
    } catch (const std::exception& e) {
      spdlog::debug("session ended: {}", e.what());
    }
    session_active = false;
  }

  asio::awaitable<void> reader(std::shared_ptr<Session> s, TrialSession& st) {
    beast::flat_buffer buf;
    for (;;) {
      beast::error_code ec;
      co_await s->ws.async_read(buf, asio::redirect_error(asio::use_awaitable, ec));
      if (ec) co_return;
      const std::string text = beast::buffers_to_string(buf.data());
      buf.consume(buf.size());
      try {
        const auto m = parse_client_message(text);
        switch (m.kind) {
          case ClientMessage::Kind::Command: st.command(m.action, s->now()); break;
          case ClientMessage::Kind::Reset: st.request_reset(); break;
          case ClientMessage::Kind::Lift: st.request_lift(); break;
        }
      } catch (const ProtocolError& e) {
        s->outbox.push_back(error_message("malformed", e.what()).dump());
        s->closing = true;
        // Keep reading so the close handshake completes; the ticker closes.
      }
    }
  }

  asio::awaitable<void> ticker(std::shared_ptr<Session> s, TrialSession& st) {
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / cfg.server.tick_hz));
    auto next = std::chrono::steady_clock::now();
    try {
      for (;;) {
        while (!s->outbox.empty()) {
          const std::string msg = std::move(s->outbox.front());
          s->outbox.pop_front();
          co_await s->ws.async_write(asio::buffer(msg), asio::use_awaitable);
        }
        if (s->closing) {
          co_await s->ws.async_close(websocket::close_code::policy_error, asio::use_awaitable);
          break;
        }
        next += period;
        s->timer.expires_at(next);
        beast::error_code ec;
        co_await s->timer.async_wait(asio::redirect_error(asio::use_awaitable, ec));
        if (s->done) break;
        if (!s->closing) {
          for (auto& m : st.tick(s->now())) s->outbox.push_back(m.dump());
        }
      }
    } catch (const std::exception& e) {
      spdlog::debug("ticker stopped: {}", e.what());
    }
    s->timer.expires_at(asio::steady_timer::time_point::min());
  }

  void record(const EpisodeRecord& r) {
    std::lock_guard lock(mu);
    trials.push_back(r);
    if (!opts.record_dir.empty()) write_records(opts.record_dir, trials);
  }
};

SimServer::SimServer(const RunConfig& cfg, ServerOptions opts) : impl_(std::make_unique<Impl>()) {
  cfg.validate();
  impl_->cfg = cfg;
  impl_->opts = std::move(opts);
}

SimServer::~SimServer() { stop(); }

void SimServer::start() {
  impl_->bind();
  impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

void SimServer::run() {
  impl_->bind();
  spdlog::info("serving on ws://{}:{}", impl_->opts.address, port());
  impl_->ioc.run();
}

void SimServer::stop() {
  impl_->ioc.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

unsigned short SimServer::port() const { return impl_->acceptor.local_endpoint().port(); }

std::vector<EpisodeRecord> SimServer::trials() const {
  std::lock_guard lock(impl_->mu);
  return impl_->trials;
}

}  // namespace forklift::harness
