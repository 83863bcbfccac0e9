#include "forklift/config.hpp"

#include <fstream>

#include <fmt/format.h>

#include "forklift/error.hpp"

namespace forklift::harness {

using nlohmann::json;

void RunConfig::validate() const {
  env.validate();
  ppo.validate();
  dataset.validate();
  classifier.validate();
  if (eval.episodes < 1) throw ConfigError("eval.episodes must be positive");
  if (!(eval.threshold > 0 && eval.threshold < 1)) throw ConfigError("eval.threshold must be in (0, 1)");
  if (server.port < 0 || server.port > 65535) throw ConfigError("server.port out of range");
  if (!(server.tick_hz > 0)) throw ConfigError("server.tick_hz must be positive");
  if (!(server.command_timeout > 0)) throw ConfigError("server.command_timeout must be positive");
}

namespace {

// One visitor drives both directions so the field list exists once.
// Writing: each field is stored into `out`. Reading: each field present in
// `in` is parsed and consumed; leftovers are unknown keys.
class Section {
 public:
  Section(std::string path, const json* in, json* out) : path_(std::move(path)), in_(in), out_(out) {
    if (in_ && !in_->is_object()) throw ConfigError(path_label() + " must be an object");
  }

  template <class T>
  Section& field(const char* key, T& v) {
    if (out_) {
      (*out_)[key] = v;
    } else if (in_->contains(key)) {
      try {
        v = in_->at(key).get<T>();
      } catch (const json::exception&) {
        throw ConfigError(fmt::format("{}: wrong type", child(key)));
      }
      seen_.push_back(key);
    }
    return *this;
  }

  Section& vec2(const char* key, Vec2& v) {
    std::array<double, 2> a{v.x, v.y};
    field(key, a);
    v = {a[0], a[1]};
    return *this;
  }

  Section& pose(const char* key, Pose2D& p) {
    std::array<double, 3> a{p.x, p.y, p.psi};
    field(key, a);
    p = {a[0], a[1], a[2]};
    return *this;
  }

  template <class F>
  Section& section(const char* key, F&& body) {
    if (out_) {
      json sub = json::object();
      Section s(child(key), nullptr, &sub);
      body(s);
      (*out_)[key] = std::move(sub);
    } else if (in_->contains(key)) {
      Section s(child(key), &in_->at(key), nullptr);
      body(s);
      s.finish();
      seen_.push_back(key);
    }
    return *this;
  }

  void finish() const {
    if (!in_) return;
    for (const auto& [k, _] : in_->items()) {
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) throw ConfigError("unknown config key " + child(k));
    }
  }

 private:
  std::string child(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  std::string path_label() const { return path_.empty() ? "config" : path_; }

  std::string path_;
  const json* in_;
  json* out_;
  std::vector<std::string> seen_;
};

void rgb(Section& s, const char* key, sensing::Rgb& c) { s.field(key, c); }

void camera(Section& s, sensing::CameraModel& c) {
  s.vec2("mount", c.mount).field("yaw", c.yaw).field("fov", c.fov).field("ray_count", c.ray_count).field("max_range",
                                                                                                        c.max_range);
}

void visit(Section& root, RunConfig& c) {
  root.field("run_id", c.run_id).field("seed", c.seed);
  auto& sim = c.env.sim;
  root.section("vehicle", [&](Section& s) {
    auto& v = sim.vehicle;
    s.field("body_length", v.body_length)
        .field("body_width", v.body_width)
        .field("fork_length", v.fork_length)
        .field("fork_width", v.fork_width)
        .field("fork_spacing", v.fork_spacing)
        .field("wheelbase", v.wheelbase)
        .field("v_max", v.v_max)
        .field("delta_max", v.delta_max)
        .field("speed_lag_tau", v.speed_lag_tau)
        .field("steer_rate_max", v.steer_rate_max);
  });
  root.section("pallet", [&](Section& s) {
    auto& p = sim.pallet;
    s.field("width", p.width).field("depth", p.depth).field("pocket_width", p.pocket_width).field("pocket_spacing",
                                                                                                  p.pocket_spacing);
  });
  root.section("arena", [&](Section& s) {
    auto& a = sim.arena;
    s.field("side", a.side).vec2("stand_center", a.stand_center).vec2("stand_size", a.stand_size);
    std::array<std::array<double, 2>, 3> tri{};
    for (int i = 0; i < 3; ++i) tri[i] = {a.start_triangle[i].x, a.start_triangle[i].y};
    s.field("start_triangle", tri);
    for (int i = 0; i < 3; ++i) a.start_triangle[i] = {tri[i][0], tri[i][1]};
  });
  root.section("episode", [&](Section& s) {
    auto& e = sim.episode;
    s.field("dt", e.dt)
        .field("substeps", e.substeps)
        .field("stop_speed_eps", e.stop_speed_eps)
        .field("displacement_fail_limit", e.displacement_fail_limit)
        .field("t_max", e.t_max)
        .field("heading_cone", e.heading_cone)
        .field("target_depth_fraction", e.target_depth_fraction)
        .field("decision_delay", e.decision_delay)
        .pose("pallet_pose", e.pallet_pose);
  });
  root.section("cameras", [&](Section& s) {
    s.section("left", [&](Section& l) { camera(l, c.env.cameras.left); });
    s.section("right", [&](Section& r) { camera(r, c.env.cameras.right); });
  });
  root.section("randomization", [&](Section& s) {
    auto& r = c.env.randomization;
    s.field("colors", r.colors)
        .field("lighting", r.lighting)
        .field("observed_speed", r.observed_speed)
        .field("action", r.action)
        .field("color_scale", r.color_scale)
        .field("speed_scale", r.speed_scale)
        .field("action_scale", r.action_scale)
        .field("intensity_min", r.intensity_min)
        .field("intensity_max", r.intensity_max)
        .field("temp_min", r.temp_min)
        .field("temp_max", r.temp_max);
    s.section("base", [&](Section& b) {
      auto& a = r.base;
      rgb(b, "floor", a.floor);
      rgb(b, "wall", a.wall);
      rgb(b, "pallet", a.pallet);
      rgb(b, "pallet_stand", a.pallet_stand);
      rgb(b, "load", a.load);
      b.field("light_intensity", a.light_intensity).field("light_temp", a.light_temp);
    });
  });
  root.section("reward", [&](Section& s) {
    auto& w = c.env.reward;
    s.field("alpha1", w.alpha1)
        .field("alpha2", w.alpha2)
        .field("alpha3", w.alpha3)
        .field("alpha4", w.alpha4)
        .field("alpha5", w.alpha5)
        .field("alpha6", w.alpha6)
        .field("alpha7", w.alpha7)
        .field("alpha8", w.alpha8)
        .field("clamp_eps", w.clamp_eps);
  });
  root.section("path", [&](Section& s) {
    s.field("goal_standoff", c.env.goal_standoff).field("samples", c.env.path_samples);
  });
  root.section("ppo", [&](Section& s) {
    auto& p = c.ppo;
    s.field("gamma", p.gamma)
        .field("lambda", p.lam)
        .field("clip_eps", p.clip_eps)
        .field("c1", p.c1)
        .field("c2", p.c2)
        .field("c3", p.c3)
        .field("lr", p.lr)
        .field("epochs", p.epochs)
        .field("minibatch", p.minibatch)
        .field("horizon", p.horizon)
        .field("envs", p.envs)
        .field("total_steps", p.total_steps)
        .field("max_grad_norm", p.max_grad_norm)
        .field("log_std_init", p.log_std_init)
        .field("workers", p.workers)
        .field("checkpoint_every", p.checkpoint_every);
  });
  root.section("dataset", [&](Section& s) {
    auto& d = c.dataset;
    s.field("samples", d.samples)
        .field("noise_sigma", d.noise_sigma)
        .field("noise_start_max", d.noise_start_max)
        .field("early_stop_share", d.early_stop_share)
        .field("early_stop_max", d.early_stop_max)
        .field("episode_budget_factor", d.episode_budget_factor)
        .field("batch", d.batch)
        .field("workers", d.workers);
  });
  root.section("classifier", [&](Section& s) {
    auto& k = c.classifier;
    s.field("hidden", k.hidden)
        .field("epochs", k.epochs)
        .field("minibatch", k.minibatch)
        .field("lr", k.lr)
        .field("train_fraction", k.train_fraction)
        .field("threshold", k.threshold);
  });
  root.section("eval", [&](Section& s) {
    s.field("episodes", c.eval.episodes).field("decide", c.eval.decide).field("threshold", c.eval.threshold);
  });
  root.section("server", [&](Section& s) {
    s.field("port", c.server.port)
        .field("tick_hz", c.server.tick_hz)
        .field("command_timeout", c.server.command_timeout)
        .field("debug", c.server.debug);
  });
}

}  // namespace

json to_json(const RunConfig& c) {
  json out = json::object();
  RunConfig copy = c;
  Section root("", nullptr, &out);
  visit(root, copy);
  return out;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Section root("", &j, nullptr);
  visit(root, c);
  root.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const RunConfig& c) { return fmt::format("{:016x}", fnv1a64(to_json(c).dump())); }

}  // namespace forklift::harness
