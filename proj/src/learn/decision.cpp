#include "forklift/decision.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "forklift/checkpoint.hpp"
#include "forklift/error.hpp"
#include "forklift/parallel.hpp"
#include "forklift/ppo.hpp"

namespace forklift::decision {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

bool DecisionSample::operator==(const DecisionSample& o) const {
  const auto& a = insertion;
  const auto& b = o.insertion;
  return observation == o.observation && success == o.success && episode == o.episode && injected == o.injected &&
         a.depth_left == b.depth_left && a.depth_right == b.depth_right &&
         a.lateral_clear_left == b.lateral_clear_left && a.lateral_clear_right == b.lateral_clear_right &&
         displaced_total == o.displaced_total;
}

bool relabel(const DecisionSample& s, const sim::SimConfig& cfg) {
  return sim::load_succeeds(s.insertion, s.displaced_total, cfg.episode.displacement_fail_limit);
}

// --- container -------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'F', 'K', 'D', 'S'};

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T get(std::span<const std::uint8_t> b, std::size_t& pos) {
  if (b.size() - pos < sizeof(T)) throw ConfigError("dataset: truncated file");
  T v;
  std::memcpy(&v, b.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_dataset(std::span<const DecisionSample> samples) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kDatasetVersion);
  put<std::uint32_t>(out, sensing::kObservationSchemaVersion);
  put<std::uint32_t>(out, sensing::kObservationSize);
  put<std::uint64_t>(out, samples.size());
  for (const auto& s : samples) {
    for (float x : s.observation) put(out, x);
    put<std::uint8_t>(out, s.success ? 1 : 0);
    put<std::uint8_t>(out, s.injected ? 1 : 0);
    put<std::uint64_t>(out, s.episode);
    put(out, s.insertion.depth_left);
    put(out, s.insertion.depth_right);
    put(out, s.insertion.lateral_clear_left);
    put(out, s.insertion.lateral_clear_right);
    put(out, s.displaced_total);
  }
  return out;
}

std::vector<DecisionSample> decode_dataset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw ConfigError("dataset: bad magic");
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kDatasetVersion) throw ConfigError("dataset: container version " + std::to_string(version) + " is not supported");
  const auto schema = get<std::uint32_t>(bytes, pos);
  if (schema != sensing::kObservationSchemaVersion) {
    throw ConfigError("dataset: observation schema version " + std::to_string(schema) + " does not match " +
                      std::to_string(sensing::kObservationSchemaVersion));
  }
  if (get<std::uint32_t>(bytes, pos) != sensing::kObservationSize) throw ConfigError("dataset: observation size mismatch");
  const auto count = get<std::uint64_t>(bytes, pos);
  constexpr std::size_t kRecord = sensing::kObservationSize * 4 + 2 + 8 + 5 * 8;
  if ((bytes.size() - pos) != count * kRecord) throw ConfigError("dataset: size does not match the record count");
  std::vector<DecisionSample> out(count);
  for (auto& s : out) {
    for (float& x : s.observation) x = get<float>(bytes, pos);
    s.success = get<std::uint8_t>(bytes, pos) != 0;
    s.injected = get<std::uint8_t>(bytes, pos) != 0;
    s.episode = get<std::uint64_t>(bytes, pos);
    s.insertion.depth_left = get<double>(bytes, pos);
    s.insertion.depth_right = get<double>(bytes, pos);
    s.insertion.lateral_clear_left = get<double>(bytes, pos);
    s.insertion.lateral_clear_right = get<double>(bytes, pos);
    s.displaced_total = get<double>(bytes, pos);
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, std::span<const DecisionSample> samples) {
  io::write_file_atomic(path, encode_dataset(samples));
}

std::vector<DecisionSample> load_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path));
}

// --- generation --------------------------------------------------------------

void DatasetConfig::validate() const {
  if (samples < 2) throw ConfigError("dataset samples must be at least 2");
  if (!(noise_sigma >= 0)) throw ConfigError("noise_sigma must be non-negative");
  if (noise_start_max < 1) throw ConfigError("noise_start_max must be positive");
  if (!(early_stop_share >= 0 && early_stop_share <= 1)) throw ConfigError("early_stop_share must be in [0, 1]");
  if (!(early_stop_max > 0)) throw ConfigError("early_stop_max must be positive");
  if (episode_budget_factor < 1) throw ConfigError("episode_budget_factor must be positive");
  if (batch < 1 || workers < 1) throw ConfigError("batch and workers must be positive");
}

namespace {

struct EpisodePlan {
  bool injected = false;
  bool early_stop = false;
  double stop_distance = 0.0;
  int noise_start = 0;
};

struct EpisodeResult {
  bool stopped = false;
  DecisionSample sample;
};

EpisodeResult run_episode(const std::shared_ptr<const env::EnvConfig>& cfg, std::uint64_t env_seed, std::uint64_t idx,
                          const Controller& controller, const EpisodePlan& plan, const DatasetConfig& dc) {
  env::ForkliftEnv e(cfg, env_seed, 0);
  e.reset_to({env_seed, 0, idx, idx}, env::shared_appearance(*cfg, env_seed, idx));
  RngStream noise(env_seed, "dataset-noise", idx);
  EpisodeResult out;
  for (int tick = 0;; ++tick) {
    if (plan.early_stop && e.privileged().r_d < plan.stop_distance) {
      e.stop();
      break;
    }
    sim::Action a = controller(e);
    if (plan.injected && !plan.early_stop && tick >= plan.noise_start) {
      a.throttle += dc.noise_sigma * noise.normal();
      a.steer += dc.noise_sigma * noise.normal();
    }
    const auto r = e.step(a);
    if (r.info.terminated) {
      if (r.info.outcome != sim::Outcome::ApproachSuccess) return out;
      break;
    }
  }
  const auto& sc = cfg->sim;
  const int settle_limit = static_cast<int>(std::ceil(10 * sc.episode.decision_delay / sc.episode.dt));
  int ticks = 0;
  while (!e.settle()) {
    if (++ticks > settle_limit) return out;  // never came to rest
  }
  auto& s = out.sample;
  s.observation = e.observation();
  s.episode = idx;
  s.injected = plan.injected;
  s.insertion = sim::fork_pocket_geometry(e.episode().vehicle, e.episode().pallet, sc.vehicle);
  s.displaced_total = e.episode().pallet.displaced_total;
  s.success = e.lift() == sim::LoadOutcome::LoadSuccess;
  if (s.success != relabel(s, sc)) throw ContractViolation("dataset: lift outcome disagrees with the loading rule");
  out.stopped = true;
  return out;
}

}  // namespace

std::vector<DecisionSample> generate_dataset(const env::EnvConfig& cfg, const ControllerFactory& controller,
                                             const DatasetConfig& dc, std::uint64_t seed, DatasetStats* stats) {
  cfg.validate();
  dc.validate();
  const auto shared_cfg = std::make_shared<const env::EnvConfig>(cfg);
  const std::uint64_t env_seed = derive_seed(seed, "dataset");
  const int want_success = dc.samples / 2;
  const int want_fail = dc.samples - want_success;
  const std::int64_t budget = static_cast<std::int64_t>(dc.samples) * dc.episode_budget_factor;

  std::vector<DecisionSample> out;
  out.reserve(dc.samples);
  int have_success = 0, have_fail = 0;
  DatasetStats st;
  WorkerPool pool(dc.workers);
  std::vector<EpisodePlan> plans(dc.batch);
  std::vector<EpisodeResult> results(dc.batch);
  std::uint64_t next = 0;

  while (have_success < want_success || have_fail < want_fail) {
    if (static_cast<std::int64_t>(next) >= budget) {
      throw ConfigError("dataset: class balance not reached within " + std::to_string(budget) + " episodes (" +
                        std::to_string(have_success) + " successes, " + std::to_string(have_fail) + " failures)");
    }
    // Inject in proportion to the share of failures still missing.
    const double missing_f = want_fail - have_fail, missing_s = want_success - have_success;
    const double p_inject = missing_f / (missing_f + missing_s);
    for (int j = 0; j < dc.batch; ++j) {
      RngStream r(env_seed, "dataset-plan", next + j);
      auto& p = plans[j];
      p.injected = r.uniform() < p_inject;
      p.early_stop = p.injected && r.uniform() < dc.early_stop_share;
      p.stop_distance = r.uniform(0.0, dc.early_stop_max);
      p.noise_start = static_cast<int>(r.below(dc.noise_start_max));
    }
    pool.run(dc.batch, [&](int j) {
      results[j] = run_episode(shared_cfg, env_seed, next + j, controller(), plans[j], dc);
    });
    // Accept in episode order so the result does not depend on scheduling.
    for (int j = 0; j < dc.batch; ++j) {
      ++st.episodes;
      if (plans[j].injected) ++st.injected;
      if (!results[j].stopped) {
        ++st.no_stop;
        continue;
      }
      auto& s = results[j].sample;
      int& have = s.success ? have_success : have_fail;
      if (have >= (s.success ? want_success : want_fail)) {
        ++st.rejected;
        continue;
      }
      ++have;
      out.push_back(std::move(s));
    }
    next += dc.batch;
  }
  if (stats) *stats = st;
  return out;
}

// --- classifier --------------------------------------------------------------

void ClassifierConfig::validate() const {
  if (hidden < 1 || epochs < 1 || minibatch < 1) throw ConfigError("classifier sizes must be positive");
  if (!(lr > 0)) throw ConfigError("classifier lr must be positive");
  if (!(train_fraction > 0 && train_fraction < 1)) throw ConfigError("train_fraction must be in (0, 1)");
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("threshold must be in (0, 1)");
}

namespace {

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// -log sigmoid(z) for y = 1, -log(1 - sigmoid(z)) for y = 0, without overflow.
double bce_with_logit(double z, bool y) {
  const double m = y ? -z : z;
  return std::max(m, 0.0) + std::log1p(std::exp(-std::abs(m)));
}

}  // namespace

Decision decide_from_probability(double p, double threshold) { return p >= threshold ? Decision::Lift : Decision::Abort; }

double lift_probability(const nn::Classifier<float>& c, const float* x) {
  nn::ClassifierWorkspace<float> ws;
  nn::classifier_forward(c, x, 1, ws);
  return sigmoid(ws.logit[0]);
}

DecisionResult decide(const nn::Classifier<float>& c, const sensing::ObservationVec& obs, double threshold) {
  const double p = lift_probability(c, obs.data());
  return {decide_from_probability(p, threshold), p};
}

ClassifierMetrics evaluate_classifier(const nn::Classifier<float>& c, std::span<const float> x,
                                      std::span<const std::uint8_t> y, double threshold) {
  const int dim = c.hidden.in;
  const int n = static_cast<int>(y.size());
  if (x.size() != y.size() * dim) throw ContractViolation("evaluate_classifier: feature and label counts differ");
  ClassifierMetrics m;
  m.n = n;
  if (n == 0) return m;
  nn::ClassifierWorkspace<float> ws;
  nn::classifier_forward(c, x.data(), n, ws);
  int tp = 0, fp = 0, fn = 0, correct = 0, pos = 0;
  double sum_pos = 0.0, sum_neg = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = sigmoid(ws.logit[i]);
    const bool lift = decide_from_probability(p, threshold) == Decision::Lift;
    const bool truth = y[i] != 0;
    m.loss += bce_with_logit(ws.logit[i], truth) / n;
    correct += lift == truth;
    tp += lift && truth;
    fp += lift && !truth;
    fn += !lift && truth;
    if (truth) {
      ++pos;
      sum_pos += p;
    } else {
      sum_neg += p;
    }
  }
  m.accuracy = static_cast<double>(correct) / n;
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.mean_p_positive = pos > 0 ? sum_pos / pos : 0.0;
  m.mean_p_negative = n - pos > 0 ? sum_neg / (n - pos) : 0.0;
  return m;
}

TrainedClassifier train_classifier(std::span<const float> x, int dim, std::span<const std::uint8_t> y,
                                   const ClassifierConfig& cc, std::uint64_t seed) {
  cc.validate();
  const std::size_t n = y.size();
  if (dim < 1 || x.size() != n * dim) throw ContractViolation("train_classifier: feature and label counts differ");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  RngStream split(seed, "classifier-split");
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[split.below(i)]);
  const std::size_t n_train = static_cast<std::size_t>(std::llround(cc.train_fraction * n));

  auto gather = [&](std::size_t lo, std::size_t hi, std::vector<float>& fx, std::vector<std::uint8_t>& fy) {
    for (std::size_t k = lo; k < hi; ++k) {
      const std::size_t i = order[k];
      fx.insert(fx.end(), x.begin() + i * dim, x.begin() + (i + 1) * dim);
      fy.push_back(y[i] != 0);
    }
  };
  std::vector<float> tx, vx;
  std::vector<std::uint8_t> ty, vy;
  gather(0, n_train, tx, ty);
  gather(n_train, n, vx, vy);
  auto both_classes = [](const std::vector<std::uint8_t>& v) {
    const auto ones = std::count(v.begin(), v.end(), 1);
    return ones > 0 && ones < static_cast<std::ptrdiff_t>(v.size());
  };
  if (!both_classes(ty) || !both_classes(vy)) {
    throw ConfigError("train_classifier: both classes must appear in the training and held-out splits");
  }

  TrainedClassifier out;
  out.threshold = cc.threshold;
  out.net = nn::Classifier<float>(dim, cc.hidden);
  RngStream init(seed, "classifier-init");
  nn::init_dense(out.net.hidden, init, 1.0);
  nn::init_dense(out.net.out, init, 1.0);
  auto grad = out.net;
  std::size_t params = 0;
  for (const auto& t : out.net.tensors()) params += t.data.size();
  ppo::Adam adam(params);
  nn::ClassifierWorkspace<float> ws;

  const std::size_t nt = ty.size();
  const std::size_t mb = std::min<std::size_t>(cc.minibatch, nt);
  std::vector<std::size_t> idx(nt);
  std::vector<float> bx(mb * dim), dlogit(mb);
  std::vector<std::uint8_t> by(mb);
  for (int epoch = 0; epoch < cc.epochs; ++epoch) {
    for (std::size_t i = 0; i < nt; ++i) idx[i] = i;
    RngStream shuffle(seed, "classifier-minibatch", static_cast<std::uint64_t>(epoch));
    for (std::size_t i = nt; i > 1; --i) std::swap(idx[i - 1], idx[shuffle.below(i)]);
    for (std::size_t start = 0; start < nt; start += mb) {
      const std::size_t b = std::min(mb, nt - start);
      for (std::size_t r = 0; r < b; ++r) {
        std::copy_n(tx.begin() + idx[start + r] * dim, dim, bx.begin() + r * dim);
        by[r] = ty[idx[start + r]];
      }
      nn::classifier_forward(out.net, bx.data(), static_cast<int>(b), ws);
      for (std::size_t r = 0; r < b; ++r) {
        dlogit[r] = static_cast<float>((sigmoid(ws.logit[r]) - by[r]) / static_cast<double>(b));
      }
      nn::classifier_backward(out.net, ws, dlogit.data(), grad);
      std::vector<nn::TensorView<const float>> g;
      for (const auto& t : grad.tensors()) g.push_back({t.name, {t.data.data(), t.data.size()}, t.shape});
      adam.step(out.net.tensors(), g, cc.lr);
    }
  }
  out.train = evaluate_classifier(out.net, tx, ty, cc.threshold);
  out.test = evaluate_classifier(out.net, vx, vy, cc.threshold);
  return out;
}

TrainedClassifier train_classifier(std::span<const DecisionSample> samples, const ClassifierConfig& cc,
                                   std::uint64_t seed) {
  std::vector<float> x;
  std::vector<std::uint8_t> y;
  x.reserve(samples.size() * sensing::kObservationSize);
  for (const auto& s : samples) {
    x.insert(x.end(), s.observation.begin(), s.observation.end());
    y.push_back(s.success ? 1 : 0);
  }
  return train_classifier(x, sensing::kObservationSize, y, cc, seed);
}

}  // namespace forklift::decision
