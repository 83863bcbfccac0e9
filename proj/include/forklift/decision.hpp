#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "forklift/env.hpp"
#include "forklift/nn.hpp"

namespace forklift::decision {

// One observation captured after the decision delay, labeled by the loading
// rule. The insertion status and pallet displacement at capture are kept so
// the label can be recomputed.
struct DecisionSample {
  sensing::ObservationVec observation{};
  bool success = false;
  std::uint64_t episode = 0;
  bool injected = false;  // came from a failure-injected episode
  sim::InsertionStatus insertion;
  double displaced_total = 0.0;
  bool operator==(const DecisionSample& o) const;
};

bool relabel(const DecisionSample& s, const sim::SimConfig& cfg);

// --- dataset container ---------------------------------------------------
//   "FKDS" | u32 version | u32 obs schema version | u32 obs size | u64 count |
//   count x { obs f32[obs size], u8 label, u8 injected, u64 episode,
//             f64 depth_left, depth_right, clear_left, clear_right,
//             f64 displaced_total }
inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(std::span<const DecisionSample> samples);
std::vector<DecisionSample> decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const std::filesystem::path& path, std::span<const DecisionSample> samples);
std::vector<DecisionSample> load_dataset(const std::filesystem::path& path);

// --- generation ----------------------------------------------------------

struct DatasetConfig {
  int samples = 10000;
  // Failure injection: a random suffix of the approach gets Gaussian action
  // noise, or the vehicle is stopped early once the fork center is within a
  // random distance of the target depth point.
  double noise_sigma = 0.3;
  int noise_start_max = 120;  // ticks; the suffix starts uniformly in [0, this)
  double early_stop_share = 0.5;
  double early_stop_max = 0.06;  // m
  int episode_budget_factor = 20;  // give up after samples x this episodes
  int batch = 32;                  // episodes planned together
  int workers = 1;

  void validate() const;
};

// Approach controller; one is created per episode so that stateful
// controllers (a policy with its own workspace) can run in parallel.
using Controller = std::function<sim::Action(const env::ForkliftEnv&)>;
using ControllerFactory = std::function<Controller()>;

struct DatasetStats {
  int episodes = 0;
  int injected = 0;
  int no_stop = 0;  // ended without reaching the Stopped phase
  int rejected = 0;  // class already full
};

// Balanced to exactly floor(samples / 2) successes. Throws ConfigError when
// the episode budget runs out first.
std::vector<DecisionSample> generate_dataset(const env::EnvConfig& cfg, const ControllerFactory& controller,
                                             const DatasetConfig& dc, std::uint64_t seed,
                                             DatasetStats* stats = nullptr);

// --- classifier ----------------------------------------------------------

struct ClassifierConfig {
  int hidden = 64;
  int epochs = 40;
  int minibatch = 128;
  double lr = 1e-3;
  double train_fraction = 0.8;
  double threshold = 0.5;

  void validate() const;
};

struct ClassifierMetrics {
  int n = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double mean_p_positive = 0.0;
  double mean_p_negative = 0.0;
  double loss = 0.0;  // mean binary cross-entropy
};

struct TrainedClassifier {
  nn::Classifier<float> net;
  double threshold = 0.5;
  ClassifierMetrics train;
  ClassifierMetrics test;
};

// Rows of `x` are features (dim each), `y` the 0/1 labels. Throws
// ConfigError when either split would hold a single class.
TrainedClassifier train_classifier(std::span<const float> x, int dim, std::span<const std::uint8_t> y,
                                   const ClassifierConfig& cc, std::uint64_t seed);
TrainedClassifier train_classifier(std::span<const DecisionSample> samples, const ClassifierConfig& cc,
                                   std::uint64_t seed);

ClassifierMetrics evaluate_classifier(const nn::Classifier<float>& c, std::span<const float> x,
                                      std::span<const std::uint8_t> y, double threshold);

enum class Decision : std::uint8_t { Lift, Abort };

struct DecisionResult {
  Decision decision = Decision::Abort;
  double probability = 0.0;
};

// Lift iff probability >= threshold.
Decision decide_from_probability(double p, double threshold);

double lift_probability(const nn::Classifier<float>& c, const float* x);
DecisionResult decide(const nn::Classifier<float>& c, const sensing::ObservationVec& obs, double threshold = 0.5);

}  // namespace forklift::decision
